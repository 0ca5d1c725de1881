#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "ctgpt/errors.hpp"

using namespace ctgpt;

namespace {

void add_common(CLI::App* sub, cli::Common& c) {
  sub->add_option("--config", c.config, "Run configuration (JSON with comments)");
  sub->add_option("--seed", c.seed, "Overrides the configured seed");
  sub->add_option("--out", c.out, "Output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ctgpt: CT report generation pipeline"};
  app.require_subcommand(1);
  cli::Common common;
  int rc = cli::kExitOk;

  cli::PrepArgs prep;
  auto* s_prep = app.add_subcommand("prep", "Preprocess CTVL volumes into normalized model inputs");
  add_common(s_prep, common);
  s_prep->add_option("--volume", prep.volumes, "CTVL volume (repeatable)");
  s_prep->add_option("--manifest", prep.manifest, "Prepare every volume of a manifest");
  s_prep->callback([&] { rc = cli::cmd_prep(common, prep); });

  cli::GenCorpusArgs gen;
  auto* s_gen = app.add_subcommand("gen-corpus", "Generate a synthetic corpus");
  add_common(s_gen, common);
  s_gen->add_option("--style", gen.style, "long_report or short_report");
  s_gen->add_option("--n", gen.n, "Number of records");
  s_gen->add_option("--prefix", gen.prefix, "Record id prefix");
  s_gen->callback([&] { rc = cli::cmd_gen_corpus(common, gen); });

  cli::VocabArgs vocab;
  auto* s_vocab = app.add_subcommand("build-vocab", "Build the word vocabulary from training reports");
  add_common(s_vocab, common);
  s_vocab->add_option("--manifest", vocab.manifests, "Corpus manifest (repeatable)")->required();
  s_vocab->callback([&] { rc = cli::cmd_build_vocab(common, vocab); });

  cli::StageArgs pre, fine;
  auto* s_pre = app.add_subcommand("pretrain", "Stage 1: train the projector");
  add_common(s_pre, common);
  s_pre->add_option("--manifest", pre.manifest, "Training corpus manifest")->required();
  s_pre->add_option("--vocab", pre.vocab, "Vocabulary TSV (built from the manifest if absent)");
  s_pre->add_option("--checkpoint", pre.checkpoint, "Start from this checkpoint instead of a fresh model");
  s_pre->callback([&] { rc = cli::cmd_pretrain(common, pre); });

  auto* s_fine = app.add_subcommand("finetune", "Stage 2: train the projector and LoRA adapters");
  add_common(s_fine, common);
  s_fine->add_option("--manifest", fine.manifest, "Training corpus manifest")->required();
  s_fine->add_option("--vocab", fine.vocab, "Vocabulary TSV")->required();
  s_fine->add_option("--checkpoint", fine.checkpoint, "Stage-1 checkpoint")->required();
  s_fine->callback([&] { rc = cli::cmd_finetune(common, fine); });

  cli::StrategyArgs strat;
  auto* s_strat = app.add_subcommand("run-strategy", "Run a T1/T2/T3 training strategy end to end");
  add_common(s_strat, common);
  s_strat->add_option("--plan", strat.plan, "T1, T2 or T3");
  s_strat->add_option("--public", strat.public_manifest, "Public-style corpus manifest");
  s_strat->add_option("--private", strat.private_manifest, "Private-style corpus manifest");
  s_strat->callback([&] { rc = cli::cmd_run_strategy(common, strat); });

  cli::GenerateArgs genr;
  auto* s_genr = app.add_subcommand("generate", "Generate reports for volumes");
  add_common(s_genr, common);
  s_genr->add_option("--checkpoint", genr.checkpoint, "Model checkpoint")->required();
  s_genr->add_option("--vocab", genr.vocab, "Vocabulary TSV")->required();
  s_genr->add_option("--volume", genr.volumes, "CTVL volume (repeatable)")->required();
  s_genr->add_option("--temperature", genr.temperature, "Sampling temperature (0 = greedy)");
  s_genr->add_option("--max-new", genr.max_new, "Maximum generated tokens");
  s_genr->add_option("--instruction", genr.instruction, "Instruction text");
  s_genr->callback([&] { rc = cli::cmd_generate(common, genr); });

  cli::EvaluateArgs eval, sweep;
  auto* s_eval = app.add_subcommand("evaluate", "Score generations against a manifest split");
  add_common(s_eval, common);
  s_eval->add_option("--checkpoint", eval.checkpoint, "Model checkpoint")->required();
  s_eval->add_option("--vocab", eval.vocab, "Vocabulary TSV")->required();
  s_eval->add_option("--manifest", eval.manifest, "Corpus manifest")->required();
  s_eval->add_option("--split", eval.split, "train, val or test");
  s_eval->add_option("--temperature", eval.temperature, "Sampling temperature");
  s_eval->callback([&] { rc = cli::cmd_evaluate(common, eval); });

  auto* s_sweep = app.add_subcommand("temp-sweep", "Metrics as a function of sampling temperature");
  add_common(s_sweep, common);
  s_sweep->add_option("--checkpoint", sweep.checkpoint, "Model checkpoint")->required();
  s_sweep->add_option("--vocab", sweep.vocab, "Vocabulary TSV")->required();
  s_sweep->add_option("--manifest", sweep.manifest, "Corpus manifest")->required();
  s_sweep->add_option("--split", sweep.split, "train, val or test");
  s_sweep->add_option("--temperatures", sweep.temperatures, "Temperatures (default from config)");
  s_sweep->callback([&] { rc = cli::cmd_temp_sweep(common, sweep); });

  cli::GradcheckArgs gc;
  auto* s_gc = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  add_common(s_gc, common);
  s_gc->add_flag("--all-params", gc.all_params, "Also check encoder and base LM parameters");
  s_gc->add_option("--max-per-param", gc.max_per_param, "Check at most this many scalars per parameter");
  s_gc->add_option("--eps", gc.eps, "Finite-difference step");
  s_gc->add_option("--rel-tol", gc.rel_tol, "Relative tolerance");
  s_gc->callback([&] { rc = cli::cmd_gradcheck(common, gc); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return cli::kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return cli::kExitConfig;
  } catch (const PathError& e) {
    std::cerr << "path error: " << e.what() << "\n";
    return cli::kExitPath;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return cli::kExitData;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return cli::kExitData;
  } catch (const ContractError& e) {
    std::cerr << "contract violation: " << e.what() << "\n";
    return cli::kExitContract;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kExitOther;
  }
  return rc;
}
