#include "commands.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "ctgpt/synth/corpus.hpp"
#include "ctgpt/tensor/checkpoint.hpp"
#include "ctgpt/train/gradcheck.hpp"
#include "ctgpt/train/trainer.hpp"

namespace ctgpt::cli {
namespace fs = std::filesystem;
using Model = model::ReportModel<float>;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PathError("cannot write " + path.string());
  out << text;
}

void require_file(const fs::path& p) {
  if (!fs::is_regular_file(p)) throw PathError("no such file: " + p.string());
}

fs::path prepare_out(const Common& c) {
  fs::create_directories(c.out);
  return c.out;
}

void save_config(const config::RunConfig& cfg, const fs::path& dir) {
  write_text(dir / "config.json", cfg.to_json());
}

std::vector<std::string> train_reports(const fs::path& manifest) {
  std::vector<std::string> out;
  for (const auto& r : synth::Manifest::load(manifest).records) {
    if (r.split == "train") out.push_back(r.report);
  }
  return out;
}

lm::Vocab vocab_for(const config::RunConfig& cfg, const std::vector<fs::path>& manifests) {
  std::vector<std::string> texts = model::prompt_texts(cfg.model);
  for (const auto& m : manifests) {
    require_file(m);
    for (auto& r : train_reports(m)) texts.push_back(std::move(r));
  }
  return lm::Vocab::build(texts);
}

Model load_model(const config::RunConfig& cfg, const fs::path& ckpt, const fs::path& vocab_path) {
  require_file(ckpt);
  require_file(vocab_path);
  auto m = Model::create(cfg.model, lm::Vocab::load(vocab_path), cfg.seed);
  load_parameters(m.params, read_checkpoint(ckpt));
  return m;
}

std::string loss_tsv(const train::StageResult& r) {
  std::ostringstream s;
  s << "step\tloss\n";
  for (std::size_t i = 0; i < r.losses.size(); ++i) s << i << '\t' << std::setprecision(9) << r.losses[i] << '\n';
  return s.str();
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

config::RunConfig load_config(const Common& c) {
  config::RunConfig cfg;
  if (c.config) {
    require_file(*c.config);
    cfg = config::load_run_config(*c.config);
  }
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

int cmd_prep(const Common& c, const PrepArgs& a) {
  const auto cfg = load_config(c);
  std::vector<fs::path> inputs = a.volumes;
  if (a.manifest) {
    require_file(*a.manifest);
    for (const auto& r : synth::Manifest::load(*a.manifest).records) inputs.push_back(a.manifest->parent_path() / r.volume);
  }
  if (inputs.empty()) throw ConfigError("prep: give --volume or --manifest");
  const auto dir = prepare_out(c);
  std::ostringstream log;
  log << "id\tdims_in\tspacing_in\tdims_out\tmin\tmax\n";
  for (const auto& p : inputs) {
    require_file(p);
    const auto v = volume::read_ctvol(p);
    const auto prepared = volume::prepare(v, cfg.model.prep);
    ParamStore<float> store;
    store.add("volume",
              Tensor<float>::from_data({prepared.dims[0], prepared.dims[1], prepared.dims[2]}, prepared.values),
              true);
    write_checkpoint(store, dir / (v.id + ".prep"));
    const auto [lo, hi] = std::minmax_element(prepared.values.begin(), prepared.values.end());
    log << v.id << '\t' << v.dims[0] << 'x' << v.dims[1] << 'x' << v.dims[2] << '\t' << v.spacing_mm[0] << 'x'
        << v.spacing_mm[1] << 'x' << v.spacing_mm[2] << '\t' << prepared.dims[0] << 'x' << prepared.dims[1] << 'x'
        << prepared.dims[2] << '\t' << *lo << '\t' << *hi << '\n';
  }
  write_text(dir / "prep_log.tsv", log.str());
  std::cout << log.str();
  return kExitOk;
}

int cmd_gen_corpus(const Common& c, const GenCorpusArgs& a) {
  const auto cfg = load_config(c);
  synth::CorpusSpec spec;
  spec.n = a.n;
  spec.style = synth::parse_report_style(a.style);
  spec.dims = cfg.model.prep.target_dims;
  spec.patch = cfg.model.encoder.patch;
  spec.spacing = cfg.model.prep.target_spacing;
  spec.id_prefix = a.prefix;
  spec.seed = cfg.seed;
  try {
    spec.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  const auto manifest = synth::generate_corpus(spec, prepare_out(c));
  std::size_t counts[3] = {0, 0, 0};
  for (const auto& r : manifest.records) ++counts[r.split == "train" ? 0 : r.split == "val" ? 1 : 2];
  std::cout << "wrote " << manifest.records.size() << " records to " << (c.out / "manifest.jsonl").string()
            << " (train " << counts[0] << ", val " << counts[1] << ", test " << counts[2] << ")\n";
  return kExitOk;
}

int cmd_build_vocab(const Common& c, const VocabArgs& a) {
  const auto cfg = load_config(c);
  const auto vocab = vocab_for(cfg, a.manifests);
  const auto dir = prepare_out(c);
  vocab.save(dir / "vocab.tsv");
  std::cout << "vocabulary: " << vocab.size() << " tokens -> " << (dir / "vocab.tsv").string() << "\n";
  return kExitOk;
}

namespace {

int run_stage(const Common& c, const StageArgs& a, train::Stage stage) {
  const auto cfg = load_config(c);
  require_file(a.manifest);
  const auto dir = prepare_out(c);
  const fs::path vocab_path = a.vocab ? *a.vocab : dir / "vocab.tsv";
  if (!a.vocab) vocab_for(cfg, {a.manifest}).save(vocab_path);
  Model m = a.checkpoint ? load_model(cfg, *a.checkpoint, vocab_path)
                         : Model::create(cfg.model, lm::Vocab::load(vocab_path), cfg.seed);
  if (!a.checkpoint && cfg.lm_warmup.epochs > 0) {
    const auto w = train::warmup_lm(m, train_reports(a.manifest), cfg.lm_warmup, derive_seed(cfg.seed, 10));
    write_text(dir / "warmup_loss.tsv", loss_tsv(w));
  }
  const auto data = train::load_corpus(m, a.manifest);
  auto sc = stage == train::Stage::Pretrain ? cfg.pretrain : cfg.finetune;
  sc.stage = stage;
  const auto r = train::train_stage(m, data.train, sc, derive_seed(cfg.seed, stage == train::Stage::Pretrain ? 11 : 12));
  save_config(cfg, dir);
  if (a.vocab) m.vocab.save(dir / "vocab.tsv");
  write_text(dir / "loss.tsv", loss_tsv(r));
  const auto ckpt = dir / (train::to_string(stage) + ".ckpt");
  write_checkpoint(m.params, ckpt);
  std::cout << train::to_string(stage) << ": " << r.steps << " steps, final loss "
            << (r.losses.empty() ? 0.0 : r.losses.back()) << " -> " << ckpt.string() << "\n";
  return kExitOk;
}

}  // namespace

int cmd_pretrain(const Common& c, const StageArgs& a) { return run_stage(c, a, train::Stage::Pretrain); }
int cmd_finetune(const Common& c, const StageArgs& a) { return run_stage(c, a, train::Stage::Finetune); }

int cmd_run_strategy(const Common& c, const StrategyArgs& a) {
  auto cfg = load_config(c);
  if (a.plan) cfg.plan = *a.plan;
  if (a.public_manifest) cfg.corpora["public"] = *a.public_manifest;
  if (a.private_manifest) cfg.corpora["private"] = *a.private_manifest;
  cfg.validate();
  const auto plan = train::StrategyPlan::named(cfg.plan, cfg.pretrain.epochs, cfg.finetune.epochs);
  std::vector<fs::path> manifests;
  for (const auto& [name, path] : cfg.corpora) manifests.push_back(path);
  const auto vocab = vocab_for(cfg, manifests);
  auto m = Model::create(cfg.model, vocab, cfg.seed);
  const auto dir = prepare_out(c);
  save_config(cfg, dir);
  vocab.save(dir / "vocab.tsv");
  if (cfg.lm_warmup.epochs > 0) {
    std::vector<std::string> reports;
    for (const auto& p : manifests) {
      for (auto& r : train_reports(p)) reports.push_back(std::move(r));
    }
    write_text(dir / "warmup_loss.tsv", loss_tsv(train::warmup_lm(m, reports, cfg.lm_warmup, derive_seed(cfg.seed, 10))));
  }
  std::map<std::string, train::CorpusData> corpora;
  for (const auto& [name, path] : cfg.corpora) corpora.emplace(name, train::load_corpus(m, path));
  train::StrategyConfig sc;
  sc.pretrain = cfg.pretrain;
  sc.finetune = cfg.finetune;
  sc.eval_corpus = cfg.eval_corpus;
  sc.eval_split = cfg.eval_split;
  sc.eval = {cfg.temperature, cfg.max_new, derive_seed(cfg.seed, 20)};
  sc.out_dir = dir;
  const auto r = train::run_strategy(m, plan, corpora, sc, cfg.seed);
  const auto& s = r.report.corpus;
  std::cout << "strategy\tBLEU\tROUGE-1\tROUGE-2\tROUGE-L\tMETEOR\n"
            << plan.name << '\t' << fmt(s.bleu) << '\t' << fmt(s.rouge1) << '\t' << fmt(s.rouge2) << '\t'
            << fmt(s.rouge_l) << '\t' << fmt(s.meteor) << '\n';
  return kExitOk;
}

int cmd_generate(const Common& c, const GenerateArgs& a) {
  const auto cfg = load_config(c);
  const auto m = load_model(cfg, a.checkpoint, a.vocab);
  const std::string instr = a.instruction ? *a.instruction : cfg.model.instructions.front();
  for (std::size_t i = 0; i < a.volumes.size(); ++i) {
    require_file(a.volumes[i]);
    const auto v = volume::read_ctvol(a.volumes[i]);
    const auto pooled = m.pooled_tokens(volume::prepare(v, cfg.model.prep));
    lm::GenerationConfig g{a.temperature.value_or(cfg.temperature), a.max_new.value_or(cfg.max_new),
                           derive_seed(cfg.seed, i)};
    std::cout << v.id << '\t' << m.generate_report(pooled, instr, g) << '\n';
  }
  return kExitOk;
}

int cmd_evaluate(const Common& c, const EvaluateArgs& a) {
  const auto cfg = load_config(c);
  const auto m = load_model(cfg, a.checkpoint, a.vocab);
  require_file(a.manifest);
  const auto data = train::load_corpus(m, a.manifest);
  const auto report =
      train::evaluate(m, data.split(a.split), {a.temperature.value_or(cfg.temperature), cfg.max_new, cfg.seed});
  const auto dir = prepare_out(c);
  write_text(dir / "eval_report.tsv", report.to_tsv());
  write_text(dir / "eval_report.json", report.to_json());
  std::cout << report.to_tsv();
  return kExitOk;
}

int cmd_temp_sweep(const Common& c, const EvaluateArgs& a) {
  const auto cfg = load_config(c);
  const auto m = load_model(cfg, a.checkpoint, a.vocab);
  require_file(a.manifest);
  const auto data = train::load_corpus(m, a.manifest);
  const auto temps = a.temperatures.empty() ? cfg.sweep_temperatures : a.temperatures;
  std::ostringstream t;
  t << "temperature\tBLEU\tROUGE-1\tROUGE-2\tROUGE-L\tMETEOR\tdistinct-1\tdistinct-2\n";
  for (double temp : temps) {
    if (temp < 0.0) throw ConfigError("temperatures must be >= 0");
    const auto s = train::evaluate(m, data.split(a.split), {temp, cfg.max_new, cfg.seed}).corpus;
    t << fmt(temp) << '\t' << fmt(s.bleu) << '\t' << fmt(s.rouge1) << '\t' << fmt(s.rouge2) << '\t'
      << fmt(s.rouge_l) << '\t' << fmt(s.meteor) << '\t' << fmt(s.distinct1) << '\t' << fmt(s.distinct2) << '\n';
  }
  write_text(prepare_out(c) / "temp_sweep.tsv", t.str());
  std::cout << t.str();
  return kExitOk;
}

int cmd_gradcheck(const Common& c, const GradcheckArgs& a) {
  const auto cfg = load_config(c);
  synth::CorpusSpec spec;
  spec.n = 10;
  spec.dims = cfg.model.prep.target_dims;
  spec.patch = cfg.model.encoder.patch;
  spec.spacing = cfg.model.prep.target_spacing;
  spec.seed = cfg.seed;
  const auto rec = synth::generate_records(spec).front();
  auto texts = model::prompt_texts(cfg.model);
  texts.push_back(rec.report);
  auto m = model::ReportModel<float>::create(cfg.model, lm::Vocab::build(texts), cfg.seed).cast<double>();
  train::randomize_lora_b(m.params, 0.02, derive_seed(cfg.seed, 30));
  if (a.all_params) {
    m.params.freeze_all_except({""});
  } else {
    m.params.freeze_all_except(train::trainable_prefixes(train::Stage::Finetune));
  }
  train::GradcheckOptions opts;
  opts.eps = a.eps;
  opts.rel_tol = a.rel_tol;
  opts.max_per_param = a.max_per_param;
  const auto r = train::gradcheck(m, volume::prepare(rec.volume, cfg.model.prep), cfg.model.instructions.front(),
                                  rec.report, opts);
  for (const auto& e : r.entries) {
    if (!e.ok) {
      std::cout << "FAIL " << e.param << '[' << e.index << "] analytic " << e.analytic << " numeric " << e.numeric
                << " rel " << e.rel_error << '\n';
    }
  }
  std::cout << "checked " << r.entries.size() << " scalars, failed " << r.failed << ", max rel error "
            << r.max_rel_error << ", max abs error " << r.max_abs_error << '\n';
  return r.passed() ? kExitOk : kExitContract;
}

}  // namespace ctgpt::cli
