#include "ctgpt/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "../common/binary_io.hpp"
#include "ctgpt/synth/corpus.hpp"
#include "ctgpt/tensor/checkpoint.hpp"
#include "ctgpt/tensor/ops.hpp"

namespace ctgpt::train {
namespace {

void apply_freeze(ParamStore<float>& params, const std::vector<std::string>& prefixes) {
  params.freeze_all_except(prefixes);
}

struct Loop {
  ParamStore<float>& params;
  OptimizerState state;
  double clip_norm;

  void step() {
    if (clip_norm > 0.0) clip_grad_norm(params, clip_norm);
    adam_step(params, state);
  }
};

std::size_t steps_per_epoch(std::size_t n, std::size_t batch) { return (n + batch - 1) / batch; }

}  // namespace

Stage parse_stage(const std::string& s) {
  if (s == "pretrain") return Stage::Pretrain;
  if (s == "finetune") return Stage::Finetune;
  throw ArgumentError("unknown stage '" + s + "' (expected pretrain or finetune)");
}

std::string to_string(Stage s) { return s == Stage::Pretrain ? "pretrain" : "finetune"; }

std::vector<std::string> trainable_prefixes(Stage s) {
  if (s == Stage::Pretrain) return {"projector."};
  return {"projector.", "lora."};
}

StageConfig StageConfig::pretrain(std::size_t epochs) {
  StageConfig c;
  c.stage = Stage::Pretrain;
  c.lr_max = 1e-3;
  c.epochs = epochs;
  return c;
}

StageConfig StageConfig::finetune(std::size_t epochs) {
  StageConfig c;
  c.stage = Stage::Finetune;
  c.lr_max = 2e-4;
  c.epochs = epochs;
  return c;
}

void StageConfig::validate() const {
  if (!(lr_max > 0.0)) throw ArgumentError("stage lr must be > 0");
  if (epochs == 0) throw ArgumentError("stage epochs must be >= 1");
  if (batch_size == 0) throw ArgumentError("stage batch_size must be >= 1");
  if (warmup_fraction < 0.0 || warmup_fraction >= 1.0) throw ArgumentError("warmup_fraction must be in [0, 1)");
}

std::uint64_t hash_params(const ParamStore<float>& params, bool frozen) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : params) {
    if (p.frozen != frozen) continue;
    h = fnv1a(p.name, h);
    h = fnv1a(p.tensor.data().data(), p.tensor.numel() * sizeof(float), h);
  }
  return h;
}

StageResult train_stage(model::ReportModel<float>& m, const std::vector<Example>& examples,
                        const StageConfig& cfg, std::uint64_t seed, const StepCallback& on_step) {
  cfg.validate();
  if (examples.empty()) throw DataError("train_stage: empty corpus");
  for (const auto& ex : examples) {
    if (ex.report.empty()) throw DataError("train_stage: record '" + ex.id + "' has an empty report");
    if (!ex.pooled.defined()) throw DataError("train_stage: record '" + ex.id + "' has no visual tokens");
  }
  apply_freeze(m.params, trainable_prefixes(cfg.stage));
  const auto frozen_hash = hash_params(m.params, true);

  const std::size_t per_epoch = steps_per_epoch(examples.size(), cfg.batch_size);
  std::size_t total = per_epoch * cfg.epochs;
  if (cfg.max_steps > 0) total = std::min(total, cfg.max_steps);

  Loop loop{m.params, {}, cfg.clip_norm};
  loop.state.schedule = CosineSchedule::with_warmup_fraction(cfg.lr_max, total, cfg.warmup_fraction);
  loop.state.adam = cfg.adam;

  StageResult result;
  Rng instr_rng(derive_seed(seed, 0x1A57));
  std::vector<std::size_t> order(examples.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs && result.steps < total; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(seed, epoch));
    shuffle_rng.shuffle(order.begin(), order.end());
    for (std::size_t b = 0; b < per_epoch && result.steps < total; ++b) {
      const std::size_t lo = b * cfg.batch_size;
      const std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
      m.params.clear_grads();
      double batch_loss = 0.0;
      for (std::size_t i = lo; i < hi; ++i) {
        const auto& ex = examples[order[i]];
        const auto& instr = cfg.random_instruction ? lm::choose_instruction(instr_rng, m.config.instructions)
                                                   : m.config.instructions.front();
        auto loss = m.report_loss(ex.pooled, instr, ex.report);
        batch_loss += static_cast<double>(loss.item());
        if (hi - lo > 1) loss = ops::scale(loss, 1.0f / static_cast<float>(hi - lo));
        loss.backward();
      }
      loop.step();
      batch_loss /= static_cast<double>(hi - lo);
      result.losses.push_back(batch_loss);
      if (on_step) on_step(result.steps, batch_loss);
      ++result.steps;
    }
    if (hash_params(m.params, true) != frozen_hash) {
      throw ContractError("frozen parameters changed during " + to_string(cfg.stage) + " epoch " +
                          std::to_string(epoch));
    }
  }
  m.params.clear_grads();
  return result;
}

StageResult warmup_lm(model::ReportModel<float>& m, const std::vector<std::string>& reports,
                      const LmWarmupConfig& cfg, std::uint64_t seed) {
  StageResult result;
  if (cfg.epochs == 0) return result;
  if (reports.empty()) throw DataError("warmup_lm: no report text");

  // Only the base decoder is trained here; adapters stay at their zero delta.
  m.params.freeze_all_except({"lm."});

  const std::size_t total = reports.size() * cfg.epochs;
  Loop loop{m.params, {}, cfg.clip_norm};
  loop.state.schedule = CosineSchedule::with_warmup_fraction(cfg.lr_max, total, cfg.warmup_fraction);

  const std::size_t n_slot = m.config.visual_tokens();
  const std::size_t d = m.config.lm.d_model;
  const auto blank = Tensor<float>::zeros({1, n_slot, d});
  Rng instr_rng(derive_seed(seed, 0x1A57));
  Rng slot_rng(derive_seed(seed, 0x5107));
  std::vector<std::size_t> order(reports.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(seed, epoch));
    shuffle_rng.shuffle(order.begin(), order.end());
    for (auto idx : order) {
      m.params.clear_grads();
      const auto& instr = lm::choose_instruction(instr_rng, m.config.instructions);
      const auto prompt = lm::assemble_prompt(m.config.system_message, instr, reports[idx], m.vocab, true);
      Tensor<float> slot = blank;
      if (cfg.slot == WarmupSlot::Keywords) {
        auto words = m.vocab.encode(reports[idx]);
        std::sort(words.begin(), words.end());
        words.erase(std::unique(words.begin(), words.end()), words.end());
        const double keep = cfg.random_keep ? slot_rng.uniform() * cfg.keep_prob : cfg.keep_prob;
        std::vector<std::int64_t> kept;
        for (auto w : words) {
          if (slot_rng.uniform() < keep) kept.push_back(w);
        }
        if (!kept.empty()) {
          slot_rng.shuffle(kept.begin(), kept.end());
          const std::size_t k = kept.size();
          const std::size_t groups = cfg.group_words ? 1 + slot_rng.below(std::min(k, n_slot)) : std::min(k, n_slot);
          std::vector<std::size_t> pos(n_slot);
          std::iota(pos.begin(), pos.end(), 0);
          slot_rng.shuffle(pos.begin(), pos.end());
          // Row pos[g] of the slot sums the embeddings of the words in group g.
          std::vector<float> assign(n_slot * k, 0.0f);
          for (std::size_t i = 0; i < k; ++i) {
            const std::size_t g = i < groups ? i : slot_rng.below(groups);
            if (!cfg.group_words && i >= groups) break;
            assign[pos[g] * k + i] = 1.0f;
          }
          auto emb = lm::embed_tokens<float>(kept, m.params);
          slot = ops::reshape(ops::matmul(Tensor<float>::from_data({n_slot, k}, std::move(assign)), emb),
                              {1, n_slot, d});
        }
      }
      auto loss = m.prompt_loss(slot, prompt);
      loss.backward();
      loop.step();
      result.losses.push_back(static_cast<double>(loss.item()));
      ++result.steps;
    }
  }
  m.params.clear_grads();
  m.params.freeze_all_except(trainable_prefixes(Stage::Pretrain));
  return result;
}

StrategyPlan StrategyPlan::named(const std::string& name, std::size_t e1, std::size_t e2) {
  if (name == "T1") return {name, {{Stage::Pretrain, "public", e1}, {Stage::Finetune, "private", e2}}};
  if (name == "T2") return {name, {{Stage::Pretrain, "private", e1}, {Stage::Finetune, "private", e2}}};
  if (name == "T3") return {name, {{Stage::Pretrain, "public", e1}, {Stage::Finetune, "public", e2}}};
  throw ArgumentError("unknown strategy '" + name + "' (expected T1, T2 or T3)");
}

const std::vector<Example>& CorpusData::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "val") return val;
  if (name == "test") return test;
  throw ArgumentError("unknown split '" + name + "'");
}

CorpusData load_corpus(const model::ReportModel<float>& m, const std::filesystem::path& manifest_path) {
  const auto manifest = synth::Manifest::load(manifest_path);
  if (manifest.records.empty()) throw DataError("manifest " + manifest_path.string() + " has no records");
  const auto root = manifest_path.parent_path();
  CorpusData data;
  for (const auto& r : manifest.records) {
    if (r.report.empty()) throw DataError("record '" + r.id() + "' has an empty report");
    const auto vol = volume::read_ctvol(root / r.volume);
    const auto prepared = volume::prepare(vol, m.config.prep);
    Example ex{r.id(), m.pooled_tokens(prepared), r.report};
    if (r.split == "train") {
      data.train.push_back(std::move(ex));
    } else if (r.split == "val") {
      data.val.push_back(std::move(ex));
    } else {
      data.test.push_back(std::move(ex));
    }
  }
  return data;
}

metrics::EvalReport evaluate(const model::ReportModel<float>& m, const std::vector<Example>& examples,
                             const EvalConfig& cfg) {
  if (examples.empty()) throw DataError("evaluate: no examples");
  std::vector<metrics::Generation> gens;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    lm::GenerationConfig g{cfg.temperature, cfg.max_new, derive_seed(cfg.seed, i)};
    gens.push_back({examples[i].id, m.generate_report(examples[i].pooled, m.config.instructions.front(), g),
                    examples[i].report});
  }
  auto report = metrics::evaluate_pairs(std::move(gens));
  std::ostringstream t;
  t << cfg.temperature;
  report.metadata["temperature"] = t.str();
  report.metadata["seed"] = std::to_string(cfg.seed);
  return report;
}

StrategyResult run_strategy(model::ReportModel<float>& m, const StrategyPlan& plan,
                            const std::map<std::string, CorpusData>& corpora, const StrategyConfig& cfg,
                            std::uint64_t seed) {
  for (const auto& ph : plan.phases) {
    if (!corpora.count(ph.corpus)) throw ConfigError("strategy " + plan.name + ": missing corpus '" + ph.corpus + "'");
  }
  if (!corpora.count(cfg.eval_corpus)) throw ConfigError("missing evaluation corpus '" + cfg.eval_corpus + "'");

  StrategyResult result;
  std::ostringstream loss_log;
  loss_log << "step\tloss\n";
  std::size_t global_step = 0;
  for (std::size_t i = 0; i < plan.phases.size(); ++i) {
    const auto& ph = plan.phases[i];
    StageConfig sc = ph.stage == Stage::Pretrain ? cfg.pretrain : cfg.finetune;
    sc.stage = ph.stage;
    sc.epochs = ph.epochs;
    auto stage_result = train_stage(m, corpora.at(ph.corpus).train, sc, derive_seed(seed, 100 + i),
                                    [&](std::size_t, double loss) {
                                      loss_log << global_step++ << '\t' << std::setprecision(9) << loss << '\n';
                                    });
    if (cfg.out_dir) {
      write_checkpoint(m.params, *cfg.out_dir / ("phase" + std::to_string(i + 1) + "_" + to_string(ph.stage) + ".ckpt"));
    }
    result.phases.push_back(std::move(stage_result));
  }
  result.report = evaluate(m, corpora.at(cfg.eval_corpus).split(cfg.eval_split), cfg.eval);
  result.report.metadata["strategy"] = plan.name;
  result.report.metadata["corpus"] = cfg.eval_corpus + "/" + cfg.eval_split;
  if (cfg.out_dir) {
    detail::write_file((*cfg.out_dir / "loss.tsv").string(), loss_log.str());
    detail::write_file((*cfg.out_dir / "eval_report.tsv").string(), result.report.to_tsv());
    detail::write_file((*cfg.out_dir / "eval_report.json").string(), result.report.to_json());
  }
  return result;
}

}  // namespace ctgpt::train
