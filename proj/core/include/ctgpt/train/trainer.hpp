#pragma once

// Two-stage training (projector-only, then projector + LoRA), the base-LM
// text warmup, and T1/T2/T3 strategy orchestration.

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ctgpt/metrics/nlg.hpp"
#include "ctgpt/model/report_model.hpp"
#include "ctgpt/tensor/optim.hpp"

namespace ctgpt::train {

enum class Stage { Pretrain, Finetune };

Stage parse_stage(const std::string& s);
std::string to_string(Stage s);

/// Parameter prefixes a stage may update.
std::vector<std::string> trainable_prefixes(Stage s);

struct StageConfig {
  Stage stage = Stage::Pretrain;
  double lr_max = 1e-3;
  std::size_t epochs = 1;
  std::size_t batch_size = 1;
  double warmup_fraction = 0.03;
  double clip_norm = 1.0;  // <= 0 disables clipping
  std::size_t max_steps = 0;  // 0: no cap
  bool random_instruction = true;
  AdamConfig adam;

  static StageConfig pretrain(std::size_t epochs = 5);
  static StageConfig finetune(std::size_t epochs = 2);
  void validate() const;
};

/// One cached training record: the frozen encoder's pooled tokens plus text.
struct Example {
  std::string id;
  Tensor<float> pooled;
  std::string report;
};

struct StageResult {
  std::vector<double> losses;  // one per optimizer step
  std::size_t steps = 0;
};

using StepCallback = std::function<void(std::size_t step, double loss)>;

/// Runs epochs x ceil(|examples| / batch) optimizer steps. Parameters outside
/// the stage's trainable set are verified bitwise unchanged after every epoch
/// (ContractError otherwise).
StageResult train_stage(model::ReportModel<float>& m, const std::vector<Example>& examples,
                        const StageConfig& cfg, std::uint64_t seed, const StepCallback& on_step = {});

/// What fills the image slot during base-LM warmup: zeros, or the embeddings
/// of a random subset of the report's distinct words at random slot positions
/// (PAD elsewhere), which teaches the decoder to write from slot content.
enum class WarmupSlot { Zeros, Keywords };

/// Causal LM training of the base decoder ("lm." parameters) on report text
/// only. Stands in for a pretrained language model.
struct LmWarmupConfig {
  std::size_t epochs = 0;
  WarmupSlot slot = WarmupSlot::Keywords;
  double keep_prob = 0.7;
  /// Draw each sample's keep probability uniformly from [0, keep_prob).
  bool random_keep = false;
  /// Sum several words into one slot row instead of one word per row.
  bool group_words = true;
  double lr_max = 3e-3;
  double warmup_fraction = 0.03;
  double clip_norm = 1.0;
};

StageResult warmup_lm(model::ReportModel<float>& m, const std::vector<std::string>& reports,
                      const LmWarmupConfig& cfg, std::uint64_t seed);

/// FNV-1a over every parameter whose frozen flag equals `frozen`.
std::uint64_t hash_params(const ParamStore<float>& params, bool frozen);

struct Phase {
  Stage stage = Stage::Pretrain;
  std::string corpus;
  std::size_t epochs = 1;
};

struct StrategyPlan {
  std::string name;
  std::vector<Phase> phases;

  /// T1, T2 or T3.
  static StrategyPlan named(const std::string& name, std::size_t pretrain_epochs = 5,
                            std::size_t finetune_epochs = 2);
};

struct CorpusData {
  std::vector<Example> train;
  std::vector<Example> val;
  std::vector<Example> test;

  const std::vector<Example>& split(const std::string& name) const;
};

/// Loads a manifest, prepares every volume and caches its pooled tokens.
CorpusData load_corpus(const model::ReportModel<float>& m, const std::filesystem::path& manifest);

struct EvalConfig {
  double temperature = 0.7;
  std::size_t max_new = 96;
  std::uint64_t seed = 0;
};

/// One generation per example with the first configured instruction.
metrics::EvalReport evaluate(const model::ReportModel<float>& m, const std::vector<Example>& examples,
                             const EvalConfig& cfg);

struct StrategyConfig {
  StageConfig pretrain = StageConfig::pretrain();
  StageConfig finetune = StageConfig::finetune();
  std::string eval_corpus = "private";
  std::string eval_split = "val";
  EvalConfig eval;
  std::optional<std::filesystem::path> out_dir;
};

struct StrategyResult {
  std::vector<StageResult> phases;
  metrics::EvalReport report;
};

/// Runs the plan's phases in order on `m`, then evaluates. With an out_dir,
/// writes loss.tsv, phase<i>_<stage>.ckpt and eval_report.{tsv,json}.
StrategyResult run_strategy(model::ReportModel<float>& m, const StrategyPlan& plan,
                            const std::map<std::string, CorpusData>& corpora, const StrategyConfig& cfg,
                            std::uint64_t seed);

}  // namespace ctgpt::train
