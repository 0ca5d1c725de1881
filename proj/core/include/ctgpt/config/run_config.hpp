#pragma once

// Run configuration: a JSON document (comments allowed) with every model,
// training and generation setting. Missing keys keep their defaults.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ctgpt/model/report_model.hpp"
#include "ctgpt/train/trainer.hpp"

namespace ctgpt::config {

struct RunConfig {
  model::ModelConfig model = model::desk_config();
  train::LmWarmupConfig lm_warmup;
  train::StageConfig pretrain = train::StageConfig::pretrain();
  train::StageConfig finetune = train::StageConfig::finetune();
  std::string plan = "T1";
  std::string eval_corpus = "private";
  std::string eval_split = "val";
  double temperature = 0.7;
  std::size_t max_new = 96;
  std::vector<double> sweep_temperatures{0.1, 0.3, 0.5, 0.7, 0.9};
  std::map<std::string, std::filesystem::path> corpora;
  std::uint64_t seed = 0;

  /// Throws ConfigError naming the first violated constraint.
  void validate() const;

  std::string to_json() const;
  /// FNV-1a of the canonical JSON form.
  std::uint64_t hash() const;
};

RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace ctgpt::config
