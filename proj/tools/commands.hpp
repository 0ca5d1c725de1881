#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ctgpt/config/run_config.hpp"

namespace ctgpt::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitOther = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitPath = 3;
inline constexpr int kExitData = 4;
inline constexpr int kExitContract = 5;
inline constexpr int kExitUsage = 64;

struct Common {
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out = "out";
};

config::RunConfig load_config(const Common& c);

struct PrepArgs {
  std::vector<std::filesystem::path> volumes;
  std::optional<std::filesystem::path> manifest;
};
int cmd_prep(const Common& c, const PrepArgs& a);

struct GenCorpusArgs {
  std::string style = "short_report";
  std::size_t n = 40;
  std::string prefix = "rec";
};
int cmd_gen_corpus(const Common& c, const GenCorpusArgs& a);

struct VocabArgs {
  std::vector<std::filesystem::path> manifests;
};
int cmd_build_vocab(const Common& c, const VocabArgs& a);

struct StageArgs {
  std::filesystem::path manifest;
  std::optional<std::filesystem::path> vocab;
  std::optional<std::filesystem::path> checkpoint;
};
int cmd_pretrain(const Common& c, const StageArgs& a);
int cmd_finetune(const Common& c, const StageArgs& a);

struct StrategyArgs {
  std::optional<std::string> plan;
  std::optional<std::filesystem::path> public_manifest;
  std::optional<std::filesystem::path> private_manifest;
};
int cmd_run_strategy(const Common& c, const StrategyArgs& a);

struct GenerateArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path vocab;
  std::vector<std::filesystem::path> volumes;
  std::optional<double> temperature;
  std::optional<std::size_t> max_new;
  std::optional<std::string> instruction;
};
int cmd_generate(const Common& c, const GenerateArgs& a);

struct EvaluateArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path vocab;
  std::filesystem::path manifest;
  std::string split = "val";
  std::optional<double> temperature;
  std::vector<double> temperatures;
};
int cmd_evaluate(const Common& c, const EvaluateArgs& a);
int cmd_temp_sweep(const Common& c, const EvaluateArgs& a);

struct GradcheckArgs {
  bool all_params = false;
  std::size_t max_per_param = 0;
  double eps = 1e-5;
  double rel_tol = 1e-4;
};
int cmd_gradcheck(const Common& c, const GradcheckArgs& a);

}  // namespace ctgpt::cli
