#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ctgpt/lm/vocab.hpp"
#include "ctgpt/tensor/random.hpp"

namespace ctgpt::lm {

const std::string& default_system_message();

/// The instruction set prompts are drawn from.
const std::vector<std::string>& default_instructions();

/// Uniform draw from `instructions`.
const std::string& choose_instruction(Rng& rng, const std::vector<std::string>& instructions);

/// One tokenized VQA record.
///
/// Layout: [BOS] system [STOP] <image> instruction [STOP] answer [STOP]
/// loss_mask is 1 on the answer tokens and the final STOP, 0 elsewhere.
/// Inference prompts stop after the second STOP and carry an all-zero mask.
struct PromptSample {
  std::string system_message;
  std::string instruction;
  std::optional<std::string> answer;
  std::vector<std::int64_t> token_ids;
  std::vector<std::uint8_t> loss_mask;
};

/// Throws ArgumentError when `training` is set and no answer is given.
PromptSample assemble_prompt(const std::string& system_message, const std::string& instruction,
                             const std::optional<std::string>& answer, const Vocab& vocab,
                             bool training);

/// Sequence positions after the sentinel is replaced by `n_visual` visual
/// tokens. Visual slots carry id -1 and mask 0.
struct SplicedTargets {
  std::vector<std::int64_t> ids;
  std::vector<std::uint8_t> mask;
  std::size_t n_pre = 0;
  std::size_t n_visual = 0;
  std::size_t n_post = 0;
};

SplicedTargets splice_targets(const PromptSample& sample, std::size_t n_visual);

}  // namespace ctgpt::lm
