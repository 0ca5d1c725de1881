#include "ctgpt/lm/prompt.hpp"

#include <algorithm>

#include "ctgpt/errors.hpp"

namespace ctgpt::lm {

const std::string& default_system_message() {
  static const std::string kMessage = "You are a radiology assistant. Describe the chest CT scan.";
  return kMessage;
}

const std::vector<std::string>& default_instructions() {
  static const std::vector<std::string> kInstructions = {
      "What findings do you observe in this CT scan?",
      "Could you summarize the observations from this CT scan?",
      "What abnormalities are present in this CT scan?",
      "How would you interpret the results of this CT scan?",
  };
  return kInstructions;
}

const std::string& choose_instruction(Rng& rng, const std::vector<std::string>& instructions) {
  if (instructions.empty()) throw ArgumentError("instruction set is empty");
  return instructions[rng.below(instructions.size())];
}

PromptSample assemble_prompt(const std::string& system_message, const std::string& instruction,
                             const std::optional<std::string>& answer, const Vocab& vocab,
                             bool training) {
  if (training && !answer) throw ArgumentError("assemble_prompt: training sample needs an answer");
  PromptSample s{system_message, instruction, answer, {}, {}};
  auto push = [&s](std::int64_t id, std::uint8_t m) {
    s.token_ids.push_back(id);
    s.loss_mask.push_back(m);
  };
  push(kBosId, 0);
  for (auto id : vocab.encode(system_message)) push(id, 0);
  push(kStopId, 0);
  push(kImageSentinel, 0);
  for (auto id : vocab.encode(instruction)) push(id, 0);
  push(kStopId, 0);
  if (answer) {
    for (auto id : vocab.encode(*answer)) push(id, 1);
    push(kStopId, 1);
  }
  return s;
}

SplicedTargets splice_targets(const PromptSample& sample, std::size_t n_visual) {
  const auto& ids = sample.token_ids;
  const auto count = std::count(ids.begin(), ids.end(), kImageSentinel);
  if (count != 1) throw ArgumentError("splice_targets: expected exactly one image sentinel");
  const auto pos = static_cast<std::size_t>(std::find(ids.begin(), ids.end(), kImageSentinel) - ids.begin());
  SplicedTargets out;
  out.n_pre = pos;
  out.n_visual = n_visual;
  out.n_post = ids.size() - pos - 1;
  out.ids.reserve(ids.size() - 1 + n_visual);
  out.ids.insert(out.ids.end(), ids.begin(), ids.begin() + pos);
  out.mask.insert(out.mask.end(), sample.loss_mask.begin(), sample.loss_mask.begin() + pos);
  out.ids.insert(out.ids.end(), n_visual, -1);
  out.mask.insert(out.mask.end(), n_visual, 0);
  out.ids.insert(out.ids.end(), ids.begin() + pos + 1, ids.end());
  out.mask.insert(out.mask.end(), sample.loss_mask.begin() + pos + 1, sample.loss_mask.end());
  return out;
}

}  // namespace ctgpt::lm
