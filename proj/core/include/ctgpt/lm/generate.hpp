#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ctgpt/lm/model.hpp"

namespace ctgpt::lm {

struct GenerationConfig {
  double temperature = 0.7;
  std::size_t max_new = 64;
  std::uint64_t seed = 0;
};

/// Draws the next id from softmax(logits / temperature). Temperature 0 is
/// argmax with ties broken towards the lowest id.
template <typename T>
std::int64_t sample_next(std::span<const T> logits, double temperature, Rng& rng);

/// Autoregressive decoding from `prefix` ([1, L0, d]). Stops at STOP/EOS
/// (not included in the result), after `max_new` tokens, or when the
/// sequence reaches max_seq. Returns only the generated ids.
template <typename T>
std::vector<std::int64_t> generate(const Tensor<T>& prefix, const ParamStore<T>& store,
                                   const LmConfig& cfg, const LoraConfig* lora,
                                   const GenerationConfig& gen);

}  // namespace ctgpt::lm
