#pragma once

// Encoder -> adapter -> projector -> spliced prompt -> decoder LM, bundled
// with its vocabulary and one parameter store.

#include <optional>
#include <string>
#include <vector>

#include "ctgpt/adapter/adapter.hpp"
#include "ctgpt/encoder/encoder.hpp"
#include "ctgpt/lm/generate.hpp"
#include "ctgpt/lm/model.hpp"
#include "ctgpt/lm/prompt.hpp"
#include "ctgpt/lm/vocab.hpp"
#include "ctgpt/volume/prep.hpp"

namespace ctgpt::model {

struct ModelConfig {
  volume::PrepConfig prep;
  encoder::EncoderConfig encoder;
  adapter::AdapterConfig adapter;
  lm::LmConfig lm;  // vocab_size is filled in from the vocabulary
  lm::LoraConfig lora;
  std::string system_message = lm::default_system_message();
  std::vector<std::string> instructions = lm::default_instructions();

  /// Every cross-module shape constraint; throws ArgumentError naming the
  /// first violated one.
  void validate() const;
  std::size_t visual_tokens() const;
};

/// Small configuration used for tests and desk runs.
ModelConfig desk_config();

/// Texts a vocabulary for this model must cover besides the reports.
std::vector<std::string> prompt_texts(const ModelConfig& cfg);

template <typename T>
struct ReportModel {
  ModelConfig config;
  lm::Vocab vocab;
  ParamStore<T> params;

  /// Fresh parameters: frozen encoder, projector, LM and zero-delta LoRA.
  static ReportModel create(ModelConfig cfg, lm::Vocab vocab, std::uint64_t seed);

  /// Adapter output P_v [1, N, D]. The encoder is frozen, so no graph is kept.
  Tensor<T> pooled_tokens(const volume::PreparedVolume& v) const;

  /// Same as pooled_tokens but records the graph through the encoder.
  Tensor<T> pooled_tokens_with_graph(const volume::PreparedVolume& v) const;

  /// M_v [1, N, d_llm].
  Tensor<T> visual_embeddings(const Tensor<T>& pooled) const;

  /// Answer-masked next-token loss for `prompt` with `visual` ([1, N, d_llm])
  /// spliced at the sentinel.
  Tensor<T> prompt_loss(const Tensor<T>& visual, const lm::PromptSample& prompt) const;

  /// Convenience: build the training prompt and compute the loss.
  Tensor<T> report_loss(const Tensor<T>& pooled, const std::string& instruction, const std::string& report) const;

  std::vector<std::int64_t> generate_ids(const Tensor<T>& pooled, const std::string& instruction,
                                         const lm::GenerationConfig& gen) const;
  std::string generate_report(const Tensor<T>& pooled, const std::string& instruction,
                              const lm::GenerationConfig& gen) const;

  /// Logits for the spliced prompt, no graph.
  Tensor<T> prompt_logits(const Tensor<T>& pooled, const std::string& instruction) const;

  template <typename U>
  ReportModel<U> cast() const {
    return ReportModel<U>{config, vocab, params.template cast<U>()};
  }
};

/// Mean cross-entropy of position t predicting ids[t+1], over targets whose
/// mask is 1. logits: [1, L, V]; ids and mask have length L (visual slots
/// carry id -1, mask 0). Throws ArgumentError when no target is selected.
template <typename T>
Tensor<T> masked_lm_loss(const Tensor<T>& logits, std::span<const std::int64_t> ids,
                         std::span<const std::uint8_t> mask);

}  // namespace ctgpt::model
