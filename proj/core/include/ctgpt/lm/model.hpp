#pragma once

// Decoder-only language model with optional LoRA on attention projections.
//
// Parameters:
//   lm.tok_embed [V, d]   lm.pos_embed [max_seq, d]   lm.block{i}.*
//   lm.norm.{gamma,beta}  lm.head.weight [V, d]
//   lora.block{i}.{target}.A [r, d], .B [d, r]   (only once attached)

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>

#include "ctgpt/tensor/params.hpp"

namespace ctgpt::lm {

struct LmConfig {
  std::size_t d_model = 64;
  std::size_t depth = 2;
  std::size_t heads = 4;
  std::size_t vocab_size = 0;
  std::size_t max_seq = 256;
  std::size_t mlp_ratio = 4;
  double init_std = 0.02;

  void validate() const;
};

struct LoraConfig {
  std::size_t rank = 8;
  double alpha = 16.0;
  std::set<std::string> targets{"wq", "wv"};
  /// Std of the Gaussian used for A; 0 selects 1/sqrt(d_model). B starts at 0.
  double a_init_std = 0.0;

  void validate() const;
  double scale() const { return alpha / static_cast<double>(rank); }
};

template <typename T>
void init_lm(ParamStore<T>& store, const LmConfig& cfg, Rng& rng);

/// Adds zero-initialized adapters (B = 0) for every block and target.
template <typename T>
void attach_lora(ParamStore<T>& store, const LmConfig& cfg, const LoraConfig& lora, Rng& rng);

template <typename T>
bool has_lora(const ParamStore<T>& store);

/// [ids.size(), d] rows of lm.tok_embed.
template <typename T>
Tensor<T> embed_tokens(std::span<const std::int64_t> ids, const ParamStore<T>& store);

/// concat(embed(ids before sentinel), visual, embed(ids after sentinel)) as
/// [1, L, d]. Without visual tokens the ids must not contain the sentinel.
template <typename T>
Tensor<T> splice_embeddings(std::span<const std::int64_t> ids, const std::optional<Tensor<T>>& visual,
                            const ParamStore<T>& store);

/// Causal forward pass: [1, L, d] -> logits [1, L, V]. Positions count every
/// row of `embeddings`, visual ones included. `lora` is used only when the
/// store holds adapter parameters.
template <typename T>
Tensor<T> forward_lm(const Tensor<T>& embeddings, const ParamStore<T>& store, const LmConfig& cfg,
                     const LoraConfig* lora = nullptr);

}  // namespace ctgpt::lm
