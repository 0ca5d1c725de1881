#pragma once

// Pre-norm transformer block shared by the CT encoder and the decoder LM:
//   h = x + Wo * attn(LN1(x)),  out = h + fc2(gelu(fc1(LN2(h))))
//
// Parameter names under `prefix`:
//   ln1.{gamma,beta}  attn.{wq,wk,wv,wo}.{weight,bias}
//   ln2.{gamma,beta}  mlp.fc1.{weight,bias}  mlp.fc2.{weight,bias}

#include <set>
#include <string>

#include "ctgpt/tensor/params.hpp"

namespace ctgpt::nn {

/// Low-rank adapters attached to a block's attention projections. For a
/// target projection `p` the store must hold `<prefix>.<p>.A` ([r, d_in]) and
/// `<prefix>.<p>.B` ([d_out, r]); the effective weight is W + scale * B A.
struct LoraBinding {
  std::string prefix;
  double scale = 1.0;
  std::set<std::string> targets;
};

template <typename T>
void init_block(ParamStore<T>& store, const std::string& prefix, std::size_t d_model,
                std::size_t mlp_hidden, double stddev, Rng& rng);

/// x: [B, L, d_model].
template <typename T>
Tensor<T> block_forward(const Tensor<T>& x, const ParamStore<T>& store, const std::string& prefix,
                        std::size_t heads, bool causal, const LoraBinding* lora = nullptr);

/// Linear layer using `<prefix>.weight` and, when present, `<prefix>.bias`.
template <typename T>
Tensor<T> apply_linear(const Tensor<T>& x, const ParamStore<T>& store, const std::string& prefix);

template <typename T>
Tensor<T> apply_layer_norm(const Tensor<T>& x, const ParamStore<T>& store, const std::string& prefix);

}  // namespace ctgpt::nn
