#pragma once

// Token-grid adapter and the vision-to-language projector.
//
// adapt_tokens turns the encoder grid Z [B, T, H', W', D] into N = (T/k)(H'/k)(W'/k)
// visual tokens of width D:
//   Z1 = permute(Z, [0,4,1,2,3])      [B, D, T, H', W']
//   Z2 = avg_pool3d(Z1, k)            [B, D, T/k, H'/k, W'/k]
//   Z3 = reshape(Z2, [B, D, N])
//   Pv = permute(Z3, [0,2,1])         [B, N, D]

#include <array>
#include <string>

#include "ctgpt/tensor/params.hpp"

namespace ctgpt::adapter {

enum class ProjectorKind { Linear, Mlp2 };

ProjectorKind parse_projector_kind(const std::string& s);
std::string to_string(ProjectorKind k);

struct AdapterConfig {
  std::size_t pool_kernel = 2;
  ProjectorKind projector = ProjectorKind::Linear;
  std::size_t d_llm = 512;
  bool bias = true;
  double init_std = 0.02;
};

/// Number of visual tokens for a (T, H', W') grid; throws if not divisible.
std::size_t visual_token_count(const std::array<std::size_t, 3>& grid, std::size_t kernel);

template <typename T>
Tensor<T> adapt_tokens(const Tensor<T>& grid, std::size_t kernel = 2);

/// Adds "projector." parameters mapping width `d_in` to cfg.d_llm.
template <typename T>
void init_projector(ParamStore<T>& store, std::size_t d_in, const AdapterConfig& cfg, Rng& rng);

/// [B, N, D] -> [B, N, d_llm]. linear: P W^T + b; mlp2: fc2(gelu(fc1(P))).
template <typename T>
Tensor<T> project(const Tensor<T>& tokens, const ParamStore<T>& store, const AdapterConfig& cfg);

}  // namespace ctgpt::adapter
