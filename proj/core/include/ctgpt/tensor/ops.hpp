#pragma once

// Differentiable tensor primitives. Every op records a backward closure when
// grad mode is on and at least one input requires grad.
//
// All ops are explicitly instantiated for float (training / inference) and
// double (gradient checking).

#include <cstdint>
#include <span>
#include <vector>

#include "ctgpt/tensor/tensor.hpp"

namespace ctgpt::ops {

/// out.shape[i] == t.shape[axes[i]].
template <typename T>
Tensor<T> permute(const Tensor<T>& t, std::span<const std::size_t> axes);
template <typename T>
Tensor<T> permute(const Tensor<T>& t, std::initializer_list<std::size_t> axes) {
  return permute(t, std::span<const std::size_t>(axes.begin(), axes.size()));
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& t, Shape new_shape);

/// Non-overlapping 3D mean pooling over the last three axes of a
/// [B, C, d1, d2, d3] tensor; stride equals kernel, no padding.
template <typename T>
Tensor<T> avg_pool3d(const Tensor<T>& t, std::size_t kernel);

/// Batched matrix product [..., m, k] x [..., k, n] -> [..., m, n] with
/// broadcasting over the batch prefix.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// y = x W^T + b over the last axis. x: [..., in], W: [out, in], b: [out] or undefined.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias = {});

/// Elementwise a + b. b's shape must equal a's shape or a suffix of it.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
/// Elementwise a * b, same broadcasting rule as add.
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& t, T factor);

template <typename T>
Tensor<T> sum(const Tensor<T>& t);
template <typename T>
Tensor<T> mean(const Tensor<T>& t);

/// Normalizes over the last axis, then applies gamma/beta (both [last]).
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     double eps = 1e-5);

/// Exact (erf) GELU.
template <typename T>
Tensor<T> gelu(const Tensor<T>& t);

/// Softmax over the last axis, max-subtracted.
template <typename T>
Tensor<T> softmax(const Tensor<T>& t);

/// Rows of `table` ([V, d]) selected by ids -> [ids.size(), d].
template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const std::int64_t> ids);

/// Mean token cross-entropy over rows whose mask is 1. logits: [..., V]
/// flattened to rows; targets and mask have one entry per row.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::int64_t> targets,
                        std::span<const std::uint8_t> mask);

/// Concatenation along `axis`; all other axes must agree.
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);

/// Multi-head scaled dot-product attention. q, k, v: [B, L, D], D split into
/// `heads` contiguous groups. With `causal`, position i attends to j <= i.
template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                    std::size_t heads, bool causal);

}  // namespace ctgpt::ops
