#pragma once

// 3D patch encoder producing the [B, T, H', W', D] token grid.
//
// patchify -> linear patch embedding -> + learned positions -> `depth`
// pre-norm transformer blocks over all patches -> final LayerNorm (only when
// depth > 0) -> reshape to the grid.

#include <array>
#include <cstddef>

#include "ctgpt/tensor/params.hpp"
#include "ctgpt/volume/prep.hpp"

namespace ctgpt::encoder {

struct EncoderConfig {
  volume::Dims3 input_dims{240, 480, 480};
  std::array<std::size_t, 3> patch{15, 30, 30};  // (p_t, p_h, p_w)
  std::size_t embed_dim = 512;
  std::size_t depth = 1;
  std::size_t heads = 8;
  std::size_t mlp_ratio = 4;
  double init_std = 0.02;

  /// Throws ArgumentError naming the violated constraint.
  void validate() const;

  /// (T, H', W')
  std::array<std::size_t, 3> grid() const;
  std::size_t num_patches() const;
  std::size_t patch_volume() const;
};

/// [1, T*H'*W', p_t*p_h*p_w]; patches in (t, h, w) order, each flattened z-major.
template <typename T>
Tensor<T> patchify(const volume::PreparedVolume& v, const EncoderConfig& cfg);

/// Inverse of patchify.
template <typename T>
volume::PreparedVolume unpatchify(const Tensor<T>& patches, const EncoderConfig& cfg);

/// Adds every "encoder." parameter (frozen) to `store`.
template <typename T>
void init_encoder(ParamStore<T>& store, const EncoderConfig& cfg, Rng& rng);

/// Token grid [1, T, H', W', D].
template <typename T>
Tensor<T> encode(const volume::PreparedVolume& v, const ParamStore<T>& store, const EncoderConfig& cfg);

}  // namespace ctgpt::encoder
