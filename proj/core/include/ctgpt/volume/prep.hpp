#pragma once

// Hounsfield conversion and the fixed preprocessing chain
//   HU -> clip -> trilinear resample -> crop/pad -> normalize.

#include <string>
#include <vector>

#include "ctgpt/volume/ctvol.hpp"

namespace ctgpt::volume {

inline constexpr float kHuMin = -1000.0f;
inline constexpr float kHuMax = 200.0f;

/// Dense float scalar field on a regular grid, z-major.
struct Field {
  Dims3 dims{};
  std::vector<float> values;

  float at(std::size_t z, std::size_t y, std::size_t x) const {
    return values[(z * dims[1] + y) * dims[2] + x];
  }
};

/// Normalized model input; every value lies in [-1, 1].
struct PreparedVolume {
  Dims3 dims{};
  std::vector<float> values;
  std::string source_id;
};

struct PrepConfig {
  Dims3 target_dims{240, 480, 480};
  Spacing3 target_spacing{1.5, 0.75, 0.75};
  float clip_min = kHuMin;
  float clip_max = kHuMax;
  float pad_value = kHuMin;
};

/// HU = slope * raw + intercept, per voxel.
Field to_hounsfield(const CtVolume& v);

/// Clamps every value into [lo, hi].
Field clip_hu(Field f, float lo = kHuMin, float hi = kHuMax);

/// Output dims along one axis: the count that keeps the physical extent,
/// max(1, round(n * src / dst)).
std::size_t resampled_length(std::size_t n, double src_spacing, double dst_spacing);

/// Voxel-centre trilinear resampling. Output voxel i samples source
/// coordinate (i + 0.5) * dst / src - 0.5, clamped to the source grid.
Field resample_trilinear(const Field& f, const Spacing3& src_spacing,
                         const Spacing3& dst_spacing = {1.5, 0.75, 0.75});

/// Centre crop oversized axes, symmetric pad undersized axes with `fill`.
/// Odd remainders go to the high-index side.
Field crop_or_pad(const Field& f, const Dims3& target = {240, 480, 480}, float fill = kHuMin);

/// Affine map [lo, hi] -> [-1, 1]. Throws ContractError for values outside.
PreparedVolume normalize(const Field& f, std::string source_id = {}, float lo = kHuMin,
                         float hi = kHuMax);

/// Chain from a HU field sampled at `spacing`, stopping before normalization.
Field prepare_hu(const Field& hu, const Spacing3& spacing, const PrepConfig& cfg);

/// Full chain from a raw volume.
PreparedVolume prepare(const CtVolume& v, const PrepConfig& cfg);

}  // namespace ctgpt::volume
