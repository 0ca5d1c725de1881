#include "ctgpt/volume/prep.hpp"

#include <algorithm>
#include <cmath>

#include "ctgpt/errors.hpp"

namespace ctgpt::volume {

Field to_hounsfield(const CtVolume& v) {
  v.validate();
  Field f{v.dims, std::vector<float>(v.voxels.size())};
  const double slope = v.slope, intercept = v.intercept;
  for (std::size_t i = 0; i < v.voxels.size(); ++i) {
    f.values[i] = static_cast<float>(slope * v.voxels[i] + intercept);
  }
  return f;
}

Field clip_hu(Field f, float lo, float hi) {
  for (auto& x : f.values) x = std::clamp(x, lo, hi);
  return f;
}

std::size_t resampled_length(std::size_t n, double src_spacing, double dst_spacing) {
  const double extent = static_cast<double>(n) * src_spacing;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(extent / dst_spacing)));
}

namespace {

// Source index pair and weight of the upper neighbour for each output index.
struct AxisTaps {
  std::vector<std::size_t> lo, hi;
  std::vector<float> w;
};

AxisTaps axis_taps(std::size_t n_src, std::size_t n_dst, double src, double dst) {
  AxisTaps t;
  t.lo.resize(n_dst);
  t.hi.resize(n_dst);
  t.w.resize(n_dst);
  const double max_c = static_cast<double>(n_src - 1);
  for (std::size_t i = 0; i < n_dst; ++i) {
    double c = (static_cast<double>(i) + 0.5) * dst / src - 0.5;
    c = std::clamp(c, 0.0, max_c);
    const auto l = static_cast<std::size_t>(std::floor(c));
    const auto h = std::min(l + 1, n_src - 1);
    t.lo[i] = l;
    t.hi[i] = h;
    t.w[i] = static_cast<float>(c - static_cast<double>(l));
  }
  return t;
}

}  // namespace

Field resample_trilinear(const Field& f, const Spacing3& src_spacing, const Spacing3& dst_spacing) {
  for (int a = 0; a < 3; ++a) {
    if (!(src_spacing[a] > 0.0) || !(dst_spacing[a] > 0.0)) {
      throw ArgumentError("resample_trilinear: spacings must be strictly positive");
    }
  }
  const auto [sz, sy, sx] = f.dims;
  Dims3 out_dims{resampled_length(sz, src_spacing[0], dst_spacing[0]),
                 resampled_length(sy, src_spacing[1], dst_spacing[1]),
                 resampled_length(sx, src_spacing[2], dst_spacing[2])};
  const auto tz = axis_taps(sz, out_dims[0], src_spacing[0], dst_spacing[0]);
  const auto ty = axis_taps(sy, out_dims[1], src_spacing[1], dst_spacing[1]);
  const auto tx = axis_taps(sx, out_dims[2], src_spacing[2], dst_spacing[2]);

  // Separable passes: x, then y, then z. Each pass is a std::lerp between two
  // source values, so constants stay exact and no pass overshoots its inputs.
  const std::size_t ox = out_dims[2], oy = out_dims[1], oz = out_dims[0];
  std::vector<float> px(sz * sy * ox);
  for (std::size_t z = 0; z < sz; ++z)
    for (std::size_t y = 0; y < sy; ++y) {
      const float* row = f.values.data() + (z * sy + y) * sx;
      float* dst = px.data() + (z * sy + y) * ox;
      for (std::size_t i = 0; i < ox; ++i) dst[i] = std::lerp(row[tx.lo[i]], row[tx.hi[i]], tx.w[i]);
    }
  std::vector<float> py(sz * oy * ox);
  for (std::size_t z = 0; z < sz; ++z)
    for (std::size_t j = 0; j < oy; ++j) {
      const float* a = px.data() + (z * sy + ty.lo[j]) * ox;
      const float* b = px.data() + (z * sy + ty.hi[j]) * ox;
      float* dst = py.data() + (z * oy + j) * ox;
      for (std::size_t i = 0; i < ox; ++i) dst[i] = std::lerp(a[i], b[i], ty.w[j]);
    }
  Field out{out_dims, std::vector<float>(oz * oy * ox)};
  for (std::size_t k = 0; k < oz; ++k) {
    const float* a = py.data() + tz.lo[k] * oy * ox;
    const float* b = py.data() + tz.hi[k] * oy * ox;
    float* dst = out.values.data() + k * oy * ox;
    for (std::size_t i = 0; i < oy * ox; ++i) dst[i] = std::lerp(a[i], b[i], tz.w[k]);
  }
  return out;
}

Field crop_or_pad(const Field& f, const Dims3& target, float fill) {
  if (f.dims == target) return f;
  // For each axis: source start (crop) and destination start (pad).
  std::array<std::size_t, 3> src0{}, dst0{}, len{};
  for (int a = 0; a < 3; ++a) {
    if (f.dims[a] >= target[a]) {
      src0[a] = (f.dims[a] - target[a]) / 2;
      dst0[a] = 0;
      len[a] = target[a];
    } else {
      src0[a] = 0;
      dst0[a] = (target[a] - f.dims[a]) / 2;
      len[a] = f.dims[a];
    }
  }
  Field out{target, std::vector<float>(voxel_count(target), fill)};
  for (std::size_t z = 0; z < len[0]; ++z)
    for (std::size_t y = 0; y < len[1]; ++y) {
      const float* src = f.values.data() + ((src0[0] + z) * f.dims[1] + (src0[1] + y)) * f.dims[2] + src0[2];
      float* dst = out.values.data() + ((dst0[0] + z) * target[1] + (dst0[1] + y)) * target[2] + dst0[2];
      std::copy_n(src, len[2], dst);
    }
  return out;
}

PreparedVolume normalize(const Field& f, std::string source_id, float lo, float hi) {
  PreparedVolume out{f.dims, std::vector<float>(f.values.size()), std::move(source_id)};
  const double range = static_cast<double>(hi) - lo;
  for (std::size_t i = 0; i < f.values.size(); ++i) {
    const float v = f.values[i];
    if (!(v >= lo && v <= hi)) {
      throw ContractError("normalize: value " + std::to_string(v) + " outside clip range");
    }
    out.values[i] = static_cast<float>(2.0 * (static_cast<double>(v) - lo) / range - 1.0);
  }
  return out;
}

Field prepare_hu(const Field& hu, const Spacing3& spacing, const PrepConfig& cfg) {
  auto clipped = clip_hu(hu, cfg.clip_min, cfg.clip_max);
  auto resampled = resample_trilinear(clipped, spacing, cfg.target_spacing);
  return crop_or_pad(resampled, cfg.target_dims, cfg.pad_value);
}

PreparedVolume prepare(const CtVolume& v, const PrepConfig& cfg) {
  const Spacing3 spacing{v.spacing_mm[0], v.spacing_mm[1], v.spacing_mm[2]};
  return normalize(prepare_hu(to_hounsfield(v), spacing, cfg), v.id, cfg.clip_min, cfg.clip_max);
}

}  // namespace ctgpt::volume
