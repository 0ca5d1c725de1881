#pragma once

// CTVL volume container, all fields little-endian:
//
//   magic "CTVL" (4 bytes) | version u8 = 1 | dims 3 x u32 (z, y, x)
//   | spacing 3 x f32 (z, y, x, millimetres) | slope f32 | intercept f32
//   | z*y*x voxels i16, z-major (x fastest)

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace ctgpt::volume {

using Dims3 = std::array<std::size_t, 3>;     // (z, y, x)
using Spacing3 = std::array<double, 3>;       // (z, y, x) in mm

inline std::size_t voxel_count(const Dims3& d) { return d[0] * d[1] * d[2]; }

inline constexpr std::uint8_t kCtvlVersion = 1;

/// Raw scanner volume: stored integers plus the rescale needed to reach HU.
struct CtVolume {
  Dims3 dims{};
  std::array<float, 3> spacing_mm{1.0f, 1.0f, 1.0f};
  float slope = 1.0f;
  float intercept = 0.0f;
  std::vector<std::int16_t> voxels;
  std::string id;

  /// Throws ArgumentError if the invariants do not hold.
  void validate() const;

  bool operator==(const CtVolume&) const = default;
};

std::string encode_ctvol(const CtVolume& v);
/// `id` is attached to the decoded volume (the container does not store it).
CtVolume decode_ctvol(std::string_view bytes, std::string id = {});

void write_ctvol(const CtVolume& v, const std::filesystem::path& path);
/// The volume id is the file stem.
CtVolume read_ctvol(const std::filesystem::path& path);

}  // namespace ctgpt::volume
