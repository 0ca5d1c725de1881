#include "ctgpt/volume/ctvol.hpp"

#include "../common/binary_io.hpp"
#include "ctgpt/errors.hpp"

namespace ctgpt::volume {

void CtVolume::validate() const {
  for (auto d : dims) {
    if (d == 0) throw ArgumentError("volume dims must be positive");
  }
  for (auto s : spacing_mm) {
    if (!(s > 0.0f)) throw ArgumentError("volume spacing must be strictly positive");
  }
  if (voxels.size() != voxel_count(dims)) {
    throw ArgumentError("volume has " + std::to_string(voxels.size()) + " voxels, dims imply " +
                        std::to_string(voxel_count(dims)));
  }
}

std::string encode_ctvol(const CtVolume& v) {
  v.validate();
  detail::ByteWriter w;
  w.bytes("CTVL");
  w.u8(kCtvlVersion);
  for (auto d : v.dims) w.u32(static_cast<std::uint32_t>(d));
  for (auto s : v.spacing_mm) w.f32(s);
  w.f32(v.slope);
  w.f32(v.intercept);
  for (auto x : v.voxels) w.i16(x);
  return w.take();
}

CtVolume decode_ctvol(std::string_view bytes, std::string id) {
  detail::ByteReader r(bytes, "CTVL");
  if (r.bytes(4) != "CTVL") throw FormatError("CTVL: bad magic");
  const auto version = r.u8();
  if (version != kCtvlVersion) throw FormatError("CTVL: unsupported version " + std::to_string(version));
  CtVolume v;
  v.id = std::move(id);
  for (auto& d : v.dims) {
    d = r.u32();
    if (d == 0) throw FormatError("CTVL: zero-length axis");
  }
  for (auto& s : v.spacing_mm) {
    s = r.f32();
    if (!(s > 0.0f)) throw FormatError("CTVL: non-positive spacing");
  }
  v.slope = r.f32();
  v.intercept = r.f32();
  const auto n = voxel_count(v.dims);
  if (r.remaining() != n * 2) {
    throw FormatError("CTVL: header declares " + std::to_string(n) + " voxels but payload holds " +
                      std::to_string(r.remaining()) + " bytes");
  }
  v.voxels.resize(n);
  for (auto& x : v.voxels) x = r.i16();
  r.expect_end();
  return v;
}

void write_ctvol(const CtVolume& v, const std::filesystem::path& path) {
  detail::write_file(path.string(), encode_ctvol(v));
}

CtVolume read_ctvol(const std::filesystem::path& path) {
  return decode_ctvol(detail::read_file(path.string()), path.stem().string());
}

}  // namespace ctgpt::volume
