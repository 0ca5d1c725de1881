#include "ctgpt/tensor/checkpoint.hpp"

#include "../common/binary_io.hpp"

namespace ctgpt {

template <typename T>
std::string encode_checkpoint(const ParamStore<T>& params) {
  detail::ByteWriter w;
  w.bytes("CKPT");
  w.u8(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    w.u32(static_cast<std::uint32_t>(p.name.size()));
    w.bytes(p.name);
    const auto& shape = p.tensor.shape();
    w.u32(static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) w.u32(static_cast<std::uint32_t>(d));
    w.u8(p.frozen ? 1 : 0);
    for (auto v : p.tensor.data()) w.f32(static_cast<float>(v));
  }
  return w.take();
}

ParamStore<float> decode_checkpoint(std::string_view bytes) {
  detail::ByteReader r(bytes, "checkpoint");
  if (r.bytes(4) != "CKPT") throw FormatError("checkpoint: bad magic");
  const auto version = r.u8();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto count = r.u32();
  ParamStore<float> store;
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto name_len = r.u32();
    std::string name(r.bytes(name_len));
    const auto rank = r.u32();
    if (rank == 0 || rank > 16) throw FormatError("checkpoint: bad rank for " + name);
    Shape shape(rank);
    for (auto& d : shape) {
      d = r.u32();
      if (d == 0) throw FormatError("checkpoint: zero-length axis in " + name);
    }
    const auto frozen = r.u8();
    if (frozen > 1) throw FormatError("checkpoint: bad frozen flag for " + name);
    const auto n = shape_numel(shape);
    if (r.remaining() / 4 < n) throw FormatError("checkpoint: truncated payload");
    std::vector<float> data(n);
    for (auto& v : data) v = r.f32();
    try {
      store.add(name, Tensor<float>::from_data(std::move(shape), std::move(data)), frozen == 1);
    } catch (const ArgumentError& e) {
      throw FormatError(std::string("checkpoint: ") + e.what());
    }
  }
  r.expect_end();
  return store;
}

template <typename T>
void write_checkpoint(const ParamStore<T>& params, const std::filesystem::path& path) {
  detail::write_file(path.string(), encode_checkpoint(params));
}

ParamStore<float> read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(detail::read_file(path.string()));
}

template <typename T>
void load_parameters(ParamStore<T>& target, const ParamStore<float>& source) {
  if (target.size() != source.size()) {
    throw ArgumentError("checkpoint has " + std::to_string(source.size()) +
                        " parameters, model expects " + std::to_string(target.size()));
  }
  for (auto& p : target) {
    if (!source.contains(p.name)) throw ArgumentError("checkpoint lacks parameter " + p.name);
    const auto& src = source.entry(p.name);
    if (src.tensor.shape() != p.tensor.shape()) {
      throw ArgumentError("shape mismatch for " + p.name + ": checkpoint " +
                          shape_str(src.tensor.shape()) + ", model " + shape_str(p.tensor.shape()));
    }
    auto dst = p.tensor.mutable_data();
    auto s = src.tensor.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(s[i]);
    target.set_frozen(p, src.frozen);
  }
}

template std::string encode_checkpoint(const ParamStore<float>&);
template std::string encode_checkpoint(const ParamStore<double>&);
template void write_checkpoint(const ParamStore<float>&, const std::filesystem::path&);
template void write_checkpoint(const ParamStore<double>&, const std::filesystem::path&);
template void load_parameters(ParamStore<float>&, const ParamStore<float>&);
template void load_parameters(ParamStore<double>&, const ParamStore<float>&);

}  // namespace ctgpt
