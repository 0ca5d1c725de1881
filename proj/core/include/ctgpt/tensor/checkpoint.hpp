#pragma once

// Parameter checkpoint container.
//
//   offset  size  field
//   0       4     magic "CKPT"
//   4       1     version (u8, currently 1)
//   5       4     entry count (u32 LE)
//   then per entry, in store order:
//           4     name length n (u32 LE)
//           n     name bytes (UTF-8, no terminator)
//           4     rank r (u32 LE)
//           4r    axis lengths (u32 LE each)
//           1     frozen flag (u8, 0 or 1)
//           4k    k = product(axis lengths) scalars, IEEE-754 binary32 LE
//
// The file must end exactly after the last entry.

#include <filesystem>
#include <string>
#include <string_view>

#include "ctgpt/tensor/params.hpp"

namespace ctgpt {

inline constexpr std::uint8_t kCheckpointVersion = 1;

template <typename T>
std::string encode_checkpoint(const ParamStore<T>& params);

ParamStore<float> decode_checkpoint(std::string_view bytes);

template <typename T>
void write_checkpoint(const ParamStore<T>& params, const std::filesystem::path& path);

ParamStore<float> read_checkpoint(const std::filesystem::path& path);

/// Copies values (and freeze flags) from `source` into `target`. Every name in
/// `target` must exist in `source` with the same shape; extra source entries
/// are an error too.
template <typename T>
void load_parameters(ParamStore<T>& target, const ParamStore<float>& source);

}  // namespace ctgpt
