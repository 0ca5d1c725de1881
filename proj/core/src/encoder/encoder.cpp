#include "ctgpt/encoder/encoder.hpp"

#include "ctgpt/nn/transformer.hpp"
#include "ctgpt/tensor/ops.hpp"

namespace ctgpt::encoder {

void EncoderConfig::validate() const {
  static constexpr const char* kAxis[] = {"Z", "Y", "X"};
  for (int a = 0; a < 3; ++a) {
    if (patch[a] == 0 || input_dims[a] == 0) throw ArgumentError("encoder: zero patch or input size");
    if (input_dims[a] % patch[a] != 0) {
      throw ArgumentError(std::string("encoder: input ") + kAxis[a] + "=" +
                          std::to_string(input_dims[a]) + " not divisible by patch " +
                          std::to_string(patch[a]));
    }
  }
  if (embed_dim == 0 || heads == 0 || embed_dim % heads != 0) {
    throw ArgumentError("encoder: embed_dim " + std::to_string(embed_dim) +
                        " not divisible by heads " + std::to_string(heads));
  }
  if (mlp_ratio == 0) throw ArgumentError("encoder: mlp_ratio must be positive");
}

std::array<std::size_t, 3> EncoderConfig::grid() const {
  return {input_dims[0] / patch[0], input_dims[1] / patch[1], input_dims[2] / patch[2]};
}

std::size_t EncoderConfig::num_patches() const {
  auto g = grid();
  return g[0] * g[1] * g[2];
}

std::size_t EncoderConfig::patch_volume() const { return patch[0] * patch[1] * patch[2]; }

template <typename T>
Tensor<T> patchify(const volume::PreparedVolume& v, const EncoderConfig& cfg) {
  cfg.validate();
  if (v.dims != cfg.input_dims) {
    throw ArgumentError("patchify: volume dims do not match encoder input dims");
  }
  const auto [gt, gh, gw] = cfg.grid();
  const auto [pt, ph, pw] = cfg.patch;
  const std::size_t Y = v.dims[1], X = v.dims[2];
  const std::size_t pv = cfg.patch_volume();
  std::vector<T> out(cfg.num_patches() * pv);
  std::size_t row = 0;
  for (std::size_t t = 0; t < gt; ++t)
    for (std::size_t h = 0; h < gh; ++h)
      for (std::size_t w = 0; w < gw; ++w, ++row) {
        T* dst = out.data() + row * pv;
        for (std::size_t dz = 0; dz < pt; ++dz)
          for (std::size_t dy = 0; dy < ph; ++dy) {
            const float* src = v.values.data() + ((t * pt + dz) * Y + (h * ph + dy)) * X + w * pw;
            for (std::size_t dx = 0; dx < pw; ++dx) *dst++ = static_cast<T>(src[dx]);
          }
      }
  return Tensor<T>::from_data({1, cfg.num_patches(), pv}, std::move(out));
}

template <typename T>
volume::PreparedVolume unpatchify(const Tensor<T>& patches, const EncoderConfig& cfg) {
  cfg.validate();
  if (patches.shape() != Shape{1, cfg.num_patches(), cfg.patch_volume()}) {
    throw ArgumentError("unpatchify: unexpected shape " + shape_str(patches.shape()));
  }
  const auto [gt, gh, gw] = cfg.grid();
  const auto [pt, ph, pw] = cfg.patch;
  const std::size_t Y = cfg.input_dims[1], X = cfg.input_dims[2];
  volume::PreparedVolume v{cfg.input_dims, std::vector<float>(volume::voxel_count(cfg.input_dims)), {}};
  const T* src = patches.data().data();
  for (std::size_t t = 0; t < gt; ++t)
    for (std::size_t h = 0; h < gh; ++h)
      for (std::size_t w = 0; w < gw; ++w)
        for (std::size_t dz = 0; dz < pt; ++dz)
          for (std::size_t dy = 0; dy < ph; ++dy) {
            float* dst = v.values.data() + ((t * pt + dz) * Y + (h * ph + dy)) * X + w * pw;
            for (std::size_t dx = 0; dx < pw; ++dx) dst[dx] = static_cast<float>(*src++);
          }
  return v;
}

template <typename T>
void init_encoder(ParamStore<T>& store, const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t d = cfg.embed_dim;
  store.add_normal("encoder.patch_embed.weight", {d, cfg.patch_volume()}, cfg.init_std, rng);
  store.add_constant("encoder.patch_embed.bias", {d}, T(0));
  store.add_normal("encoder.pos_embed", {cfg.num_patches(), d}, cfg.init_std, rng);
  for (std::size_t i = 0; i < cfg.depth; ++i) {
    nn::init_block(store, "encoder.block" + std::to_string(i), d, cfg.mlp_ratio * d, cfg.init_std, rng);
  }
  if (cfg.depth > 0) {
    store.add_constant("encoder.norm.gamma", {d}, T(1));
    store.add_constant("encoder.norm.beta", {d}, T(0));
  }
  for (auto& p : store) {
    if (p.name.rfind("encoder.", 0) == 0) store.set_frozen(p, true);
  }
}

template <typename T>
Tensor<T> encode(const volume::PreparedVolume& v, const ParamStore<T>& store, const EncoderConfig& cfg) {
  auto x = patchify<T>(v, cfg);
  const auto& w = store.get("encoder.patch_embed.weight");
  if (w.shape() != Shape{cfg.embed_dim, cfg.patch_volume()}) {
    throw ArgumentError("encode: patch embedding shape " + shape_str(w.shape()) +
                        " does not match config");
  }
  auto h = nn::apply_linear(x, store, "encoder.patch_embed");
  h = ops::add(h, store.get("encoder.pos_embed"));
  for (std::size_t i = 0; i < cfg.depth; ++i) {
    h = nn::block_forward(h, store, "encoder.block" + std::to_string(i), cfg.heads, false);
  }
  if (cfg.depth > 0) h = nn::apply_layer_norm(h, store, "encoder.norm");
  const auto [gt, gh, gw] = cfg.grid();
  return ops::reshape(h, {1, gt, gh, gw, cfg.embed_dim});
}

template Tensor<float> patchify(const volume::PreparedVolume&, const EncoderConfig&);
template Tensor<double> patchify(const volume::PreparedVolume&, const EncoderConfig&);
template volume::PreparedVolume unpatchify(const Tensor<float>&, const EncoderConfig&);
template volume::PreparedVolume unpatchify(const Tensor<double>&, const EncoderConfig&);
template void init_encoder(ParamStore<float>&, const EncoderConfig&, Rng&);
template void init_encoder(ParamStore<double>&, const EncoderConfig&, Rng&);
template Tensor<float> encode(const volume::PreparedVolume&, const ParamStore<float>&, const EncoderConfig&);
template Tensor<double> encode(const volume::PreparedVolume&, const ParamStore<double>&, const EncoderConfig&);

}  // namespace ctgpt::encoder
