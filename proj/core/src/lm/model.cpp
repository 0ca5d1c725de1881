#include "ctgpt/lm/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ctgpt/lm/vocab.hpp"
#include "ctgpt/nn/transformer.hpp"
#include "ctgpt/tensor/ops.hpp"

namespace ctgpt::lm {

void LmConfig::validate() const {
  if (d_model == 0 || heads == 0 || d_model % heads != 0) {
    throw ArgumentError("lm: d_model " + std::to_string(d_model) + " not divisible by heads " +
                        std::to_string(heads));
  }
  if (vocab_size <= static_cast<std::size_t>(kNumSpecials)) throw ArgumentError("lm: vocab_size too small");
  if (max_seq == 0) throw ArgumentError("lm: max_seq must be positive");
  if (mlp_ratio == 0) throw ArgumentError("lm: mlp_ratio must be positive");
}

void LoraConfig::validate() const {
  if (rank < 1) throw ArgumentError("lora: rank must be >= 1");
  if (!(alpha > 0.0)) throw ArgumentError("lora: alpha must be > 0");
  for (const auto& t : targets) {
    if (t != "wq" && t != "wk" && t != "wv" && t != "wo") {
      throw ArgumentError("lora: unknown target '" + t + "'");
    }
  }
  if (targets.empty()) throw ArgumentError("lora: no target matrices");
}

template <typename T>
void init_lm(ParamStore<T>& store, const LmConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t d = cfg.d_model;
  store.add_normal("lm.tok_embed", {cfg.vocab_size, d}, cfg.init_std, rng);
  store.add_normal("lm.pos_embed", {cfg.max_seq, d}, cfg.init_std, rng);
  for (std::size_t i = 0; i < cfg.depth; ++i) {
    nn::init_block(store, "lm.block" + std::to_string(i), d, cfg.mlp_ratio * d, cfg.init_std, rng);
  }
  store.add_constant("lm.norm.gamma", {d}, T(1));
  store.add_constant("lm.norm.beta", {d}, T(0));
  store.add_normal("lm.head.weight", {cfg.vocab_size, d}, cfg.init_std, rng);
}

template <typename T>
void attach_lora(ParamStore<T>& store, const LmConfig& cfg, const LoraConfig& lora, Rng& rng) {
  lora.validate();
  if (has_lora(store)) throw StateError("attach_lora: adapters already attached");
  const double a_std = lora.a_init_std > 0.0 ? lora.a_init_std : 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
  for (std::size_t i = 0; i < cfg.depth; ++i) {
    for (const auto& t : lora.targets) {
      const std::string base = "lora.block" + std::to_string(i) + "." + t;
      store.add_normal(base + ".A", {lora.rank, cfg.d_model}, a_std, rng);
      store.add_constant(base + ".B", {cfg.d_model, lora.rank}, T(0));
    }
  }
}

template <typename T>
bool has_lora(const ParamStore<T>& store) {
  return std::any_of(store.begin(), store.end(),
                     [](const auto& p) { return p.name.rfind("lora.", 0) == 0; });
}

template <typename T>
Tensor<T> embed_tokens(std::span<const std::int64_t> ids, const ParamStore<T>& store) {
  return ops::embedding(store.get("lm.tok_embed"), ids);
}

template <typename T>
Tensor<T> splice_embeddings(std::span<const std::int64_t> ids, const std::optional<Tensor<T>>& visual,
                            const ParamStore<T>& store) {
  const auto sentinels = std::count(ids.begin(), ids.end(), kImageSentinel);
  const std::size_t d = store.get("lm.tok_embed").dim(1);
  if (!visual) {
    if (sentinels != 0) throw ArgumentError("splice: image sentinel present but no visual tokens");
    if (ids.empty()) throw ArgumentError("splice: empty sequence");
    return ops::reshape(embed_tokens(ids, store), {1, ids.size(), d});
  }
  if (sentinels != 1) {
    throw ArgumentError("splice: expected exactly one image sentinel, found " + std::to_string(sentinels));
  }
  const auto& v = *visual;
  if (v.rank() != 3 || v.dim(0) != 1 || v.dim(2) != d) {
    throw ArgumentError("splice: visual tokens must be [1, N, " + std::to_string(d) + "], got " +
                        shape_str(v.shape()));
  }
  const auto pos = static_cast<std::size_t>(std::find(ids.begin(), ids.end(), kImageSentinel) - ids.begin());
  std::vector<Tensor<T>> parts;
  if (pos > 0) parts.push_back(ops::reshape(embed_tokens(ids.subspan(0, pos), store), {1, pos, d}));
  parts.push_back(v);
  const std::size_t n_post = ids.size() - pos - 1;
  if (n_post > 0) {
    parts.push_back(ops::reshape(embed_tokens(ids.subspan(pos + 1), store), {1, n_post, d}));
  }
  return parts.size() == 1 ? parts.front() : ops::concat(parts, 1);
}

template <typename T>
Tensor<T> forward_lm(const Tensor<T>& embeddings, const ParamStore<T>& store, const LmConfig& cfg,
                     const LoraConfig* lora) {
  if (embeddings.rank() != 3 || embeddings.dim(0) != 1 || embeddings.dim(2) != cfg.d_model) {
    throw ArgumentError("forward_lm: embeddings must be [1, L, d_model], got " +
                        shape_str(embeddings.shape()));
  }
  const std::size_t len = embeddings.dim(1);
  if (len > cfg.max_seq) {
    throw ArgumentError("forward_lm: sequence length " + std::to_string(len) + " exceeds max_seq " +
                        std::to_string(cfg.max_seq));
  }
  std::vector<std::int64_t> positions(len);
  std::iota(positions.begin(), positions.end(), 0);
  auto pos = ops::embedding(store.get("lm.pos_embed"), positions);
  auto h = ops::add(embeddings, pos);
  const bool use_lora = lora != nullptr && has_lora(store);
  for (std::size_t i = 0; i < cfg.depth; ++i) {
    const std::string idx = std::to_string(i);
    if (use_lora) {
      nn::LoraBinding binding{"lora.block" + idx, lora->scale(), lora->targets};
      h = nn::block_forward(h, store, "lm.block" + idx, cfg.heads, true, &binding);
    } else {
      h = nn::block_forward(h, store, "lm.block" + idx, cfg.heads, true);
    }
  }
  h = nn::apply_layer_norm(h, store, "lm.norm");
  return ops::linear(h, store.get("lm.head.weight"));
}

#define CTGPT_INSTANTIATE_LM(T)                                                                  \
  template void init_lm(ParamStore<T>&, const LmConfig&, Rng&);                                  \
  template void attach_lora(ParamStore<T>&, const LmConfig&, const LoraConfig&, Rng&);           \
  template bool has_lora(const ParamStore<T>&);                                                  \
  template Tensor<T> embed_tokens(std::span<const std::int64_t>, const ParamStore<T>&);          \
  template Tensor<T> splice_embeddings(std::span<const std::int64_t>,                            \
                                       const std::optional<Tensor<T>>&, const ParamStore<T>&);   \
  template Tensor<T> forward_lm(const Tensor<T>&, const ParamStore<T>&, const LmConfig&,         \
                                const LoraConfig*);

CTGPT_INSTANTIATE_LM(float)
CTGPT_INSTANTIATE_LM(double)

}  // namespace ctgpt::lm
