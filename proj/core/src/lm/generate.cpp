#include "ctgpt/lm/generate.hpp"

#include <cmath>

#include "ctgpt/lm/vocab.hpp"
#include "ctgpt/tensor/ops.hpp"

namespace ctgpt::lm {

template <typename T>
std::int64_t sample_next(std::span<const T> logits, double temperature, Rng& rng) {
  if (!(temperature >= 0.0)) throw ArgumentError("temperature must be >= 0");
  if (logits.empty()) throw ArgumentError("sample_next: empty logits");
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  if (temperature == 0.0) return static_cast<std::int64_t>(best);

  const double mx = static_cast<double>(logits[best]) / temperature;
  std::vector<double> w(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    w[i] = std::exp(static_cast<double>(logits[i]) / temperature - mx);
    z += w[i];
  }
  const double u = rng.uniform() * z;
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    acc += w[i];
    if (u < acc) return static_cast<std::int64_t>(i);
  }
  // Rounding left u at the very top of the mass: take the last nonzero entry.
  for (std::size_t i = w.size(); i-- > 0;) {
    if (w[i] > 0.0) return static_cast<std::int64_t>(i);
  }
  return static_cast<std::int64_t>(best);
}

template <typename T>
std::vector<std::int64_t> generate(const Tensor<T>& prefix, const ParamStore<T>& store,
                                   const LmConfig& cfg, const LoraConfig* lora,
                                   const GenerationConfig& gen) {
  if (!(gen.temperature >= 0.0)) throw ArgumentError("generate: temperature must be >= 0");
  if (gen.max_new < 1) throw ArgumentError("generate: max_new must be >= 1");
  NoGradGuard no_grad;
  Rng rng(gen.seed);
  std::vector<std::int64_t> out;
  auto seq = prefix.detach();
  const std::size_t vocab = cfg.vocab_size;
  while (out.size() < gen.max_new && seq.dim(1) <= cfg.max_seq) {
    auto logits = forward_lm(seq, store, cfg, lora);
    const std::size_t len = seq.dim(1);
    std::span<const T> last = logits.data().subspan((len - 1) * vocab, vocab);
    const auto next = sample_next(last, gen.temperature, rng);
    if (next == kStopId || next == kEosId) break;
    out.push_back(next);
    if (len == cfg.max_seq) break;
    const std::int64_t ids[] = {next};
    auto e = ops::reshape(embed_tokens<T>(ids, store), {1, 1, cfg.d_model});
    seq = ops::concat<T>({seq, e}, 1);
  }
  return out;
}

template std::int64_t sample_next(std::span<const float>, double, Rng&);
template std::int64_t sample_next(std::span<const double>, double, Rng&);
template std::vector<std::int64_t> generate(const Tensor<float>&, const ParamStore<float>&, const LmConfig&,
                                            const LoraConfig*, const GenerationConfig&);
template std::vector<std::int64_t> generate(const Tensor<double>&, const ParamStore<double>&,
                                            const LmConfig&, const LoraConfig*, const GenerationConfig&);

}  // namespace ctgpt::lm
