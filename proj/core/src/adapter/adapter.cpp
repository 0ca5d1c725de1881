#include "ctgpt/adapter/adapter.hpp"

#include "ctgpt/nn/transformer.hpp"
#include "ctgpt/tensor/ops.hpp"

namespace ctgpt::adapter {

ProjectorKind parse_projector_kind(const std::string& s) {
  if (s == "linear") return ProjectorKind::Linear;
  if (s == "mlp2") return ProjectorKind::Mlp2;
  throw ArgumentError("unknown projector kind '" + s + "' (expected linear or mlp2)");
}

std::string to_string(ProjectorKind k) { return k == ProjectorKind::Linear ? "linear" : "mlp2"; }

std::size_t visual_token_count(const std::array<std::size_t, 3>& grid, std::size_t kernel) {
  if (kernel == 0) throw ArgumentError("pool kernel must be positive");
  std::size_t n = 1;
  for (auto g : grid) {
    if (g % kernel != 0) {
      throw ArgumentError("token grid axis " + std::to_string(g) + " not divisible by pool kernel " +
                          std::to_string(kernel));
    }
    n *= g / kernel;
  }
  return n;
}

template <typename T>
Tensor<T> adapt_tokens(const Tensor<T>& grid, std::size_t kernel) {
  if (grid.rank() != 5) throw ArgumentError("adapt_tokens: expected [B,T,H',W',D], got " + shape_str(grid.shape()));
  const std::size_t b = grid.dim(0), d = grid.dim(4);
  const std::size_t n = visual_token_count({grid.dim(1), grid.dim(2), grid.dim(3)}, kernel);
  auto z1 = ops::permute(grid, {0, 4, 1, 2, 3});
  auto z2 = ops::avg_pool3d(z1, kernel);
  auto z3 = ops::reshape(z2, {b, d, n});
  return ops::permute(z3, {0, 2, 1});
}

template <typename T>
void init_projector(ParamStore<T>& store, std::size_t d_in, const AdapterConfig& cfg, Rng& rng) {
  const std::size_t d = cfg.d_llm;
  if (cfg.projector == ProjectorKind::Linear) {
    store.add_normal("projector.weight", {d, d_in}, cfg.init_std, rng);
    if (cfg.bias) store.add_constant("projector.bias", {d}, T(0));
  } else {
    store.add_normal("projector.fc1.weight", {d, d_in}, cfg.init_std, rng);
    if (cfg.bias) store.add_constant("projector.fc1.bias", {d}, T(0));
    store.add_normal("projector.fc2.weight", {d, d}, cfg.init_std, rng);
    if (cfg.bias) store.add_constant("projector.fc2.bias", {d}, T(0));
  }
}

template <typename T>
Tensor<T> project(const Tensor<T>& tokens, const ParamStore<T>& store, const AdapterConfig& cfg) {
  const std::string first = cfg.projector == ProjectorKind::Linear ? "projector" : "projector.fc1";
  const auto& w = store.get(first + ".weight");
  if (tokens.shape().back() != w.dim(1)) {
    throw ArgumentError("project: token width " + std::to_string(tokens.shape().back()) +
                        " does not match projector input " + std::to_string(w.dim(1)));
  }
  if (cfg.projector == ProjectorKind::Linear) return nn::apply_linear(tokens, store, "projector");
  auto hidden = ops::gelu(nn::apply_linear(tokens, store, "projector.fc1"));
  return nn::apply_linear(hidden, store, "projector.fc2");
}

template Tensor<float> adapt_tokens(const Tensor<float>&, std::size_t);
template Tensor<double> adapt_tokens(const Tensor<double>&, std::size_t);
template void init_projector(ParamStore<float>&, std::size_t, const AdapterConfig&, Rng&);
template void init_projector(ParamStore<double>&, std::size_t, const AdapterConfig&, Rng&);
template Tensor<float> project(const Tensor<float>&, const ParamStore<float>&, const AdapterConfig&);
template Tensor<double> project(const Tensor<double>&, const ParamStore<double>&, const AdapterConfig&);

}  // namespace ctgpt::adapter
