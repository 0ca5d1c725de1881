#include "ctgpt/nn/transformer.hpp"

#include "ctgpt/tensor/ops.hpp"

namespace ctgpt::nn {

template <typename T>
void init_block(ParamStore<T>& store, const std::string& prefix, std::size_t d, std::size_t hidden,
                double stddev, Rng& rng) {
  store.add_constant(prefix + ".ln1.gamma", {d}, T(1));
  store.add_constant(prefix + ".ln1.beta", {d}, T(0));
  for (const char* w : {"wq", "wk", "wv", "wo"}) {
    const std::string base = prefix + ".attn." + w;
    store.add_normal(base + ".weight", {d, d}, stddev, rng);
    store.add_constant(base + ".bias", {d}, T(0));
  }
  store.add_constant(prefix + ".ln2.gamma", {d}, T(1));
  store.add_constant(prefix + ".ln2.beta", {d}, T(0));
  store.add_normal(prefix + ".mlp.fc1.weight", {hidden, d}, stddev, rng);
  store.add_constant(prefix + ".mlp.fc1.bias", {hidden}, T(0));
  store.add_normal(prefix + ".mlp.fc2.weight", {d, hidden}, stddev, rng);
  store.add_constant(prefix + ".mlp.fc2.bias", {d}, T(0));
}

template <typename T>
Tensor<T> apply_linear(const Tensor<T>& x, const ParamStore<T>& store, const std::string& prefix) {
  const std::string bias = prefix + ".bias";
  return ops::linear(x, store.get(prefix + ".weight"),
                     store.contains(bias) ? store.get(bias) : Tensor<T>{});
}

template <typename T>
Tensor<T> apply_layer_norm(const Tensor<T>& x, const ParamStore<T>& store, const std::string& prefix) {
  return ops::layer_norm(x, store.get(prefix + ".gamma"), store.get(prefix + ".beta"));
}

namespace {

template <typename T>
Tensor<T> projection(const Tensor<T>& x, const ParamStore<T>& store, const std::string& prefix,
                     const char* name, const LoraBinding* lora) {
  auto y = apply_linear(x, store, prefix + ".attn." + name);
  if (lora && lora->targets.count(name)) {
    const std::string base = lora->prefix + "." + name;
    auto down = ops::linear(x, store.get(base + ".A"));
    auto up = ops::linear(down, store.get(base + ".B"));
    y = ops::add(y, ops::scale(up, static_cast<T>(lora->scale)));
  }
  return y;
}

}  // namespace

template <typename T>
Tensor<T> block_forward(const Tensor<T>& x, const ParamStore<T>& store, const std::string& prefix,
                        std::size_t heads, bool causal, const LoraBinding* lora) {
  auto n1 = apply_layer_norm(x, store, prefix + ".ln1");
  auto q = projection(n1, store, prefix, "wq", lora);
  auto k = projection(n1, store, prefix, "wk", lora);
  auto v = projection(n1, store, prefix, "wv", lora);
  auto att = ops::attention(q, k, v, heads, causal);
  auto h = ops::add(x, projection(att, store, prefix, "wo", lora));
  auto n2 = apply_layer_norm(h, store, prefix + ".ln2");
  auto mlp = apply_linear(ops::gelu(apply_linear(n2, store, prefix + ".mlp.fc1")), store,
                          prefix + ".mlp.fc2");
  return ops::add(h, mlp);
}

template void init_block(ParamStore<float>&, const std::string&, std::size_t, std::size_t, double, Rng&);
template void init_block(ParamStore<double>&, const std::string&, std::size_t, std::size_t, double, Rng&);
template Tensor<float> block_forward(const Tensor<float>&, const ParamStore<float>&, const std::string&,
                                     std::size_t, bool, const LoraBinding*);
template Tensor<double> block_forward(const Tensor<double>&, const ParamStore<double>&,
                                      const std::string&, std::size_t, bool, const LoraBinding*);
template Tensor<float> apply_linear(const Tensor<float>&, const ParamStore<float>&, const std::string&);
template Tensor<double> apply_linear(const Tensor<double>&, const ParamStore<double>&, const std::string&);
template Tensor<float> apply_layer_norm(const Tensor<float>&, const ParamStore<float>&, const std::string&);
template Tensor<double> apply_layer_norm(const Tensor<double>&, const ParamStore<double>&,
                                         const std::string&);

}  // namespace ctgpt::nn
