#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ctgpt/tensor/random.hpp"
#include "ctgpt/tensor/tensor.hpp"

namespace ctgpt {

/// A named leaf tensor plus its freeze flag.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> tensor;
  bool frozen = false;
};

/// Ordered collection of parameters keyed by dotted name
/// ("encoder.block0.attn.wq.weight"). Insertion order is the checkpoint order.
template <typename T>
class ParamStore {
 public:
  Parameter<T>& add(std::string name, Tensor<T> tensor, bool frozen = false) {
    if (index_.count(name)) throw ArgumentError("duplicate parameter name: " + name);
    tensor.set_requires_grad(!frozen);
    index_.emplace(name, params_.size());
    params_.push_back({std::move(name), std::move(tensor), frozen});
    return params_.back();
  }

  /// Normal(0, stddev) initialized parameter.
  Parameter<T>& add_normal(std::string name, Shape shape, double stddev, Rng& rng) {
    std::vector<T> data(shape_numel(shape));
    for (auto& v : data) v = static_cast<T>(rng.normal(0.0, stddev));
    return add(std::move(name), Tensor<T>::from_data(std::move(shape), std::move(data)));
  }

  Parameter<T>& add_constant(std::string name, Shape shape, T value) {
    return add(std::move(name), Tensor<T>::full(std::move(shape), value));
  }

  bool contains(std::string_view name) const { return index_.count(std::string(name)) > 0; }

  const Tensor<T>& get(std::string_view name) const { return entry(name).tensor; }
  Parameter<T>& entry(std::string_view name) {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw ArgumentError("unknown parameter: " + std::string(name));
    return params_[it->second];
  }
  const Parameter<T>& entry(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw ArgumentError("unknown parameter: " + std::string(name));
    return params_[it->second];
  }

  void set_frozen(Parameter<T>& p, bool frozen) {
    p.frozen = frozen;
    p.tensor.set_requires_grad(!frozen);
  }

  /// Freezes every parameter, then unfreezes those whose name starts with one
  /// of `prefixes`.
  void freeze_all_except(const std::vector<std::string>& prefixes) {
    for (auto& p : params_) {
      bool train = false;
      for (const auto& pre : prefixes) train = train || p.name.rfind(pre, 0) == 0;
      set_frozen(p, !train);
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  /// Releases every gradient buffer so the next backward pass is the only
  /// source of gradients.
  void clear_grads() {
    for (auto& p : params_) p.tensor.release_grad();
  }

  /// FNV-1a over name and raw bytes of every parameter whose name starts with
  /// `prefix`, skipping names that start with any entry of `exclude`.
  std::uint64_t hash(std::string_view prefix = "",
                     const std::vector<std::string>& exclude = {}) const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : params_) {
      if (p.name.rfind(prefix, 0) != 0) continue;
      bool skip = false;
      for (const auto& e : exclude) skip = skip || p.name.rfind(e, 0) == 0;
      if (skip) continue;
      h = fnv1a(p.name, h);
      h = fnv1a(p.tensor.data().data(), p.tensor.numel() * sizeof(T), h);
    }
    return h;
  }

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.numel();
    return n;
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  /// Deep copy into another scalar type, preserving order and freeze flags.
  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& p : params_) {
      std::vector<U> data(p.tensor.data().begin(), p.tensor.data().end());
      out.add(p.name, Tensor<U>::from_data(p.tensor.shape(), std::move(data)), p.frozen);
    }
    return out;
  }

  /// Overwrites the values of every parameter whose name starts with `prefix`
  /// with the same-named entry of `src`. Shapes must match.
  void copy_values_from(const ParamStore& src, std::string_view prefix) {
    for (auto& p : params_) {
      if (p.name.rfind(prefix, 0) != 0) continue;
      const auto& s = src.get(p.name);
      if (s.shape() != p.tensor.shape()) throw ArgumentError("shape mismatch copying " + p.name);
      std::copy(s.data().begin(), s.data().end(), p.tensor.mutable_data().begin());
    }
  }

  /// Deep copy (new tensors, same values and flags).
  ParamStore clone() const { return cast<T>(); }

 private:
  std::vector<Parameter<T>> params_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace ctgpt
