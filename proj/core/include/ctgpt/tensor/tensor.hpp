#pragma once

// Dense row-major tensors with a dynamic reverse-mode autodiff tape.
//
// A Tensor is a cheap handle onto a shared node. Nodes produced by ops are
// never mutated after construction except for their gradient buffer; leaf
// parameters are the only tensors whose data the optimizer writes to.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "ctgpt/errors.hpp"

namespace ctgpt {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until something accumulates into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Reads `self.grad` and accumulates into `self.parents`.
  std::function<void(TensorNode&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
};

/// True unless a NoGradGuard is alive on this thread.
bool grad_enabled();

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
class Tensor {
 public:
  using value_type = T;
  using Node = TensorNode<T>;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), T(0), requires_grad);
  }

  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    auto n = shape_numel(shape);
    return from_data(std::move(shape), std::vector<T>(n, value), requires_grad);
  }

  static Tensor from_data(Shape shape, std::vector<T> data, bool requires_grad = false) {
    for (auto d : shape) {
      if (d == 0) throw ArgumentError("tensor axis lengths must be positive: " + shape_str(shape));
    }
    if (shape_numel(shape) != data.size()) {
      throw ArgumentError("tensor data length " + std::to_string(data.size()) +
                          " does not match shape " + shape_str(shape));
    }
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    Tensor t(std::move(node));
    t.set_requires_grad(requires_grad);
    return t;
  }

  static Tensor scalar(T value, bool requires_grad = false) {
    return from_data({1}, {value}, requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node().shape; }
  std::size_t rank() const { return node().shape.size(); }
  std::size_t dim(std::size_t axis) const { return node().shape.at(axis); }
  std::size_t numel() const { return node().data.size(); }

  std::span<const T> data() const { return node().data; }
  /// Direct write access. Only meaningful for leaves (parameters, inputs).
  std::span<T> mutable_data() { return node().data; }
  const std::vector<T>& vec() const { return node().data; }

  bool requires_grad() const { return node().requires_grad; }
  void set_requires_grad(bool on) {
    node().requires_grad = on;
    if (on) node().ensure_grad();
  }

  bool has_grad() const { return node().grad.size() == node().data.size(); }
  std::span<const T> grad() const {
    if (!has_grad()) throw StateError("tensor has no gradient buffer");
    return node().grad;
  }
  std::span<T> mutable_grad() {
    node().ensure_grad();
    return node().grad;
  }
  void zero_grad() {
    if (has_grad()) std::fill(node().grad.begin(), node().grad.end(), T(0));
  }
  /// Drops the gradient buffer entirely; has_grad() is false until the next
  /// backward pass reaches this tensor.
  void release_grad() {
    node().grad.clear();
    node().grad.shrink_to_fit();
  }

  T item() const {
    if (numel() != 1) throw ArgumentError("item() on tensor of shape " + shape_str(shape()));
    return node().data[0];
  }

  T at(std::initializer_list<std::size_t> index) const;

  /// Reverse-mode sweep from this scalar. Populates grad on every reachable
  /// node that requires grad.
  void backward() const;

  /// Same data, no history, no grad.
  Tensor detach() const { return from_data(shape(), node().data, false); }

  /// Deep copy, keeping the requires_grad flag (leaf semantics).
  Tensor clone() const { return from_data(shape(), node().data, requires_grad()); }

  Node& node() const {
    if (!node_) throw StateError("use of undefined tensor");
    return *node_;
  }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

template <typename T>
T Tensor<T>::at(std::initializer_list<std::size_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) throw ArgumentError("index rank mismatch");
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= s[axis]) throw ArgumentError("index out of range");
    flat = flat * s[axis] + i;
    ++axis;
  }
  return node().data[flat];
}

template <typename T>
void Tensor<T>::backward() const {
  if (numel() != 1) {
    throw ArgumentError("backward() requires a scalar loss, got shape " + shape_str(shape()));
  }
  if (!requires_grad()) return;

  // Iterative post-order DFS yields a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node().ensure_grad();
  node().grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.size() == n->data.size()) n->backward_fn(*n);
  }
}

}  // namespace ctgpt
