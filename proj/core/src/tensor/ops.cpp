#include "ctgpt/tensor/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "gemm.hpp"

namespace ctgpt {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }
NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

}  // namespace ctgpt

namespace ctgpt::ops {
namespace {

template <typename T>
using Node = TensorNode<T>;

template <typename T>
using BackwardFn = std::function<void(Node<T>&)>;

// Builds the output tensor and, when recording, wires it into the tape.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, std::initializer_list<Tensor<T>> inputs,
                      BackwardFn<T> fn) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  bool record = false;
  if (grad_enabled()) {
    for (const auto& in : inputs) {
      if (in.defined() && in.requires_grad()) record = true;
    }
  }
  if (record) {
    node->requires_grad = true;
    for (const auto& in : inputs) {
      if (in.defined()) node->parents.push_back(in.node_ptr());
    }
    node->backward_fn = std::move(fn);
  }
  return Tensor<T>(std::move(node));
}

// Gradient buffer of a parent, or nullptr when it does not need one.
template <typename T>
std::vector<T>* grad_buf(Node<T>& self, std::size_t parent) {
  auto& p = *self.parents[parent];
  if (!p.requires_grad) return nullptr;
  p.ensure_grad();
  return &p.grad;
}

Shape strides_of(const Shape& shape) {
  Shape s(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) s[i - 1] = s[i] * shape[i];
  return s;
}

// Whether `b` is `a` itself or a trailing suffix of it.
bool is_suffix(const Shape& a, const Shape& b) {
  if (b.size() > a.size()) return false;
  return std::equal(b.rbegin(), b.rend(), a.rbegin());
}

template <typename T>
T pairwise_sum(T* v, std::size_t n) {
  if (n == 1) return v[0];
  if (n == 2) return v[0] + v[1];
  std::size_t h = n / 2;
  return pairwise_sum(v, h) + pairwise_sum(v + h, n - h);
}

}  // namespace

// ---------------------------------------------------------------------------
template <typename T>
Tensor<T> permute(const Tensor<T>& t, std::span<const std::size_t> axes) {
  const auto& in_shape = t.shape();
  const std::size_t r = in_shape.size();
  if (axes.size() != r) throw ArgumentError("permute: axes length does not match rank");
  std::vector<bool> seen(r, false);
  for (auto a : axes) {
    if (a >= r || seen[a]) throw ArgumentError("permute: axes is not a permutation");
    seen[a] = true;
  }
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = in_shape[axes[i]];
  const auto in_strides = strides_of(in_shape);
  Shape src_stride(r);  // stride in the input for each output axis
  for (std::size_t i = 0; i < r; ++i) src_stride[i] = in_strides[axes[i]];

  const std::size_t n = t.numel();
  // Output flat index j maps to input index map[j].
  std::vector<std::size_t> map(n);
  std::vector<std::size_t> idx(r, 0);
  std::size_t src = 0;
  for (std::size_t j = 0; j < n; ++j) {
    map[j] = src;
    for (std::size_t ax = r; ax-- > 0;) {
      ++idx[ax];
      src += src_stride[ax];
      if (idx[ax] < out_shape[ax]) break;
      src -= src_stride[ax] * out_shape[ax];
      idx[ax] = 0;
    }
  }
  const auto& in = t.vec();
  std::vector<T> out(n);
  for (std::size_t j = 0; j < n; ++j) out[j] = in[map[j]];

  return make_result<T>(std::move(out_shape), std::move(out), {t},
                        [map = std::move(map)](Node<T>& self) {
                          if (auto* g = grad_buf(self, 0)) {
                            for (std::size_t j = 0; j < map.size(); ++j) (*g)[map[j]] += self.grad[j];
                          }
                        });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& t, Shape new_shape) {
  if (shape_numel(new_shape) != t.numel()) {
    throw ArgumentError("reshape: cannot view " + shape_str(t.shape()) + " as " +
                        shape_str(new_shape));
  }
  for (auto d : new_shape) {
    if (d == 0) throw ArgumentError("reshape: zero-length axis");
  }
  return make_result<T>(std::move(new_shape), t.vec(), {t}, [](Node<T>& self) {
    if (auto* g = grad_buf(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> avg_pool3d(const Tensor<T>& t, std::size_t k) {
  const auto& s = t.shape();
  if (s.size() != 5) throw ArgumentError("avg_pool3d: expected rank-5 input, got " + shape_str(s));
  if (k == 0) throw ArgumentError("avg_pool3d: kernel must be positive");
  for (int ax = 2; ax < 5; ++ax) {
    if (s[ax] % k != 0) {
      throw ArgumentError("avg_pool3d: axis " + std::to_string(ax) + " of " + shape_str(s) +
                          " not divisible by kernel " + std::to_string(k));
    }
  }
  const std::size_t planes = s[0] * s[1];
  const std::size_t d1 = s[2], d2 = s[3], d3 = s[4];
  const std::size_t o1 = d1 / k, o2 = d2 / k, o3 = d3 / k;
  const std::size_t block = k * k * k;
  const T inv = T(1) / static_cast<T>(block);
  const auto& in = t.vec();
  std::vector<T> out(planes * o1 * o2 * o3);
  std::vector<T> buf(block);
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = in.data() + p * d1 * d2 * d3;
    T* dst = out.data() + p * o1 * o2 * o3;
    for (std::size_t a = 0; a < o1; ++a)
      for (std::size_t b = 0; b < o2; ++b)
        for (std::size_t c = 0; c < o3; ++c) {
          std::size_t q = 0;
          for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j)
              for (std::size_t l = 0; l < k; ++l)
                buf[q++] = src[((a * k + i) * d2 + (b * k + j)) * d3 + (c * k + l)];
          dst[(a * o2 + b) * o3 + c] = pairwise_sum(buf.data(), block) / static_cast<T>(block);
        }
  }
  Shape out_shape{s[0], s[1], o1, o2, o3};
  return make_result<T>(std::move(out_shape), std::move(out), {t},
                        [=](Node<T>& self) {
                          auto* g = grad_buf(self, 0);
                          if (!g) return;
                          for (std::size_t p = 0; p < planes; ++p) {
                            T* dst = g->data() + p * d1 * d2 * d3;
                            const T* go = self.grad.data() + p * o1 * o2 * o3;
                            for (std::size_t z = 0; z < d1; ++z)
                              for (std::size_t y = 0; y < d2; ++y)
                                for (std::size_t x = 0; x < d3; ++x)
                                  dst[(z * d2 + y) * d3 + x] +=
                                      go[((z / k) * o2 + y / k) * o3 + x / k] * inv;
                          }
                        });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  if (as.size() < 2 || bs.size() < 2) throw ArgumentError("matmul: operands must have rank >= 2");
  const std::size_t m = as[as.size() - 2], k = as.back();
  const std::size_t k2 = bs[bs.size() - 2], n = bs.back();
  if (k != k2) {
    throw ArgumentError("matmul: inner dimensions differ: " + shape_str(as) + " x " + shape_str(bs));
  }
  Shape a_batch(as.begin(), as.end() - 2), b_batch(bs.begin(), bs.end() - 2);
  const std::size_t br = std::max(a_batch.size(), b_batch.size());
  Shape out_batch(br);
  for (std::size_t i = 0; i < br; ++i) {
    std::size_t da = i + a_batch.size() >= br ? a_batch[i + a_batch.size() - br] : 1;
    std::size_t db = i + b_batch.size() >= br ? b_batch[i + b_batch.size() - br] : 1;
    if (da != db && da != 1 && db != 1) {
      throw ArgumentError("matmul: batch prefixes not broadcastable: " + shape_str(as) + " x " +
                          shape_str(bs));
    }
    out_batch[i] = std::max(da, db);
  }
  const std::size_t nb = shape_numel(out_batch);
  // Per output batch, the flat batch offsets into a and b.
  std::vector<std::size_t> a_off(nb), b_off(nb);
  {
    auto a_str = strides_of(a_batch), b_str = strides_of(b_batch);
    std::vector<std::size_t> idx(br, 0);
    for (std::size_t q = 0; q < nb; ++q) {
      std::size_t ao = 0, bo = 0;
      for (std::size_t i = 0; i < br; ++i) {
        if (i + a_batch.size() >= br) {
          std::size_t ai = i + a_batch.size() - br;
          if (a_batch[ai] != 1) ao += idx[i] * a_str[ai];
        }
        if (i + b_batch.size() >= br) {
          std::size_t bi = i + b_batch.size() - br;
          if (b_batch[bi] != 1) bo += idx[i] * b_str[bi];
        }
      }
      a_off[q] = ao;
      b_off[q] = bo;
      for (std::size_t ax = br; ax-- > 0;) {
        if (++idx[ax] < out_batch[ax]) break;
        idx[ax] = 0;
      }
    }
  }
  std::vector<T> out(nb * m * n, T(0));
  for (std::size_t q = 0; q < nb; ++q) {
    detail::gemm_nn(m, k, n, a.vec().data() + a_off[q] * m * k, b.vec().data() + b_off[q] * k * n,
                    out.data() + q * m * n);
  }
  Shape out_shape = out_batch;
  out_shape.push_back(m);
  out_shape.push_back(n);
  return make_result<T>(std::move(out_shape), std::move(out), {a, b},
                        [=](Node<T>& self) {
                          const auto& av = self.parents[0]->data;
                          const auto& bv = self.parents[1]->data;
                          auto* ga = grad_buf(self, 0);
                          auto* gb = grad_buf(self, 1);
                          for (std::size_t q = 0; q < nb; ++q) {
                            const T* go = self.grad.data() + q * m * n;
                            if (ga) {
                              detail::gemm_nt(m, n, k, go, bv.data() + b_off[q] * k * n,
                                              ga->data() + a_off[q] * m * k);
                            }
                            if (gb) {
                              detail::gemm_tn(k, m, n, av.data() + a_off[q] * m * k, go,
                                              gb->data() + b_off[q] * k * n);
                            }
                          }
                        });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  const auto& xs = x.shape();
  const auto& ws = weight.shape();
  if (ws.size() != 2) throw ArgumentError("linear: weight must be rank 2");
  const std::size_t out_f = ws[0], in_f = ws[1];
  if (xs.back() != in_f) {
    throw ArgumentError("linear: input width " + std::to_string(xs.back()) +
                        " does not match weight " + shape_str(ws));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != out_f)) {
    throw ArgumentError("linear: bias shape " + shape_str(bias.shape()) + " does not match weight");
  }
  const std::size_t rows = x.numel() / in_f;
  std::vector<T> out(rows * out_f, T(0));
  if (bias.defined()) {
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(bias.vec().begin(), bias.vec().end(), out.begin() + r * out_f);
  }
  {
    auto wt = detail::transpose(weight.vec().data(), out_f, in_f);
    std::vector<T> acc(rows * out_f, T(0));
    detail::gemm_nn(rows, in_f, out_f, x.vec().data(), wt.data(), acc.data());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += acc[i];
  }
  Shape out_shape = xs;
  out_shape.back() = out_f;
  const bool has_bias = bias.defined();
  return make_result<T>(std::move(out_shape), std::move(out), {x, weight, bias},
                        [=](Node<T>& self) {
                          const auto& xv = self.parents[0]->data;
                          const auto& wv = self.parents[1]->data;
                          if (auto* gx = grad_buf(self, 0))
                            detail::gemm_nn(rows, out_f, in_f, self.grad.data(), wv.data(), gx->data());
                          if (auto* gw = grad_buf(self, 1))
                            detail::gemm_tn(out_f, rows, in_f, self.grad.data(), xv.data(), gw->data());
                          if (has_bias) {
                            if (auto* gb = grad_buf(self, 2)) {
                              for (std::size_t r = 0; r < rows; ++r)
                                for (std::size_t o = 0; o < out_f; ++o)
                                  (*gb)[o] += self.grad[r * out_f + o];
                            }
                          }
                        });
}

namespace {

enum class Binary { Add, Sub, Mul };

template <typename T>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, Binary kind) {
  if (!is_suffix(a.shape(), b.shape())) {
    throw ArgumentError("elementwise: shape " + shape_str(b.shape()) +
                        " does not broadcast onto " + shape_str(a.shape()));
  }
  const std::size_t n = a.numel(), nb = b.numel();
  const auto& av = a.vec();
  const auto& bv = b.vec();
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const T x = av[i], y = bv[i % nb];
    out[i] = kind == Binary::Add ? x + y : kind == Binary::Sub ? x - y : x * y;
  }
  return make_result<T>(a.shape(), std::move(out), {a, b}, [=](Node<T>& self) {
    const auto& xa = self.parents[0]->data;
    const auto& xb = self.parents[1]->data;
    if (auto* ga = grad_buf(self, 0)) {
      for (std::size_t i = 0; i < n; ++i)
        (*ga)[i] += kind == Binary::Mul ? self.grad[i] * xb[i % nb] : self.grad[i];
    }
    if (auto* gb = grad_buf(self, 1)) {
      for (std::size_t i = 0; i < n; ++i) {
        T d = kind == Binary::Add ? self.grad[i]
              : kind == Binary::Sub ? -self.grad[i]
                                    : self.grad[i] * xa[i];
        (*gb)[i % nb] += d;
      }
    }
  });
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, Binary::Add);
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, Binary::Sub);
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, Binary::Mul);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& t, T factor) {
  std::vector<T> out(t.vec());
  for (auto& v : out) v *= factor;
  return make_result<T>(t.shape(), std::move(out), {t}, [factor](Node<T>& self) {
    if (auto* g = grad_buf(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * factor;
    }
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& t) {
  double acc = 0.0;
  for (auto v : t.vec()) acc += v;
  return make_result<T>({1}, {static_cast<T>(acc)}, {t}, [](Node<T>& self) {
    if (auto* g = grad_buf(self, 0)) {
      for (auto& v : *g) v += self.grad[0];
    }
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& t) {
  return scale(sum(t), T(1) / static_cast<T>(t.numel()));
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps) {
  const std::size_t d = x.shape().back();
  if (gamma.numel() != d || beta.numel() != d) {
    throw ArgumentError("layer_norm: affine parameters must have length " + std::to_string(d));
  }
  const std::size_t rows = x.numel() / d;
  const auto& xv = x.vec();
  const auto& gv = gamma.vec();
  const auto& bv = beta.vec();
  std::vector<T> out(x.numel());
  std::vector<T> xhat(x.numel());
  std::vector<T> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv.data() + r * d;
    double mu = 0.0;
    for (std::size_t i = 0; i < d; ++i) mu += row[i];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      double c = row[i] - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double rs = 1.0 / std::sqrt(var + eps);
    rstd[r] = static_cast<T>(rs);
    for (std::size_t i = 0; i < d; ++i) {
      const T h = static_cast<T>((row[i] - mu) * rs);
      xhat[r * d + i] = h;
      out[r * d + i] = h * gv[i] + bv[i];
    }
  }
  return make_result<T>(x.shape(), std::move(out), {x, gamma, beta},
                        [=, xhat = std::move(xhat), rstd = std::move(rstd)](Node<T>& self) {
                          const auto& g = self.parents[1]->data;
                          auto* gx = grad_buf(self, 0);
                          auto* gg = grad_buf(self, 1);
                          auto* gb = grad_buf(self, 2);
                          for (std::size_t r = 0; r < rows; ++r) {
                            const T* dy = self.grad.data() + r * d;
                            const T* h = xhat.data() + r * d;
                            if (gg || gb) {
                              for (std::size_t i = 0; i < d; ++i) {
                                if (gg) (*gg)[i] += dy[i] * h[i];
                                if (gb) (*gb)[i] += dy[i];
                              }
                            }
                            if (gx) {
                              double m1 = 0.0, m2 = 0.0;
                              for (std::size_t i = 0; i < d; ++i) {
                                const double dh = static_cast<double>(dy[i]) * g[i];
                                m1 += dh;
                                m2 += dh * h[i];
                              }
                              m1 /= static_cast<double>(d);
                              m2 /= static_cast<double>(d);
                              for (std::size_t i = 0; i < d; ++i) {
                                const double dh = static_cast<double>(dy[i]) * g[i];
                                (*gx)[r * d + i] += static_cast<T>(rstd[r] * (dh - m1 - h[i] * m2));
                              }
                            }
                          }
                        });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& t) {
  const auto& v = t.vec();
  std::vector<T> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double x = v[i];
    out[i] = static_cast<T>(0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)));
  }
  return make_result<T>(t.shape(), std::move(out), {t}, [](Node<T>& self) {
    auto* g = grad_buf(self, 0);
    if (!g) return;
    const auto& xv = self.parents[0]->data;
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const double x = xv[i];
      const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
      (*g)[i] += static_cast<T>(self.grad[i] * (cdf + x * pdf));
    }
  });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& t) {
  const std::size_t d = t.shape().back();
  const std::size_t rows = t.numel() / d;
  const auto& v = t.vec();
  std::vector<T> out(v.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = v.data() + r * d;
    T mx = *std::max_element(row, row + d);
    double z = 0.0;
    for (std::size_t i = 0; i < d; ++i) z += std::exp(static_cast<double>(row[i] - mx));
    for (std::size_t i = 0; i < d; ++i)
      out[r * d + i] = static_cast<T>(std::exp(static_cast<double>(row[i] - mx)) / z);
  }
  return make_result<T>(t.shape(), std::move(out), {t}, [d, rows](Node<T>& self) {
    auto* g = grad_buf(self, 0);
    if (!g) return;
    const auto& y = self.data;
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t i = 0; i < d; ++i) dot += static_cast<double>(self.grad[r * d + i]) * y[r * d + i];
      for (std::size_t i = 0; i < d; ++i)
        (*g)[r * d + i] += static_cast<T>(y[r * d + i] * (self.grad[r * d + i] - dot));
    }
  });
}

template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const std::int64_t> ids) {
  if (table.rank() != 2) throw ArgumentError("embedding: table must be rank 2");
  if (ids.empty()) throw ArgumentError("embedding: empty id list");
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  std::vector<std::int64_t> rows(ids.begin(), ids.end());
  std::vector<T> out(rows.size() * d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || static_cast<std::size_t>(rows[i]) >= vocab) {
      throw ArgumentError("embedding: id " + std::to_string(rows[i]) + " outside vocabulary of " +
                          std::to_string(vocab));
    }
    std::copy_n(table.vec().begin() + rows[i] * d, d, out.begin() + i * d);
  }
  const std::size_t n = rows.size();
  return make_result<T>({n, d}, std::move(out), {table},
                        [d, rows = std::move(rows)](Node<T>& self) {
                          auto* g = grad_buf(self, 0);
                          if (!g) return;
                          for (std::size_t i = 0; i < rows.size(); ++i)
                            for (std::size_t j = 0; j < d; ++j)
                              (*g)[rows[i] * d + j] += self.grad[i * d + j];
                        });
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::int64_t> targets,
                        std::span<const std::uint8_t> mask) {
  const std::size_t v = logits.shape().back();
  const std::size_t rows = logits.numel() / v;
  if (targets.size() != rows || mask.size() != rows) {
    throw ArgumentError("cross_entropy: expected " + std::to_string(rows) +
                        " targets and mask entries");
  }
  std::size_t count = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (mask[r] > 1) throw ArgumentError("cross_entropy: mask entries must be 0 or 1");
    if (mask[r]) {
      if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= v)
        throw ArgumentError("cross_entropy: target id out of range");
      ++count;
    }
  }
  if (count == 0) throw ArgumentError("cross_entropy: mask selects no positions");

  const auto& lv = logits.vec();
  std::vector<T> probs(rows * v, T(0));
  double total = 0.0;
  std::vector<std::int64_t> tgt(targets.begin(), targets.end());
  std::vector<std::uint8_t> msk(mask.begin(), mask.end());
  for (std::size_t r = 0; r < rows; ++r) {
    if (!msk[r]) continue;
    const T* row = lv.data() + r * v;
    const double mx = *std::max_element(row, row + v);
    double z = 0.0;
    for (std::size_t i = 0; i < v; ++i) z += std::exp(row[i] - mx);
    const double lse = mx + std::log(z);
    total += lse - row[tgt[r]];
    for (std::size_t i = 0; i < v; ++i) probs[r * v + i] = static_cast<T>(std::exp(row[i] - lse));
  }
  const T inv = T(1) / static_cast<T>(count);
  return make_result<T>({1}, {static_cast<T>(total / static_cast<double>(count))}, {logits},
                        [=, probs = std::move(probs), tgt = std::move(tgt),
                         msk = std::move(msk)](Node<T>& self) {
                          auto* g = grad_buf(self, 0);
                          if (!g) return;
                          const T scale_by = self.grad[0] * inv;
                          for (std::size_t r = 0; r < rows; ++r) {
                            if (!msk[r]) continue;
                            for (std::size_t i = 0; i < v; ++i) {
                              T p = probs[r * v + i];
                              if (static_cast<std::int64_t>(i) == tgt[r]) p -= T(1);
                              (*g)[r * v + i] += p * scale_by;
                            }
                          }
                        });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ArgumentError("concat: no inputs");
  const Shape& ref = parts.front().shape();
  if (axis >= ref.size()) throw ArgumentError("concat: axis out of range");
  std::size_t total_axis = 0;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    if (s.size() != ref.size()) throw ArgumentError("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != ref[i]) {
        throw ArgumentError("concat: shape " + shape_str(s) + " incompatible with " + shape_str(ref));
      }
    }
    total_axis += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= ref[i];
  for (std::size_t i = axis + 1; i < ref.size(); ++i) inner *= ref[i];
  Shape out_shape = ref;
  out_shape[axis] = total_axis;
  const std::size_t out_row = total_axis * inner;
  std::vector<T> out(outer * out_row);
  std::vector<std::size_t> widths, offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.shape()[axis] * inner;
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(p.vec().begin() + o * w, w, out.begin() + o * out_row + off);
    widths.push_back(w);
    offsets.push_back(off);
    off += w;
  }

  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(out_shape);
  node->data = std::move(out);
  bool record = false;
  if (grad_enabled()) {
    for (const auto& p : parts) record = record || p.requires_grad();
  }
  if (record) {
    node->requires_grad = true;
    for (const auto& p : parts) node->parents.push_back(p.node_ptr());
    node->backward_fn = [=](Node<T>& self) {
      for (std::size_t k = 0; k < widths.size(); ++k) {
        auto* g = grad_buf(self, k);
        if (!g) continue;
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < widths[k]; ++i)
            (*g)[o * widths[k] + i] += self.grad[o * out_row + offsets[k] + i];
      }
    };
  }
  return Tensor<T>(std::move(node));
}

template <typename T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::size_t heads,
                    bool causal) {
  const auto& s = q.shape();
  if (s.size() != 3 || k.shape() != s || v.shape() != s) {
    throw ArgumentError("attention: q, k, v must share a [B, L, D] shape");
  }
  const std::size_t batch = s[0], len = s[1], dm = s[2];
  if (heads == 0 || dm % heads != 0) throw ArgumentError("attention: D not divisible by heads");
  const std::size_t dh = dm / heads;
  const T sc = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  const bool record =
      grad_enabled() && (q.requires_grad() || k.requires_grad() || v.requires_grad());

  const auto& qv = q.vec();
  const auto& kv = k.vec();
  const auto& vv = v.vec();
  std::vector<T> out(q.numel(), T(0));
  std::vector<T> probs;  // [B, H, L, L], kept only when recording
  if (record) probs.assign(batch * heads * len * len, T(0));
  std::vector<T> kt(dh * len), vh(len * dh), row(len);

  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t j = 0; j < len; ++j)
        for (std::size_t d = 0; d < dh; ++d) {
          kt[d * len + j] = kv[(b * len + j) * dm + h * dh + d];
          vh[j * dh + d] = vv[(b * len + j) * dm + h * dh + d];
        }
      for (std::size_t i = 0; i < len; ++i) {
        const std::size_t span_len = causal ? i + 1 : len;
        std::fill(row.begin(), row.begin() + span_len, T(0));
        const T* qi = qv.data() + (b * len + i) * dm + h * dh;
        for (std::size_t d = 0; d < dh; ++d) {
          const T a = qi[d];
          const T* krow = kt.data() + d * len;
          for (std::size_t j = 0; j < span_len; ++j) row[j] += a * krow[j];
        }
        T mx = row[0] * sc;
        for (std::size_t j = 0; j < span_len; ++j) {
          row[j] *= sc;
          mx = std::max(mx, row[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < span_len; ++j) {
          row[j] = static_cast<T>(std::exp(static_cast<double>(row[j] - mx)));
          z += row[j];
        }
        const T invz = static_cast<T>(1.0 / z);
        T* oi = out.data() + (b * len + i) * dm + h * dh;
        for (std::size_t j = 0; j < span_len; ++j) {
          const T p = row[j] * invz;
          if (record) probs[((b * heads + h) * len + i) * len + j] = p;
          const T* vrow = vh.data() + j * dh;
          for (std::size_t d = 0; d < dh; ++d) oi[d] += p * vrow[d];
        }
      }
    }
  }

  auto node = std::make_shared<Node<T>>();
  node->shape = s;
  node->data = std::move(out);
  if (record) {
    node->requires_grad = true;
    node->parents = {q.node_ptr(), k.node_ptr(), v.node_ptr()};
    node->backward_fn = [=, probs = std::move(probs)](Node<T>& self) {
      const auto& qd = self.parents[0]->data;
      const auto& kd = self.parents[1]->data;
      const auto& vd = self.parents[2]->data;
      auto* gq = grad_buf(self, 0);
      auto* gk = grad_buf(self, 1);
      auto* gv = grad_buf(self, 2);
      std::vector<T> dp(len);
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t h = 0; h < heads; ++h) {
          for (std::size_t i = 0; i < len; ++i) {
            const std::size_t span_len = causal ? i + 1 : len;
            const T* p = probs.data() + ((b * heads + h) * len + i) * len;
            const T* go = self.grad.data() + (b * len + i) * dm + h * dh;
            // dP = dO V^T ; dV += P^T dO
            double dot = 0.0;
            for (std::size_t j = 0; j < span_len; ++j) {
              const T* vj = vd.data() + (b * len + j) * dm + h * dh;
              T acc = T(0);
              for (std::size_t d = 0; d < dh; ++d) acc += go[d] * vj[d];
              dp[j] = acc;
              dot += static_cast<double>(acc) * p[j];
              if (gv) {
                T* gvj = gv->data() + (b * len + j) * dm + h * dh;
                for (std::size_t d = 0; d < dh; ++d) gvj[d] += p[j] * go[d];
              }
            }
            // dS = P * (dP - sum(dP * P)), scaled
            const T* qi = qd.data() + (b * len + i) * dm + h * dh;
            for (std::size_t j = 0; j < span_len; ++j) {
              const T ds = static_cast<T>(p[j] * (dp[j] - dot)) * sc;
              if (ds == T(0)) continue;
              const T* kj = kd.data() + (b * len + j) * dm + h * dh;
              if (gq) {
                T* gqi = gq->data() + (b * len + i) * dm + h * dh;
                for (std::size_t d = 0; d < dh; ++d) gqi[d] += ds * kj[d];
              }
              if (gk) {
                T* gkj = gk->data() + (b * len + j) * dm + h * dh;
                for (std::size_t d = 0; d < dh; ++d) gkj[d] += ds * qi[d];
              }
            }
          }
        }
      }
    };
  }
  return Tensor<T>(std::move(node));
}

#define CTGPT_INSTANTIATE_OPS(T)                                                              \
  template Tensor<T> permute(const Tensor<T>&, std::span<const std::size_t>);                 \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                        \
  template Tensor<T> avg_pool3d(const Tensor<T>&, std::size_t);                               \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);            \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> scale(const Tensor<T>&, T);                                              \
  template Tensor<T> sum(const Tensor<T>&);                                                   \
  template Tensor<T> mean(const Tensor<T>&);                                                  \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double); \
  template Tensor<T> gelu(const Tensor<T>&);                                                  \
  template Tensor<T> softmax(const Tensor<T>&);                                               \
  template Tensor<T> embedding(const Tensor<T>&, std::span<const std::int64_t>);              \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const std::int64_t>,           \
                                   std::span<const std::uint8_t>);                            \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);                      \
  template Tensor<T> attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,          \
                               std::size_t, bool);

CTGPT_INSTANTIATE_OPS(float)
CTGPT_INSTANTIATE_OPS(double)

}  // namespace ctgpt::ops
