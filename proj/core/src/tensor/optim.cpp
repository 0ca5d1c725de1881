#include "ctgpt/tensor/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ctgpt {

double CosineSchedule::lr(std::size_t step) const { return cosine_lr(step, *this); }

CosineSchedule CosineSchedule::with_warmup_fraction(double lr_max, std::size_t total_steps,
                                                    double warmup_fraction) {
  if (total_steps == 0) throw ArgumentError("schedule needs at least one step");
  CosineSchedule s;
  s.lr_max = lr_max;
  s.total_steps = total_steps;
  s.warmup_steps = static_cast<std::size_t>(std::lround(warmup_fraction * static_cast<double>(total_steps)));
  s.warmup_steps = std::min(s.warmup_steps, total_steps - 1);
  return s;
}

double cosine_lr(std::size_t step, const CosineSchedule& s) {
  if (step < s.warmup_steps) {
    return s.lr_max * static_cast<double>(step + 1) / static_cast<double>(s.warmup_steps);
  }
  const double span = static_cast<double>(std::max<std::size_t>(1, s.total_steps - s.warmup_steps));
  const double progress = std::min(1.0, static_cast<double>(step - s.warmup_steps) / span);
  return 0.5 * s.lr_max * (1.0 + std::cos(std::numbers::pi * progress));
}

template <typename T>
void adam_step(ParamStore<T>& params, OptimizerState& state) {
  for (const auto& p : params) {
    if (!p.frozen && !p.tensor.has_grad()) {
      throw StateError("adam_step: trainable parameter '" + p.name + "' has no gradient");
    }
  }
  const double lr = cosine_lr(state.step, state.schedule);
  const double b1 = state.adam.beta1, b2 = state.adam.beta2;
  const double t = static_cast<double>(state.step + 1);
  const double c1 = 1.0 - std::pow(b1, t);
  const double c2 = 1.0 - std::pow(b2, t);
  for (auto& p : params) {
    if (p.frozen) continue;
    const std::size_t n = p.tensor.numel();
    auto& m = state.first_moment[p.name];
    auto& v = state.second_moment[p.name];
    if (m.size() != n) m.assign(n, 0.0);
    if (v.size() != n) v.assign(n, 0.0);
    auto g = p.tensor.grad();
    auto w = p.tensor.mutable_data();
    for (std::size_t i = 0; i < n; ++i) {
      const double gi = g[i];
      m[i] = b1 * m[i] + (1.0 - b1) * gi;
      v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] = static_cast<T>(w[i] - lr * mhat / (std::sqrt(vhat) + state.adam.eps));
    }
  }
  ++state.step;
}

template <typename T>
double grad_norm(const ParamStore<T>& params) {
  double acc = 0.0;
  for (const auto& p : params) {
    if (p.frozen || !p.tensor.has_grad()) continue;
    for (auto g : p.tensor.grad()) acc += static_cast<double>(g) * g;
  }
  return std::sqrt(acc);
}

template <typename T>
double clip_grad_norm(ParamStore<T>& params, double max_norm) {
  const double norm = grad_norm(params);
  if (norm > max_norm && norm > 0.0) {
    const double f = max_norm / norm;
    for (auto& p : params) {
      if (p.frozen || !p.tensor.has_grad()) continue;
      for (auto& g : p.tensor.mutable_grad()) g = static_cast<T>(g * f);
    }
  }
  return norm;
}

template void adam_step(ParamStore<float>&, OptimizerState&);
template void adam_step(ParamStore<double>&, OptimizerState&);
template double grad_norm(const ParamStore<float>&);
template double grad_norm(const ParamStore<double>&);
template double clip_grad_norm(ParamStore<float>&, double);
template double clip_grad_norm(ParamStore<double>&, double);

}  // namespace ctgpt
