#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "ctgpt/tensor/params.hpp"

namespace ctgpt {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Linear warmup followed by half-cosine decay to zero.
struct CosineSchedule {
  double lr_max = 1e-3;
  std::size_t total_steps = 1;
  std::size_t warmup_steps = 0;

  /// Learning rate used for the update at `step` (0-based).
  double lr(std::size_t step) const;

  static CosineSchedule with_warmup_fraction(double lr_max, std::size_t total_steps,
                                             double warmup_fraction = 0.03);
};

double cosine_lr(std::size_t step, const CosineSchedule& schedule);

struct OptimizerState {
  std::size_t step = 0;
  CosineSchedule schedule;
  AdamConfig adam;
  // Keyed by parameter name; present only for non-frozen parameters.
  std::map<std::string, std::vector<double>> first_moment;
  std::map<std::string, std::vector<double>> second_moment;
};

/// One bias-corrected Adam update of every non-frozen parameter at
/// cosine_lr(state.step); increments state.step. Frozen parameters are not
/// touched. Throws StateError if a trainable parameter has no gradient.
template <typename T>
void adam_step(ParamStore<T>& params, OptimizerState& state);

/// Global L2 norm over gradients of non-frozen parameters.
template <typename T>
double grad_norm(const ParamStore<T>& params);

/// Rescales trainable gradients so their global norm is at most max_norm.
/// Returns the norm before clipping.
template <typename T>
double clip_grad_norm(ParamStore<T>& params, double max_norm);

}  // namespace ctgpt
