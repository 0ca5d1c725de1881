#pragma once

// Central finite-difference check of analytic gradients through the full
// encoder -> adapter -> splice -> LM -> masked loss path, in double precision.

#include <string>
#include <vector>

#include "ctgpt/model/report_model.hpp"

namespace ctgpt::train {

struct GradcheckOptions {
  double eps = 1e-5;
  double rel_tol = 1e-4;
  /// Differences below this pass regardless of the relative error; guards
  /// gradients that are zero up to rounding.
  double abs_tol = 1e-8;
  /// 0 checks every scalar; otherwise an evenly strided subset per parameter.
  std::size_t max_per_param = 0;
};

struct GradcheckEntry {
  std::string param;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
  bool ok = true;
};

struct GradcheckResult {
  std::vector<GradcheckEntry> entries;
  std::size_t failed = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;

  bool passed() const { return failed == 0 && !entries.empty(); }
};

/// Checks every non-frozen parameter of `m`. Frozen encoder outputs are
/// computed once for the finite differences when no encoder parameter is
/// trainable.
GradcheckResult gradcheck(model::ReportModel<double>& m, const volume::PreparedVolume& v,
                          const std::string& instruction, const std::string& report,
                          const GradcheckOptions& opts = {});

/// Replaces every LoRA B matrix with N(0, stddev) draws so gradients reach A.
void randomize_lora_b(ParamStore<double>& params, double stddev, std::uint64_t seed);

}  // namespace ctgpt::train
