#include "ctgpt/train/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace ctgpt::train {

GradcheckResult gradcheck(model::ReportModel<double>& m, const volume::PreparedVolume& v,
                          const std::string& instruction, const std::string& report,
                          const GradcheckOptions& opts) {
  bool encoder_trainable = false;
  for (const auto& p : m.params) {
    if (!p.frozen && p.name.rfind("encoder.", 0) == 0) encoder_trainable = true;
  }

  m.params.clear_grads();
  auto loss = m.report_loss(m.pooled_tokens_with_graph(v), instruction, report);
  loss.backward();

  const Tensor<double> cached = encoder_trainable ? Tensor<double>{} : m.pooled_tokens(v);
  auto eval_loss = [&] {
    NoGradGuard no_grad;
    const auto pooled = encoder_trainable ? m.pooled_tokens(v) : cached;
    return m.report_loss(pooled, instruction, report).item();
  };

  GradcheckResult result;
  for (auto& p : m.params) {
    if (p.frozen) continue;
    const auto analytic = std::vector<double>(p.tensor.grad().begin(), p.tensor.grad().end());
    auto data = p.tensor.mutable_data();
    const std::size_t n = data.size();
    const std::size_t stride = opts.max_per_param == 0 ? 1 : std::max<std::size_t>(1, n / opts.max_per_param);
    for (std::size_t i = 0; i < n; i += stride) {
      const double saved = data[i];
      data[i] = saved + opts.eps;
      const double up = eval_loss();
      data[i] = saved - opts.eps;
      const double down = eval_loss();
      data[i] = saved;
      GradcheckEntry e{p.name, i, analytic[i], (up - down) / (2.0 * opts.eps)};
      const double diff = std::abs(e.analytic - e.numeric);
      const double scale = std::max(std::abs(e.analytic), std::abs(e.numeric));
      e.rel_error = scale > 0.0 ? diff / scale : 0.0;
      e.ok = diff <= opts.abs_tol || diff <= opts.rel_tol * scale;
      if (!e.ok) ++result.failed;
      result.max_abs_error = std::max(result.max_abs_error, diff);
      if (diff > opts.abs_tol) result.max_rel_error = std::max(result.max_rel_error, e.rel_error);
      result.entries.push_back(std::move(e));
    }
  }
  m.params.clear_grads();
  return result;
}

void randomize_lora_b(ParamStore<double>& params, double stddev, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& p : params) {
    const auto& name = p.name;
    if (name.rfind("lora.", 0) != 0 || name.size() < 2 || name.compare(name.size() - 2, 2, ".B") != 0) continue;
    for (auto& x : p.tensor.mutable_data()) x = rng.normal(0.0, stddev);
  }
}

}  // namespace ctgpt::train
