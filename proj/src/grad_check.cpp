#include "lzn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace lzn {
namespace {

double evaluate(const std::function<Tensor()>& loss) {
  NoGradScope no_grad;
  return loss().item();
}

}  // namespace

GradCheckReport grad_check(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                           const GradCheckOptions& options) {
  for (auto& p : params) {
    if (!p.requires_grad()) throw DomainError("grad_check: parameter does not require grad");
    p.zero_grad();
  }
  GradCheckReport report;
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor value = loss();
    report.loss = value.item();
    if (!std::isfinite(report.loss)) throw NumericError("grad_check: loss is not finite at the base point");
    if (value.requires_grad()) tape.backward(value);
  }
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) sq += g * g;
  }
  report.grad_norm = std::sqrt(sq);

  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor& p = params[t];
    const std::size_t n = p.numel();
    const std::size_t stride =
        options.max_coords_per_tensor == 0 || n <= options.max_coords_per_tensor ? 1 : n / options.max_coords_per_tensor;
    for (std::size_t j = 0; j < n; j += stride) {
      auto values = p.mutable_data();
      const double saved = values[j];
      values[j] = saved + options.step;
      const double up = evaluate(loss);
      values[j] = saved - options.step;
      const double down = evaluate(loss);
      values[j] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("grad_check: non-finite loss when perturbing tensor " + std::to_string(t) +
                           " coordinate " + std::to_string(j));
      }
      const double numeric = (up - down) / (2.0 * options.step);
      const double analytic = p.has_grad() ? p.grad()[j] : 0.0;
      if (!std::isfinite(analytic)) {
        throw NumericError("grad_check: non-finite tape gradient at tensor " + std::to_string(t) + " coordinate " +
                           std::to_string(j));
      }
      const double denom = std::max({std::abs(analytic), std::abs(numeric), options.floor});
      const double rel = std::abs(analytic - numeric) / denom;
      ++report.checked;
      if (rel > report.max_rel_error || report.checked == 1) {
        report.max_rel_error = rel;
        report.analytic = analytic;
        report.numeric = numeric;
        report.worst_tensor = t;
        report.worst_index = j;
      }
    }
  }
  report.passed = report.max_rel_error <= options.tolerance;
  return report;
}

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& theta,
                           const GradCheckOptions& options) {
  Tensor leaf = theta.detach(true);
  return grad_check([&] { return f(leaf); }, {leaf}, options);
}

}  // namespace lzn
