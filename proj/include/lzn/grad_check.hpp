#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "lzn/tensor.hpp"

namespace lzn {

struct GradCheckOptions {
  double step = 1e-5;       // central-difference half width
  double tolerance = 1e-4;  // pass iff max relative error <= tolerance
  /// Denominator floor: rel = |a - n| / max(|a|, |n|, floor).
  double floor = 1e-6;
  /// Checks at most this many coordinates per tensor (evenly strided); 0 = all.
  std::size_t max_coords_per_tensor = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  double analytic = 0.0;  // at the worst coordinate
  double numeric = 0.0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  double loss = 0.0;       // value at the base point
  double grad_norm = 0.0;  // l2 norm of the full tape gradient
  bool passed = true;
};

/// Compares tape gradients of the scalar `loss()` with central differences
/// with respect to every tensor in `params`. The parameters must be leaves
/// with requires_grad set; they are perturbed in place and restored.
GradCheckReport grad_check(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                           const GradCheckOptions& options = {});

/// Single-argument form: `f` maps a parameter tensor to a scalar.
GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& theta,
                           const GradCheckOptions& options = {});

}  // namespace lzn
