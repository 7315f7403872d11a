#pragma once

#include <cstddef>
#include <vector>

#include "lzn/tensor.hpp"

namespace lzn {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// sqrt of the summed squared gradients; tensors without a gradient count as zero.
double global_grad_norm(const std::vector<Tensor>& params);

/// Rescales all gradients so their global norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(const std::vector<Tensor>& params, double max_norm);

/// Adam with one learning rate per parameter group.
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  void add_group(std::vector<Tensor> params, double lr);
  /// Clips to `clip` (<= 0 disables), updates every parameter in place and
  /// returns the pre-clip gradient norm. Throws NumericError on a
  /// non-finite gradient.
  double step(double clip);
  void zero_grad();

  std::vector<Tensor> parameters() const;
  std::size_t steps_taken() const { return t_; }

 private:
  struct Slot {
    Tensor param;
    std::vector<double> m;
    std::vector<double> v;
    double lr;
  };
  AdamOptions options_;
  std::vector<Slot> slots_;
  std::size_t t_ = 0;
};

}  // namespace lzn
