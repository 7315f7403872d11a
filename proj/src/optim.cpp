#include "lzn/optim.hpp"

#include <cmath>

namespace lzn {

double global_grad_norm(const std::vector<Tensor>& params) {
  double s = 0.0;
  for (const auto& p : params) {
    for (double g : p.grad()) s += g * g;
  }
  return std::sqrt(s);
}

double clip_grad_norm(const std::vector<Tensor>& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (!std::isfinite(norm)) throw NumericError("clip_grad_norm: non-finite gradient norm");
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (const auto& p : params) {
      if (!p.has_grad()) continue;
      for (auto& g : p.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

void Adam::add_group(std::vector<Tensor> params, double lr) {
  if (!(lr >= 0.0)) throw DomainError("Adam: learning rate must be >= 0");
  for (auto& p : params) {
    const std::size_t n = p.numel();
    slots_.push_back(Slot{std::move(p), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), lr});
  }
}

double Adam::step(double clip) {
  const double norm = clip_grad_norm(parameters(), clip);
  ++t_;
  const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  for (auto& s : slots_) {
    if (!s.param.has_grad()) continue;
    const auto g = s.param.grad();
    auto w = s.param.mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      s.m[i] = options_.beta1 * s.m[i] + (1.0 - options_.beta1) * g[i];
      s.v[i] = options_.beta2 * s.v[i] + (1.0 - options_.beta2) * g[i] * g[i];
      w[i] -= s.lr * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + options_.eps);
    }
  }
  return norm;
}

void Adam::zero_grad() {
  for (auto& s : slots_) s.param.zero_grad();
}

std::vector<Tensor> Adam::parameters() const {
  std::vector<Tensor> out;
  out.reserve(slots_.size());
  for (const auto& s : slots_) out.push_back(s.param);
  return out;
}

}  // namespace lzn
