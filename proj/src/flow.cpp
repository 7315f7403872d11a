#include "lzn/flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "lzn/ops.hpp"

namespace lzn {
namespace {

void require_finite(const Tensor& t, const char* what, std::size_t step) {
  for (double x : t.data()) {
    if (!std::isfinite(x)) {
      throw NumericError(std::string(what) + ": non-finite state at step " + std::to_string(step));
    }
  }
}

Tensor as_matrix(const Tensor& states) {
  if (states.rank() == 1) return ops::reshape(states, {1, states.numel()});
  if (states.rank() != 2) throw ShapeError("flow: states must be a vector or matrix, got " + to_string(states.shape()));
  return states;
}

void require_dim(const char* op, const Tensor& states, const AnchorSet& anchors) {
  if (states.cols() != anchors.dim()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(states.shape()) + " vs anchors " +
                     to_string(anchors.anchors().shape()));
  }
}

// One solver step from time t to t + dt (dt may be negative).
Tensor solver_step(const Tensor& s, const AnchorSet& anchors, double t, double dt, Solver solver) {
  const Tensor v = velocity(s, t, anchors);
  if (solver == Solver::Euler) return ops::add(s, ops::scale(v, dt));
  const Tensor mid = ops::add(s, ops::scale(v, 0.5 * dt));
  return ops::add(s, ops::scale(velocity(mid, t + 0.5 * dt, anchors), dt));
}

Tensor step(const Tensor& s, const AnchorSet& anchors, double t, double dt, const FlowConfig& cfg) {
  const Solver solver = cfg.solver;
  if (cfg.checkpoint == CheckpointMode::RecomputeVelocity) {
    return ops::checkpoint(
        [anchors, t, dt, solver](std::span<const Tensor> in) {
          return solver_step(in[0], AnchorSet::rebind(anchors, in[1]), t, dt, solver);
        },
        {s, anchors.anchors()});
  }
  return solver_step(s, anchors, t, dt, solver);
}

}  // namespace

AnchorSet::AnchorSet(Tensor anchors, std::vector<double> weights) : anchors_(std::move(anchors)) {
  if (anchors_.rank() != 2 || anchors_.rows() == 0 || anchors_.cols() == 0) {
    throw ShapeError("AnchorSet: anchors must be a non-empty n x q matrix, got " + to_string(anchors_.shape()));
  }
  for (double x : anchors_.data()) {
    if (!std::isfinite(x)) throw NumericError("AnchorSet: non-finite anchor coordinate");
  }
  if (weights.empty()) return;
  if (weights.size() != anchors_.rows()) {
    throw ShapeError("AnchorSet: " + std::to_string(weights.size()) + " weights for " +
                     std::to_string(anchors_.rows()) + " anchors");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw DomainError("AnchorSet: weights must be finite and nonnegative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw DomainError("AnchorSet: weights sum to " + std::to_string(total) + ", expected 1");
  }
  // Equal weights are the unweighted mixture; keep that path bit-identical.
  if (std::all_of(weights.begin(), weights.end(), [&](double w) { return w == weights.front(); })) return;
  log_weights_.resize(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) log_weights_[i] = std::log(weights[i]);
}

AnchorSet AnchorSet::rebind(const AnchorSet& like, Tensor anchors) {
  if (anchors.shape() != like.anchors_.shape()) {
    throw ShapeError("AnchorSet: shape mismatch " + to_string(anchors.shape()) + " vs " +
                     to_string(like.anchors_.shape()));
  }
  AnchorSet out = like;
  out.anchors_ = std::move(anchors);
  return out;
}

std::vector<double> AnchorSet::weights() const {
  if (!weighted()) return std::vector<double>(size(), 1.0 / static_cast<double>(size()));
  std::vector<double> w(log_weights_.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(log_weights_[i]);
  return w;
}

void FlowConfig::validate() const {
  if (!(guard > 0.0 && guard < 1.0)) throw DomainError("FlowConfig: guard must lie in (0,1)");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("FlowConfig: alpha must lie in [0,1]");
  if (steps < 2) throw DomainError("FlowConfig: need at least 2 grid nodes");
  if (cutoff < 1 || cutoff > steps) {
    throw DomainError("FlowConfig: cutoff " + std::to_string(cutoff) + " outside [1," + std::to_string(steps) + "]");
  }
}

std::vector<double> time_grid(const FlowConfig& cfg) {
  cfg.validate();
  std::vector<double> grid(cfg.steps);
  const double end = 1.0 - cfg.guard;
  const double last = static_cast<double>(cfg.steps - 1);
  for (std::size_t k = 0; k < cfg.steps; ++k) grid[k] = end * static_cast<double>(k) / last;
  grid.back() = end;
  return grid;
}

Tensor Trajectory::sample_path(std::size_t i) const {
  const std::size_t q = states.front().cols();
  std::vector<double> v;
  v.reserve(states.size() * q);
  for (const auto& s : states) {
    for (std::size_t k = 0; k < q; ++k) v.push_back(s.at(i, k));
  }
  return Tensor::matrix(states.size(), q, std::move(v));
}

Tensor log_assignment_probs(const Tensor& states, double t, const AnchorSet& anchors) {
  if (!(t < 1.0)) throw DomainError("log_assignment_probs: t must be < 1, got " + std::to_string(t));
  const Tensor s = as_matrix(states);
  require_dim("log_assignment_probs", s, anchors);
  const Tensor centers = ops::scale(anchors.anchors(), t);
  const double inv_var = 1.0 / (2.0 * (1.0 - t) * (1.0 - t));
  Tensor logits = ops::scale(ops::pairwise_sqdist(s, centers), -inv_var);
  if (anchors.weighted()) logits = ops::add_rowvec(logits, Tensor::vector(anchors.log_weights()));
  return ops::log_softmax_rows(logits);
}

Tensor velocity(const Tensor& states, double t, const AnchorSet& anchors) {
  if (!(t < 1.0)) throw DomainError("velocity: t must be < 1, got " + std::to_string(t));
  const Tensor s = as_matrix(states);
  const Tensor probs = ops::exp(log_assignment_probs(s, t, anchors));
  const Tensor v = ops::scale(ops::sub(ops::matmul(probs, anchors.anchors()), s), 1.0 / (1.0 - t));
  return states.rank() == 1 ? ops::reshape(v, states.shape()) : v;
}

Trajectory integrate_forward(const Tensor& start, const AnchorSet& anchors, const FlowConfig& cfg, bool record) {
  Trajectory traj;
  traj.grid = time_grid(cfg);
  traj.recorded = record;
  Tensor s = as_matrix(start);
  require_dim("integrate_forward", s, anchors);
  require_finite(s, "integrate_forward", 0);
  if (record) traj.states.reserve(traj.grid.size());
  if (record) traj.states.push_back(s);
  for (std::size_t k = 0; k + 1 < traj.grid.size(); ++k) {
    s = step(s, anchors, traj.grid[k], traj.grid[k + 1] - traj.grid[k], cfg);
    require_finite(s, "integrate_forward", k + 1);
    if (record) traj.states.push_back(s);
  }
  if (!record) traj.states.push_back(s);
  return traj;
}

Tensor integrate_backward(const Tensor& start_anchors, const Tensor& eps, const AnchorSet& anchors,
                          const FlowConfig& cfg) {
  const auto grid = time_grid(cfg);
  const Tensor a = as_matrix(start_anchors);
  const Tensor e = as_matrix(eps);
  if (a.shape() != e.shape()) {
    throw ShapeError("integrate_backward: shape mismatch " + to_string(a.shape()) + " vs " + to_string(e.shape()));
  }
  require_dim("integrate_backward", a, anchors);
  Tensor s = ops::add(ops::scale(a, 1.0 - cfg.guard), ops::scale(e, cfg.guard * cfg.alpha));
  require_finite(s, "integrate_backward", grid.size() - 1);
  for (std::size_t k = grid.size() - 1; k > 0; --k) {
    s = step(s, anchors, grid[k], grid[k - 1] - grid[k], cfg);
    require_finite(s, "integrate_backward", k - 1);
  }
  return start_anchors.rank() == 1 ? ops::reshape(s, start_anchors.shape()) : s;
}

Tensor compute_latents(const Tensor& batch_anchors, const AnchorSet& reference, const FlowConfig& cfg, Rng& rng) {
  const Tensor eps = rng.normal_tensor(batch_anchors.shape());
  return integrate_backward(batch_anchors, eps, reference, cfg);
}

Tensor compute_latents(const Tensor& batch_anchors, const FlowConfig& cfg, Rng& rng) {
  return compute_latents(batch_anchors, AnchorSet(batch_anchors), cfg, rng);
}

std::vector<std::size_t> assign_zones(const Tensor& latents, const AnchorSet& anchors, const FlowConfig& cfg) {
  NoGradScope no_grad;
  const Tensor z = as_matrix(latents).detach();
  const Trajectory traj = integrate_forward(z, anchors, cfg, false);
  const Tensor logp = log_assignment_probs(traj.endpoint(), traj.grid.back(), anchors);
  const std::size_t m = logp.rows(), n = logp.cols();
  std::vector<std::size_t> zones(m, 0);
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < n; ++j) {
      if (logp.at(i, j) > logp.at(i, best)) best = j;
    }
    zones[i] = best;
  }
  return zones;
}

std::size_t assign_zone(const Tensor& latent, const AnchorSet& anchors, const FlowConfig& cfg) {
  return assign_zones(latent, anchors, cfg).front();
}

}  // namespace lzn
