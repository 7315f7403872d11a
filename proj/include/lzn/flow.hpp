#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lzn/rng.hpp"
#include "lzn/tensor.hpp"

namespace lzn {

enum class Solver { Euler, Midpoint };

/// How integration steps are kept for backward. FullTape records every
/// primitive of every velocity evaluation (O(n^2 r) values for n anchors);
/// RecomputeVelocity keeps only the states and re-derives each step's
/// velocity during backward (O(n q r)).
enum class CheckpointMode { FullTape, RecomputeVelocity };

/// Anchor points a_1..a_n (rows of an n x q matrix) with optional mixture
/// weights. The anchors tensor may carry gradient history.
class AnchorSet {
 public:
  explicit AnchorSet(Tensor anchors, std::vector<double> weights = {});
  /// Same mixture as `like` over a different anchor tensor of equal shape.
  static AnchorSet rebind(const AnchorSet& like, Tensor anchors);

  const Tensor& anchors() const { return anchors_; }
  std::size_t size() const { return anchors_.rows(); }
  std::size_t dim() const { return anchors_.cols(); }
  bool weighted() const { return !log_weights_.empty(); }
  /// Mixture weights; uniform 1/n when the set is unweighted.
  std::vector<double> weights() const;
  /// log w_i (zero weights give -inf). Empty when unweighted.
  const std::vector<double>& log_weights() const { return log_weights_; }

 private:
  Tensor anchors_;
  std::vector<double> log_weights_;
};

struct FlowConfig {
  double guard = 1e-3;  // g: backward integration starts at t = 1 - g
  double alpha = 1.0;   // latent scale applied to the injected noise
  std::size_t steps = 100;  // r: number of grid nodes, t_1 = 0 ... t_r = 1 - g
  std::size_t cutoff = 20;  // u: first grid node (1-based) used by alignment
  Solver solver = Solver::Euler;
  CheckpointMode checkpoint = CheckpointMode::FullTape;

  void validate() const;
};

/// Uniform grid of `cfg.steps` nodes from 0 to 1 - g inclusive.
std::vector<double> time_grid(const FlowConfig& cfg);

/// States of m samples at every grid node: states[k] is m x q at grid[k].
/// A trajectory built without recording holds only the final state.
struct Trajectory {
  std::vector<Tensor> states;
  std::vector<double> grid;
  bool recorded = true;

  const Tensor& endpoint() const { return states.back(); }
  /// r x q path of sample i (values only).
  Tensor sample_path(std::size_t i) const;
};

/// log P(a_l | s_t) for every row of `states` (m x q) and anchor l: the log
/// responsibility of component l in the time-t mixture sum_l w_l N(t a_l, (1-t)^2 I).
Tensor log_assignment_probs(const Tensor& states, double t, const AnchorSet& anchors);

/// Closed-form velocity of the flow from N(0, I) to the anchor mixture.
/// `states` is a q-vector or an m x q matrix; the result has the same shape.
Tensor velocity(const Tensor& states, double t, const AnchorSet& anchors);

/// Integrates z -> s_{1-g} over the grid.
Trajectory integrate_forward(const Tensor& start, const AnchorSet& anchors, const FlowConfig& cfg,
                             bool record = true);

/// Latent of each row of `start_anchors`: starts at (1-g) a + g alpha eps and
/// integrates back to t = 0.
Tensor integrate_backward(const Tensor& start_anchors, const Tensor& eps, const AnchorSet& anchors,
                          const FlowConfig& cfg);

/// Draws eps ~ N(0, I) per row and returns integrate_backward over `reference`.
Tensor compute_latents(const Tensor& batch_anchors, const AnchorSet& reference, const FlowConfig& cfg, Rng& rng);
/// Minibatch form: the batch's own anchors are the reference set.
Tensor compute_latents(const Tensor& batch_anchors, const FlowConfig& cfg, Rng& rng);

/// Zone index of each row of `latents`: flow forward to 1 - g and take the
/// most probable anchor at that time. Ties go to the lowest index.
std::vector<std::size_t> assign_zones(const Tensor& latents, const AnchorSet& anchors, const FlowConfig& cfg);
std::size_t assign_zone(const Tensor& latent, const AnchorSet& anchors, const FlowConfig& cfg);

}  // namespace lzn
