#pragma once

#include <cstddef>
#include <vector>

#include "lzn/flow.hpp"
#include "lzn/tensor.hpp"

namespace lzn {

/// k_i: the anchor (row of the X anchor set) that sample i of Y should land on.
/// Many-to-one is allowed.
struct Pairing {
  std::vector<std::size_t> targets;

  static Pairing identity(std::size_t m);
  void validate(std::size_t anchor_count) const;
};

struct AlignmentConfig {
  std::size_t cutoff = 20;  // u, 1-based grid index of the first step considered
  bool use_log = false;
  std::size_t steps = 100;  // grid nodes the trajectories must carry
  double guard = 1e-3;      // last grid node is 1 - guard

  static AlignmentConfig from(const FlowConfig& flow, bool use_log);
};

/// Soft probability that point `s` at time `t` belongs to anchor `l`.
double assignment_prob(const Tensor& s, double t, const AnchorSet& anchors, std::size_t l);

/// Negated alignment objective averaged over samples:
///   -(1/m) sum_i max_{k >= u} P(a_{k_i} | s^i_{t_k})      (use_log = false)
///   -(1/m) sum_i max_{k >= u} log P(a_{k_i} | s^i_{t_k})  (use_log = true)
/// The trajectories must come from integrate_forward under `anchors` with
/// recording on. Gradient reaches the states at the maximising step only and
/// the anchors through both the trajectory and the probability.
Tensor align_loss(const AnchorSet& anchors, const Trajectory& trajectories, const Pairing& pairing,
                  const AlignmentConfig& cfg);

/// Objective value (not negated, summed over samples) for reporting.
double align_objective(const AnchorSet& anchors, const Trajectory& trajectories, const Pairing& pairing,
                       const AlignmentConfig& cfg);

}  // namespace lzn
