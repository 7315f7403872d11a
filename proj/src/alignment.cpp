#include "lzn/alignment.hpp"

#include <cmath>
#include <string>

#include "lzn/ops.hpp"

namespace lzn {

Pairing Pairing::identity(std::size_t m) {
  Pairing p;
  p.targets.resize(m);
  for (std::size_t i = 0; i < m; ++i) p.targets[i] = i;
  return p;
}

void Pairing::validate(std::size_t anchor_count) const {
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] >= anchor_count) {
      throw DomainError("Pairing: target " + std::to_string(targets[i]) + " of sample " + std::to_string(i) +
                        " outside [0," + std::to_string(anchor_count) + ")");
    }
  }
}

AlignmentConfig AlignmentConfig::from(const FlowConfig& flow, bool use_log) {
  flow.validate();
  return AlignmentConfig{flow.cutoff, use_log, flow.steps, flow.guard};
}

double assignment_prob(const Tensor& s, double t, const AnchorSet& anchors, std::size_t l) {
  if (l >= anchors.size()) throw DomainError("assignment_prob: anchor index out of range");
  NoGradScope no_grad;
  const Tensor logp = log_assignment_probs(s.detach(), t, anchors);
  return std::exp(logp.at(0, l));
}

Tensor align_loss(const AnchorSet& anchors, const Trajectory& trajectories, const Pairing& pairing,
                  const AlignmentConfig& cfg) {
  if (!trajectories.recorded) throw DomainError("align_loss: trajectories were integrated without recording");
  const std::size_t r = trajectories.grid.size();
  if (r != cfg.steps || trajectories.states.size() != r ||
      std::abs(trajectories.grid.back() - (1.0 - cfg.guard)) > 1e-15) {
    throw DomainError("align_loss: trajectory grid (" + std::to_string(r) + " nodes, ending at " +
                      std::to_string(trajectories.grid.empty() ? 0.0 : trajectories.grid.back()) +
                      ") does not match the configured grid (" + std::to_string(cfg.steps) + " nodes)");
  }
  if (cfg.cutoff < 1 || cfg.cutoff > r) {
    throw DomainError("align_loss: cutoff " + std::to_string(cfg.cutoff) + " outside [1," + std::to_string(r) + "]");
  }
  const std::size_t m = trajectories.states.front().rows();
  if (pairing.targets.size() != m) {
    throw ShapeError("align_loss: " + std::to_string(pairing.targets.size()) + " pairings for " +
                     std::to_string(m) + " trajectories");
  }
  pairing.validate(anchors.size());

  std::vector<Tensor> columns;
  columns.reserve(r - cfg.cutoff + 1);
  for (std::size_t k = cfg.cutoff - 1; k < r; ++k) {
    const Tensor logp = log_assignment_probs(trajectories.states[k], trajectories.grid[k], anchors);
    columns.push_back(ops::reshape(ops::gather(logp, pairing.targets), {m, 1}));
  }
  const Tensor best = ops::max_cols(ops::concat(std::span<const Tensor>(columns), 1));
  const Tensor per_sample = cfg.use_log ? best : ops::exp(best);
  return ops::neg(ops::mean(per_sample));
}

double align_objective(const AnchorSet& anchors, const Trajectory& trajectories, const Pairing& pairing,
                       const AlignmentConfig& cfg) {
  NoGradScope no_grad;
  const double loss = align_loss(anchors, trajectories, pairing, cfg).item();
  return -loss * static_cast<double>(pairing.targets.size());
}

}  // namespace lzn
