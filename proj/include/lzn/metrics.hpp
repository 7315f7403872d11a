#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "lzn/flow.hpp"
#include "lzn/rng.hpp"
#include "lzn/tensor.hpp"

namespace lzn {

/// 2 E|A-B| - E|A-A'| - E|B-B'| over all pairs (the within-set means include
/// the zero diagonal, so identical sets give exactly 0).
double energy_distance(const Tensor& a, const Tensor& b);

struct PriorTestOptions {
  double mean_tolerance = 0.05;  // |mean| bound
  double cov_tolerance = 0.05;   // entrywise |Cov - I| bound
  std::size_t subsample = 2000;  // points per side in the energy statistic
  std::size_t calibration_runs = 20;
};

struct PriorReport {
  std::size_t count = 0;
  double mean_norm = 0.0;
  double cov_err = 0.0;  // max entrywise |Cov - I|
  double energy = 0.0;   // latents vs fresh N(0, I), both subsampled
  double energy_threshold = 0.0;  // calibration mean + 3 sd of Gaussian-vs-Gaussian
  bool mean_ok = false;
  bool cov_ok = false;
  bool energy_ok = false;
  bool passed() const { return mean_ok && cov_ok && energy_ok; }
};

/// Moment and energy checks of m x q latents against N(0, I). Needs m >= 1000.
PriorReport gaussian_prior_test(const Tensor& latents, Rng& rng, const PriorTestOptions& options = {});

struct ProbeOptions {
  double train_fraction = 0.5;
  std::size_t iterations = 1000;
  double learning_rate = 0.05;
  double l2 = 1e-4;
  std::uint64_t seed = 0;
};

/// Multinomial logistic regression on standardised features, trained on a
/// seeded split; returns accuracy on the held-out part.
double linear_probe(const Tensor& representations, const std::vector<std::size_t>& labels,
                    const ProbeOptions& options = {});

/// Fraction of latents from compute_latents whose zone differs from their
/// source anchor. Draw i comes from anchor i mod n. Needs draws >= 1000.
double misassignment_rate(const AnchorSet& anchors, const FlowConfig& cfg, std::size_t draws, Rng& rng);

/// Fraction of positions where the two label vectors agree.
double accuracy(const std::vector<std::size_t>& predicted, const std::vector<std::size_t>& truth);

}  // namespace lzn
