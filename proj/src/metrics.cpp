#include "lzn/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace lzn {
namespace {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Owned copy: Eigen allocates it aligned, so vectorised reductions do not
// change order with the alignment of the tensor buffer.
Matrix view(const Tensor& t) {
  return Eigen::Map<const Matrix>(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                                  static_cast<Eigen::Index>(t.cols()));
}

// Mean of |x_i - y_j| over all pairs, from direct coordinate differences.
double mean_pair_distance(const Tensor& x, const Tensor& y) {
  const std::size_t m = x.rows(), n = y.rows(), q = x.cols();
  const double* xs = x.data().data();
  const double* ys = y.data().data();
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < q; ++k) {
        const double d = xs[i * q + k] - ys[j * q + k];
        d2 += d * d;
      }
      row += std::sqrt(d2);
    }
    total += row;
  }
  return total / (static_cast<double>(m) * static_cast<double>(n));
}

Tensor subsample(const Tensor& x, std::size_t count, Rng& rng) {
  if (count >= x.rows()) return x;
  std::vector<std::size_t> idx(x.rows());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < count; ++i) std::swap(idx[i], idx[i + rng.index(x.rows() - i)]);
  std::vector<double> v;
  v.reserve(count * x.cols());
  for (std::size_t i = 0; i < count; ++i) {
    const auto row = x.data().subspan(idx[i] * x.cols(), x.cols());
    v.insert(v.end(), row.begin(), row.end());
  }
  return Tensor::matrix(count, x.cols(), std::move(v));
}

}  // namespace

double energy_distance(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols()) {
    throw ShapeError("energy_distance: shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  if (a.rows() == 0 || b.rows() == 0) throw DomainError("energy_distance: empty sample");
  const double ab = mean_pair_distance(a, b);
  const double aa = mean_pair_distance(a, a);
  const double bb = mean_pair_distance(b, b);
  return std::max(0.0, 2.0 * ab - aa - bb);
}

PriorReport gaussian_prior_test(const Tensor& latents, Rng& rng, const PriorTestOptions& options) {
  if (latents.rank() != 2) throw ShapeError("gaussian_prior_test: latents must be a matrix");
  if (latents.rows() < 1000) throw DomainError("gaussian_prior_test: needs at least 1000 latents");
  for (double x : latents.data()) {
    if (!std::isfinite(x)) throw NumericError("gaussian_prior_test: non-finite latent");
  }
  const std::size_t m = latents.rows(), q = latents.cols();
  PriorReport r;
  r.count = m;
  const Matrix x = view(latents);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  r.mean_norm = mean.norm();
  const Matrix centred = x.rowwise() - mean;
  const Matrix cov = (centred.transpose() * centred) / static_cast<double>(m - 1);
  r.cov_err = (cov - Matrix::Identity(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(q))).cwiseAbs().maxCoeff();

  const std::size_t s = std::min(options.subsample, m);
  std::vector<double> calib;
  for (std::size_t k = 0; k < options.calibration_runs; ++k) {
    calib.push_back(energy_distance(rng.normal_tensor({s, q}), rng.normal_tensor({s, q})));
  }
  const double mu = std::accumulate(calib.begin(), calib.end(), 0.0) / static_cast<double>(calib.size());
  double var = 0.0;
  for (double c : calib) var += (c - mu) * (c - mu);
  var /= static_cast<double>(calib.size() > 1 ? calib.size() - 1 : 1);
  r.energy_threshold = mu + 3.0 * std::sqrt(var);
  r.energy = energy_distance(subsample(latents, s, rng), rng.normal_tensor({s, q}));

  r.mean_ok = r.mean_norm < options.mean_tolerance;
  r.cov_ok = r.cov_err < options.cov_tolerance;
  r.energy_ok = r.energy < r.energy_threshold;
  return r;
}

double linear_probe(const Tensor& reps, const std::vector<std::size_t>& labels, const ProbeOptions& options) {
  if (reps.rank() != 2 || reps.rows() != labels.size()) throw ShapeError("linear_probe: one label per row required");
  const std::size_t m = reps.rows(), q = reps.cols();
  const std::size_t c = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<bool> seen(c, false);
  for (auto l : labels) seen[l] = true;
  if (std::count(seen.begin(), seen.end(), true) < 2) throw DomainError("linear_probe: needs at least 2 classes");
  if (!(options.train_fraction > 0.0 && options.train_fraction < 1.0)) {
    throw DomainError("linear_probe: train_fraction must be in (0,1)");
  }

  Rng rng(options.seed);
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng.engine());
  const std::size_t n_train = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::round(options.train_fraction * static_cast<double>(m))), 1, m - 1);

  const Matrix x = view(reps);
  Matrix train(static_cast<Eigen::Index>(n_train), static_cast<Eigen::Index>(q + 1));
  Matrix test(static_cast<Eigen::Index>(m - n_train), static_cast<Eigen::Index>(q + 1));
  for (std::size_t i = 0; i < m; ++i) {
    auto& dst = i < n_train ? train : test;
    const auto row = static_cast<Eigen::Index>(i < n_train ? i : i - n_train);
    dst.row(row).head(static_cast<Eigen::Index>(q)) = x.row(static_cast<Eigen::Index>(order[i]));
    dst(row, static_cast<Eigen::Index>(q)) = 1.0;
  }
  // Standardise with training statistics; the bias column stays 1.
  for (std::size_t k = 0; k < q; ++k) {
    const auto col = static_cast<Eigen::Index>(k);
    const double mu = train.col(col).mean();
    const double sd = std::sqrt((train.col(col).array() - mu).square().mean());
    const double scale = sd > 1e-12 ? 1.0 / sd : 1.0;
    train.col(col) = (train.col(col).array() - mu) * scale;
    test.col(col) = (test.col(col).array() - mu) * scale;
  }
  Matrix target = Matrix::Zero(static_cast<Eigen::Index>(n_train), static_cast<Eigen::Index>(c));
  for (std::size_t i = 0; i < n_train; ++i) target(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(labels[order[i]])) = 1.0;

  // Full-batch Adam on the mean cross-entropy.
  Matrix w = Matrix::Zero(static_cast<Eigen::Index>(q + 1), static_cast<Eigen::Index>(c));
  Matrix mom = w, vel = w;
  const double b1 = 0.9, b2 = 0.999;
  for (std::size_t it = 1; it <= options.iterations; ++it) {
    Matrix logits = train * w;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      const double hi = logits.row(i).maxCoeff();
      logits.row(i) = (logits.row(i).array() - hi).exp();
      logits.row(i) /= logits.row(i).sum();
    }
    Matrix grad = train.transpose() * (logits - target) / static_cast<double>(n_train);
    grad.topRows(static_cast<Eigen::Index>(q)) += options.l2 * w.topRows(static_cast<Eigen::Index>(q));
    mom = b1 * mom + (1.0 - b1) * grad;
    vel = b2 * vel + (1.0 - b2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(it));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(it));
    w.array() -= options.learning_rate * (mom.array() / c1) / ((vel.array() / c2).sqrt() + 1e-8);
  }
  const Matrix scores = test * w;
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < scores.cols(); ++j) {
      if (scores(i, j) > scores(i, best)) best = j;
    }
    correct += static_cast<std::size_t>(best) == labels[order[n_train + static_cast<std::size_t>(i)]];
  }
  return static_cast<double>(correct) / static_cast<double>(m - n_train);
}

double misassignment_rate(const AnchorSet& anchors, const FlowConfig& cfg, std::size_t draws, Rng& rng) {
  if (draws < 1000) throw DomainError("misassignment_rate: needs at least 1000 draws");
  NoGradScope no_grad;
  const std::size_t n = anchors.size(), q = anchors.dim();
  const Tensor a = anchors.anchors().detach();
  std::vector<double> v;
  v.reserve(draws * q);
  for (std::size_t i = 0; i < draws; ++i) {
    const auto row = a.data().subspan((i % n) * q, q);
    v.insert(v.end(), row.begin(), row.end());
  }
  const Tensor latents = compute_latents(Tensor::matrix(draws, q, std::move(v)), anchors, cfg, rng);
  const auto zones = assign_zones(latents, anchors, cfg);
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < draws; ++i) wrong += zones[i] != i % n;
  return static_cast<double>(wrong) / static_cast<double>(draws);
}

double accuracy(const std::vector<std::size_t>& predicted, const std::vector<std::size_t>& truth) {
  if (predicted.size() != truth.size() || truth.empty()) throw ShapeError("accuracy: label vectors differ in length");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += predicted[i] == truth[i];
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

}  // namespace lzn
