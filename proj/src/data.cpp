#include "lzn/data.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <utility>

namespace lzn {

Dataset Dataset::subset(const std::vector<std::size_t>& index) const {
  Dataset out;
  out.classes = classes;
  out.name = name;
  out.seed = seed;
  const std::size_t d = dim();
  std::vector<double> v;
  v.reserve(index.size() * d);
  for (auto i : index) {
    if (i >= size()) throw DomainError("Dataset::subset: row " + std::to_string(i) + " out of range");
    const auto row = points.data().subspan(i * d, d);
    v.insert(v.end(), row.begin(), row.end());
    if (labeled()) out.labels.push_back(labels[i]);
  }
  out.points = Tensor::matrix(index.size(), d, std::move(v));
  return out;
}

void Dataset::validate() const {
  if (!points.defined() || points.rank() != 2) throw ShapeError("Dataset: points must be a matrix");
  for (double x : points.data()) {
    if (!std::isfinite(x)) throw NumericError("Dataset: non-finite point");
  }
  if (labeled()) {
    if (labels.size() != size()) throw ShapeError("Dataset: label count does not match point count");
    for (auto l : labels) {
      if (l >= classes) throw DomainError("Dataset: label " + std::to_string(l) + " outside [0," + std::to_string(classes) + ")");
    }
  }
}

DatasetKind parse_dataset_kind(const std::string& name) {
  if (name == "gauss_mix") return DatasetKind::GaussMix;
  if (name == "two_moons") return DatasetKind::TwoMoons;
  if (name == "rings") return DatasetKind::Rings;
  throw DomainError("unknown dataset kind '" + name + "' (expected gauss_mix, two_moons or rings)");
}

std::string to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::GaussMix: return "gauss_mix";
    case DatasetKind::TwoMoons: return "two_moons";
    case DatasetKind::Rings: return "rings";
  }
  return "?";
}

void DatasetSpec::validate() const {
  if (count < 1) throw DomainError("dataset: count must be >= 1");
  if (kind != DatasetKind::TwoMoons && components < 1) throw DomainError("dataset: components must be >= 1");
  if (!(spread >= 0.0) || !(noise >= 0.0) || !(radius > 0.0)) {
    throw DomainError("dataset: spread and noise must be >= 0, radius > 0");
  }
}

Dataset make_dataset(const DatasetSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  Dataset ds;
  ds.name = to_string(spec.kind);
  ds.seed = spec.seed;
  ds.classes = spec.kind == DatasetKind::TwoMoons ? 2 : spec.components;
  std::vector<double> v(spec.count * 2);
  ds.labels.resize(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) {
    const std::size_t label = i % ds.classes;
    ds.labels[i] = label;
    double x = 0.0, y = 0.0;
    switch (spec.kind) {
      case DatasetKind::GaussMix: {
        const double a = 2.0 * std::numbers::pi * static_cast<double>(label) / static_cast<double>(ds.classes);
        const double cx = ds.classes == 1 ? 0.0 : spec.radius * std::cos(a);
        const double cy = ds.classes == 1 ? 0.0 : spec.radius * std::sin(a);
        x = cx + spec.spread * rng.normal();
        y = cy + spec.spread * rng.normal();
        break;
      }
      case DatasetKind::TwoMoons: {
        const double theta = std::numbers::pi * rng.uniform();
        if (label == 0) {
          x = std::cos(theta) - 0.5;
          y = std::sin(theta) - 0.25;
        } else {
          x = 1.0 - std::cos(theta) - 0.5;
          y = 0.5 - std::sin(theta) - 0.25;
        }
        if (spec.noise > 0.0) {
          x += spec.noise * rng.normal();
          y += spec.noise * rng.normal();
        }
        break;
      }
      case DatasetKind::Rings: {
        const double theta = 2.0 * std::numbers::pi * rng.uniform();
        const double r = spec.radius * static_cast<double>(label + 1) + spec.noise * rng.normal();
        x = r * std::cos(theta);
        y = r * std::sin(theta);
        break;
      }
    }
    v[2 * i] = x;
    v[2 * i + 1] = y;
  }
  ds.points = Tensor::matrix(spec.count, 2, std::move(v));
  return ds;
}

Augmentor Augmentor::identity() { return Augmentor(); }

Augmentor Augmentor::jitter(double sigma) {
  if (!(sigma >= 0.0)) throw DomainError("jitter: sigma must be >= 0");
  Augmentor a;
  a.kind_ = Kind::Jitter;
  a.param_ = sigma;
  return a;
}

Augmentor Augmentor::rotation(double max_angle) {
  if (!(max_angle >= 0.0)) throw DomainError("rotation: max_angle must be >= 0");
  Augmentor a;
  a.kind_ = Kind::Rotation;
  a.param_ = max_angle;
  return a;
}

Augmentor Augmentor::compose(std::vector<Augmentor> parts) {
  Augmentor a;
  a.kind_ = Kind::Compose;
  a.parts_ = std::move(parts);
  return a;
}

Tensor Augmentor::apply(const Tensor& batch, Rng& rng) const {
  if (batch.rank() != 2) throw ShapeError("augment: batch must be a matrix, got " + to_string(batch.shape()));
  const std::size_t m = batch.rows(), d = batch.cols();
  std::vector<double> v(batch.data().begin(), batch.data().end());
  switch (kind_) {
    case Kind::Identity:
      break;
    case Kind::Jitter:
      for (auto& x : v) x += param_ * rng.normal();
      break;
    case Kind::Rotation:
      if (d != 2) throw ShapeError("rotation: needs 2D points, got " + to_string(batch.shape()));
      for (std::size_t i = 0; i < m; ++i) {
        const double a = param_ * (2.0 * rng.uniform() - 1.0);
        const double c = std::cos(a), s = std::sin(a);
        const double x = v[2 * i], y = v[2 * i + 1];
        v[2 * i] = c * x - s * y;
        v[2 * i + 1] = s * x + c * y;
      }
      break;
    case Kind::Compose: {
      Tensor out = batch;
      for (const auto& p : parts_) out = p.apply(out, rng);
      return out;
    }
  }
  return Tensor::matrix(m, d, std::move(v));
}

std::vector<std::size_t> sample_batch(std::size_t m, std::size_t batch, Rng& rng) {
  if (m == 0) throw DomainError("sample_batch: empty dataset");
  std::vector<std::size_t> out;
  if (batch >= m) {
    out.resize(m);
    std::iota(out.begin(), out.end(), std::size_t{0});
    return out;
  }
  std::vector<std::size_t> perm(m);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = 0; i < batch; ++i) std::swap(perm[i], perm[i + rng.index(m - i)]);
  out.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(batch));
  return out;
}

}  // namespace lzn
