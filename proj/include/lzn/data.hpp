#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "lzn/rng.hpp"
#include "lzn/tensor.hpp"

namespace lzn {

struct Dataset {
  Tensor points;                    // m x d
  std::vector<std::size_t> labels;  // empty when unlabeled
  std::size_t classes = 0;
  std::string name;
  std::uint64_t seed = 0;

  std::size_t size() const { return points.rows(); }
  std::size_t dim() const { return points.cols(); }
  bool labeled() const { return !labels.empty(); }
  /// Rows `index` as a new dataset.
  Dataset subset(const std::vector<std::size_t>& index) const;
  void validate() const;
};

enum class DatasetKind { GaussMix, TwoMoons, Rings };

DatasetKind parse_dataset_kind(const std::string& name);
std::string to_string(DatasetKind kind);

struct DatasetSpec {
  DatasetKind kind = DatasetKind::GaussMix;
  std::size_t count = 1000;
  std::size_t components = 4;  // gauss_mix modes or rings
  double spread = 0.2;         // gauss_mix per-axis standard deviation
  double radius = 2.0;         // gauss_mix centre radius; ring spacing for rings
  double noise = 0.1;          // two_moons / rings noise
  std::uint64_t seed = 0;

  void validate() const;
};

/// Deterministic in the spec. Labels are the mode, moon or ring index and
/// are assigned round robin, so classes are balanced.
///   gauss_mix: k isotropic modes with centres evenly spaced on a circle
///   two_moons: the two interleaved half circles, centred on the origin
///   rings:     k concentric circles of radius radius * (j + 1) with radial noise
Dataset make_dataset(const DatasetSpec& spec);

/// Random label-preserving transform of a batch.
class Augmentor {
 public:
  enum class Kind { Identity, Jitter, Rotation, Compose };

  static Augmentor identity();
  /// Adds N(0, sigma^2) to every coordinate.
  static Augmentor jitter(double sigma);
  /// Rotates each 2D point by an angle drawn from U(-max_angle, max_angle).
  static Augmentor rotation(double max_angle);
  /// Applies the parts left to right.
  static Augmentor compose(std::vector<Augmentor> parts);

  Tensor apply(const Tensor& batch, Rng& rng) const;
  Kind kind() const { return kind_; }

 private:
  Kind kind_ = Kind::Identity;
  double param_ = 0.0;
  std::vector<Augmentor> parts_;
};

/// Indices of a minibatch: `batch` distinct rows when batch <= m, drawn by a
/// partial Fisher-Yates shuffle.
std::vector<std::size_t> sample_batch(std::size_t m, std::size_t batch, Rng& rng);

}  // namespace lzn
