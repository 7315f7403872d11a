#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lzn/flow.hpp"
#include "lzn/rng.hpp"
#include "lzn/tensor.hpp"

namespace lzn {

struct NamedTensor {
  std::string name;
  Tensor value;
};

enum class Activation { Tanh, Relu };

/// Fully connected stack: hidden layers with `activation`, linear output layer.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out, Activation activation, Rng& rng);

  Tensor forward(const Tensor& x) const;
  std::size_t in_dim() const { return in_; }
  std::size_t out_dim() const { return out_; }
  Activation activation() const { return activation_; }
  const std::vector<std::size_t>& hidden() const { return hidden_; }

  /// Weights are stored as `<prefix>.w<k>` (in x out) and `<prefix>.b<k>`.
  std::vector<NamedTensor> parameters(const std::string& prefix) const;

 private:
  std::size_t in_ = 0;
  std::size_t out_ = 0;
  std::vector<std::size_t> hidden_;
  Activation activation_ = Activation::Tanh;
  std::vector<Tensor> weights_;
  std::vector<Tensor> biases_;
};

/// Deterministic map from data points to anchor points.
class MlpEncoder {
 public:
  MlpEncoder() = default;
  MlpEncoder(std::size_t data_dim, const std::vector<std::size_t>& hidden, std::size_t latent_dim, Rng& rng,
             Activation activation = Activation::Tanh);

  /// m x d data -> m x q anchors.
  Tensor encode(const Tensor& batch) const;
  std::size_t data_dim() const { return net_.in_dim(); }
  std::size_t latent_dim() const { return net_.out_dim(); }
  std::vector<NamedTensor> parameters() const { return net_.parameters("encoder"); }
  const Mlp& net() const { return net_; }

 private:
  Mlp net_;
};

/// Velocity network v(xi, t, z, c) of a rectified flow in data space. The
/// network input is [xi, t, sin 2 pi t, cos 2 pi t, z, onehot(c)]; z and c are
/// omitted when latent_dim or classes is zero.
class RectifiedFlowDecoder {
 public:
  RectifiedFlowDecoder() = default;
  RectifiedFlowDecoder(std::size_t data_dim, std::size_t latent_dim, std::size_t classes,
                       const std::vector<std::size_t>& hidden, Rng& rng, Activation activation = Activation::Tanh);

  /// xi: m x d, t: m RF times, z: m x q (or undefined when latent_dim is 0),
  /// onehot: m x c (or undefined when classes is 0).
  Tensor velocity(const Tensor& xi, std::span<const double> t, const Tensor& z, const Tensor& onehot) const;

  std::size_t data_dim() const { return data_dim_; }
  std::size_t latent_dim() const { return latent_dim_; }
  std::size_t classes() const { return classes_; }
  std::vector<NamedTensor> parameters() const { return net_.parameters("decoder"); }
  const Mlp& net() const { return net_; }

 private:
  std::size_t data_dim_ = 0;
  std::size_t latent_dim_ = 0;
  std::size_t classes_ = 0;
  Mlp net_;
};

/// Learnable label anchors, one row per class (c x q).
class LabelCodebook {
 public:
  LabelCodebook() = default;
  /// Entries drawn from N(0, 1/sqrt(q)).
  LabelCodebook(std::size_t classes, std::size_t latent_dim, Rng& rng);
  explicit LabelCodebook(Tensor anchors);

  const Tensor& anchors() const { return anchors_; }
  std::size_t classes() const { return anchors_.rows(); }
  std::size_t latent_dim() const { return anchors_.cols(); }
  /// Uniform mixture over the label anchors, as used at inference.
  AnchorSet anchor_set() const { return AnchorSet(anchors_); }
  std::vector<NamedTensor> parameters() const { return {{"codebook", anchors_}}; }

 private:
  Tensor anchors_;
};

/// m x c one-hot matrix; throws on labels >= classes.
Tensor one_hot(std::span<const std::size_t> labels, std::size_t classes);

/// Anchor of a one-hot label vector: the matching codebook row (q-vector).
Tensor label_encode(const LabelCodebook& codebook, const Tensor& onehot);

/// Class of each latent row: flow forward under the uniform label anchors and
/// take argmax_j <s_end, A_j> - |A_j|^2 / 2 (the nearest anchor; the plain inner
/// product for equal-norm anchors). Ties go to the lowest index.
std::vector<std::size_t> label_decode(const LabelCodebook& codebook, const Tensor& latents, const FlowConfig& cfg);

/// Field signature shared by the decoder network and test oracles.
using VelocityField = std::function<Tensor(const Tensor& xi, std::span<const double> t)>;

/// Noise and times for one RF loss evaluation.
struct RfDraw {
  Tensor eps;              // m x d
  std::vector<double> t;   // m values in [0, 1)

  static RfDraw sample(std::size_t m, std::size_t d, Rng& rng);
};

/// Mean over rows of ||v(xi, t) - (x - eps)||^2 with xi = (1 - t) eps + t x.
Tensor rf_loss(const VelocityField& field, const Tensor& x, const RfDraw& draw);
Tensor rf_loss(const RectifiedFlowDecoder& decoder, const Tensor& x, const Tensor& z, const Tensor& onehot,
               Rng& rng);

/// Euler integration of the field from `start` over `steps` uniform RF steps,
/// from time 0 to 1, or from 1 to 0 when `reverse` is set.
Tensor rf_integrate(const VelocityField& field, const Tensor& start, std::size_t steps, bool reverse = false);

/// Draws xi_0 ~ N(0, I) per row of z (or `count` rows when unconditional) and
/// integrates to RF time 1.
Tensor rf_sample(const RectifiedFlowDecoder& decoder, const Tensor& z, const Tensor& onehot, std::size_t count,
                 std::size_t steps, Rng& rng);

/// Integrates x back to RF time 0 and forward again with the same z.
/// Returns the reconstruction and the per-row l2 error.
std::pair<Tensor, std::vector<double>> rf_reconstruct(const VelocityField& field, const Tensor& x, std::size_t steps);
std::pair<Tensor, std::vector<double>> rf_reconstruct(const RectifiedFlowDecoder& decoder, const Tensor& x,
                                                       const Tensor& z, const Tensor& onehot, std::size_t steps);

}  // namespace lzn
