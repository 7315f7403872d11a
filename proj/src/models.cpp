#include "lzn/models.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "lzn/ops.hpp"

namespace lzn {
namespace {

void require_finite(const Tensor& t, const char* what, std::size_t step) {
  for (double x : t.data()) {
    if (!std::isfinite(x)) throw NumericError(std::string(what) + ": non-finite state at step " + std::to_string(step));
  }
}

}  // namespace

Mlp::Mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out, Activation activation, Rng& rng)
    : in_(in), out_(out), hidden_(hidden), activation_(activation) {
  if (in == 0 || out == 0) throw DomainError("Mlp: input and output widths must be positive");
  std::size_t prev = in;
  auto layer = [&](std::size_t width) {
    if (width == 0) throw DomainError("Mlp: zero-width layer");
    const double scale = 1.0 / std::sqrt(static_cast<double>(prev));
    std::vector<double> w(prev * width);
    for (auto& x : w) x = scale * rng.normal();
    weights_.push_back(Tensor::matrix(prev, width, std::move(w), true));
    biases_.push_back(Tensor::zeros({width}, true));
    prev = width;
  };
  for (auto width : hidden) layer(width);
  layer(out);
}

Tensor Mlp::forward(const Tensor& x) const {
  if (x.rank() != 2 || x.cols() != in_) {
    throw ShapeError("Mlp: shape mismatch " + to_string(x.shape()) + " vs input width " + std::to_string(in_));
  }
  Tensor h = x;
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    h = ops::add_rowvec(ops::matmul(h, weights_[k]), biases_[k]);
    if (k + 1 < weights_.size()) h = activation_ == Activation::Tanh ? ops::tanh(h) : ops::relu(h);
  }
  return h;
}

std::vector<NamedTensor> Mlp::parameters(const std::string& prefix) const {
  std::vector<NamedTensor> out;
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    out.push_back({prefix + ".w" + std::to_string(k), weights_[k]});
    out.push_back({prefix + ".b" + std::to_string(k), biases_[k]});
  }
  return out;
}

MlpEncoder::MlpEncoder(std::size_t data_dim, const std::vector<std::size_t>& hidden, std::size_t latent_dim, Rng& rng,
                       Activation activation)
    : net_(data_dim, hidden, latent_dim, activation, rng) {}

Tensor MlpEncoder::encode(const Tensor& batch) const {
  for (double x : batch.data()) {
    if (!std::isfinite(x)) throw NumericError("encode: non-finite input");
  }
  return net_.forward(batch);
}

RectifiedFlowDecoder::RectifiedFlowDecoder(std::size_t data_dim, std::size_t latent_dim, std::size_t classes,
                                           const std::vector<std::size_t>& hidden, Rng& rng, Activation activation)
    : data_dim_(data_dim),
      latent_dim_(latent_dim),
      classes_(classes),
      net_(data_dim + 3 + latent_dim + classes, hidden, data_dim, activation, rng) {}

Tensor RectifiedFlowDecoder::velocity(const Tensor& xi, std::span<const double> t, const Tensor& z,
                                      const Tensor& onehot) const {
  if (xi.rank() != 2 || xi.cols() != data_dim_ || xi.rows() != t.size()) {
    throw ShapeError("decoder: shape mismatch " + to_string(xi.shape()) + " with " + std::to_string(t.size()) +
                     " times, data width " + std::to_string(data_dim_));
  }
  const std::size_t m = xi.rows();
  std::vector<double> emb(m * 3);
  for (std::size_t i = 0; i < m; ++i) {
    emb[3 * i] = t[i];
    emb[3 * i + 1] = std::sin(2.0 * std::numbers::pi * t[i]);
    emb[3 * i + 2] = std::cos(2.0 * std::numbers::pi * t[i]);
  }
  std::vector<Tensor> parts{xi, Tensor::matrix(m, 3, std::move(emb))};
  if (latent_dim_ > 0) {
    if (!z.defined() || z.rank() != 2 || z.rows() != m || z.cols() != latent_dim_) {
      throw ShapeError("decoder: latent shape mismatch, expected (" + std::to_string(m) + "," +
                       std::to_string(latent_dim_) + ")" + (z.defined() ? " got " + to_string(z.shape()) : ""));
    }
    parts.push_back(z);
  }
  if (classes_ > 0) {
    if (!onehot.defined() || onehot.rank() != 2 || onehot.rows() != m || onehot.cols() != classes_) {
      throw ShapeError("decoder: class input shape mismatch, expected (" + std::to_string(m) + "," +
                       std::to_string(classes_) + ")" + (onehot.defined() ? " got " + to_string(onehot.shape()) : ""));
    }
    parts.push_back(onehot);
  }
  return net_.forward(ops::concat(std::span<const Tensor>(parts), 1));
}

LabelCodebook::LabelCodebook(std::size_t classes, std::size_t latent_dim, Rng& rng) {
  if (classes < 2) throw DomainError("LabelCodebook: needs at least 2 classes");
  const double sd = 1.0 / std::sqrt(static_cast<double>(latent_dim));
  std::vector<double> v(classes * latent_dim);
  for (auto& x : v) x = sd * rng.normal();
  anchors_ = Tensor::matrix(classes, latent_dim, std::move(v), true);
}

LabelCodebook::LabelCodebook(Tensor anchors) : anchors_(std::move(anchors)) {
  if (anchors_.rank() != 2 || anchors_.rows() < 2) {
    throw DomainError("LabelCodebook: needs a c x q matrix with c >= 2, got " + to_string(anchors_.shape()));
  }
  for (double x : anchors_.data()) {
    if (!std::isfinite(x)) throw NumericError("LabelCodebook: non-finite anchor");
  }
}

Tensor one_hot(std::span<const std::size_t> labels, std::size_t classes) {
  std::vector<double> v(labels.size() * classes, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) {
      throw DomainError("one_hot: label " + std::to_string(labels[i]) + " outside [0," + std::to_string(classes) + ")");
    }
    v[i * classes + labels[i]] = 1.0;
  }
  return Tensor::matrix(labels.size(), classes, std::move(v));
}

Tensor label_encode(const LabelCodebook& codebook, const Tensor& onehot) {
  const std::size_t c = codebook.classes();
  if (onehot.rank() != 1 || onehot.numel() != c) {
    throw ShapeError("label_encode: shape mismatch " + to_string(onehot.shape()) + " vs " + std::to_string(c) +
                     " classes");
  }
  std::size_t ones = 0;
  for (double x : onehot.data()) {
    if (x == 1.0) {
      ++ones;
    } else if (x != 0.0) {
      ones = 2;
      break;
    }
  }
  if (ones != 1) throw DomainError("label_encode: input is not one-hot");
  const Tensor row = ops::matmul(ops::reshape(onehot, {1, c}), codebook.anchors());
  return ops::reshape(row, {codebook.latent_dim()});
}

std::vector<std::size_t> label_decode(const LabelCodebook& codebook, const Tensor& latents, const FlowConfig& cfg) {
  NoGradScope no_grad;
  const AnchorSet set(codebook.anchors().detach());
  const Tensor end = integrate_forward(latents.detach(), set, cfg, false).endpoint();
  const Tensor& a = set.anchors();
  const Tensor scores = ops::matmul(end, ops::transpose(a));
  // Half squared norm of each anchor: argmax <s, A_j> - |A_j|^2 / 2 is the nearest anchor.
  std::vector<double> half_sq(a.rows(), 0.0);
  for (std::size_t j = 0; j < a.rows(); ++j) {
    for (std::size_t k = 0; k < a.cols(); ++k) half_sq[j] += 0.5 * a.at(j, k) * a.at(j, k);
  }
  std::vector<std::size_t> out(scores.rows());
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < scores.cols(); ++j) {
      if (scores.at(i, j) - half_sq[j] > scores.at(i, best) - half_sq[best]) best = j;
    }
    out[i] = best;
  }
  return out;
}

RfDraw RfDraw::sample(std::size_t m, std::size_t d, Rng& rng) {
  RfDraw draw;
  draw.eps = rng.normal_tensor({m, d});
  draw.t.resize(m);
  for (auto& t : draw.t) t = rng.uniform();
  return draw;
}

Tensor rf_loss(const VelocityField& field, const Tensor& x, const RfDraw& draw) {
  if (x.rank() != 2 || draw.eps.shape() != x.shape() || draw.t.size() != x.rows()) {
    throw ShapeError("rf_loss: shape mismatch " + to_string(x.shape()) + " vs noise " + to_string(draw.eps.shape()));
  }
  const std::size_t m = x.rows();
  std::vector<double> one_minus(m);
  for (std::size_t i = 0; i < m; ++i) one_minus[i] = 1.0 - draw.t[i];
  const Tensor xi = ops::add(ops::mul_colvec(draw.eps, Tensor::vector(one_minus)),
                             ops::mul_colvec(x, Tensor::vector(draw.t)));
  const Tensor target = ops::sub(x, draw.eps);
  const Tensor residual = ops::sub(field(xi, draw.t), target);
  return ops::scale(ops::squared_norm(residual), 1.0 / static_cast<double>(m));
}

Tensor rf_loss(const RectifiedFlowDecoder& decoder, const Tensor& x, const Tensor& z, const Tensor& onehot,
               Rng& rng) {
  if (x.rank() != 2) throw ShapeError("rf_loss: data must be a matrix, got " + to_string(x.shape()));
  const RfDraw draw = RfDraw::sample(x.rows(), x.cols(), rng);
  return rf_loss([&](const Tensor& xi, std::span<const double> t) { return decoder.velocity(xi, t, z, onehot); }, x,
                 draw);
}

Tensor rf_integrate(const VelocityField& field, const Tensor& start, std::size_t steps, bool reverse) {
  if (steps == 0) throw DomainError("rf_integrate: steps must be >= 1");
  const double h = 1.0 / static_cast<double>(steps);
  Tensor s = start;
  std::vector<double> t(s.rows());
  for (std::size_t k = 0; k < steps; ++k) {
    // Reverse steps reuse the forward step's left-endpoint time, so fields that
    // do not depend on the state invert exactly.
    const double tk = reverse ? 1.0 - static_cast<double>(k + 1) * h : static_cast<double>(k) * h;
    std::fill(t.begin(), t.end(), tk);
    s = ops::add(s, ops::scale(field(s, t), reverse ? -h : h));
    require_finite(s, "rf_integrate", k + 1);
  }
  return s;
}

Tensor rf_sample(const RectifiedFlowDecoder& decoder, const Tensor& z, const Tensor& onehot, std::size_t count,
                 std::size_t steps, Rng& rng) {
  if (steps == 0) throw DomainError("rf_sample: steps must be >= 1");
  const std::size_t m = z.defined() ? z.rows() : count;
  if (m == 0) return Tensor::zeros({0, decoder.data_dim()});
  NoGradScope no_grad;
  const Tensor start = rng.normal_tensor({m, decoder.data_dim()});
  return rf_integrate([&](const Tensor& xi, std::span<const double> t) { return decoder.velocity(xi, t, z, onehot); },
                      start, steps);
}

std::pair<Tensor, std::vector<double>> rf_reconstruct(const VelocityField& field, const Tensor& x, std::size_t steps) {
  NoGradScope no_grad;
  const Tensor noise = rf_integrate(field, x, steps, true);
  Tensor back = rf_integrate(field, noise, steps);
  std::vector<double> err(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < x.cols(); ++k) s += (back.at(i, k) - x.at(i, k)) * (back.at(i, k) - x.at(i, k));
    err[i] = std::sqrt(s);
  }
  return {std::move(back), std::move(err)};
}

std::pair<Tensor, std::vector<double>> rf_reconstruct(const RectifiedFlowDecoder& decoder, const Tensor& x,
                                                       const Tensor& z, const Tensor& onehot, std::size_t steps) {
  return rf_reconstruct([&](const Tensor& xi, std::span<const double> t) { return decoder.velocity(xi, t, z, onehot); },
                        x, steps);
}

}  // namespace lzn
