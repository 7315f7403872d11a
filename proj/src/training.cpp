#include "lzn/training.hpp"

#include <chrono>
#include <cmath>
#include <string>

#include "lzn/ops.hpp"

namespace lzn {
namespace {

using Clock = std::chrono::steady_clock;

template <class LossFn>
MetricLog run_loop(const TrainConfig& cfg, Adam& opt, Rng& rng, LossFn loss_fn) {
  MetricLog log;
  log.reserve(cfg.iterations);
  const auto start = Clock::now();
  for (std::size_t it = 1; it <= cfg.iterations; ++it) {
    MetricRow row;
    row.iter = it;
    try {
      Tape tape;
      TapeScope scope(tape);
      opt.zero_grad();
      const LossTerms terms = loss_fn(rng);
      row.loss_total = terms.total.item();
      row.loss_rf = terms.rf;
      row.loss_align = terms.align;
      if (!std::isfinite(row.loss_total)) throw NumericError("non-finite loss");
      if (!tape.empty() && terms.total.requires_grad()) tape.backward(terms.total);
      row.grad_norm = opt.step(cfg.clip);
    } catch (const NumericError& e) {
      throw NumericError("iteration " + std::to_string(it) + ": " + e.what());
    }
    if (cfg.wall_clock) {
      row.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
    }
    log.push_back(row);
  }
  return log;
}

std::vector<Tensor> values(const std::vector<NamedTensor>& named) {
  std::vector<Tensor> out;
  out.reserve(named.size());
  for (const auto& n : named) out.push_back(n.value);
  return out;
}

Tensor rows_of(const Dataset& data, const std::vector<std::size_t>& index) { return data.subset(index).points; }

void require_nonempty(const Dataset& data, const char* what) {
  if (!data.points.defined() || data.size() == 0) throw DomainError(std::string(what) + ": dataset is empty");
}

}  // namespace

void TrainConfig::validate() const {
  if (iterations == 0 || batch == 0) throw DomainError("train: iterations and batch must be positive");
  if (!(lr_encoder >= 0.0 && lr_decoder >= 0.0 && lr_codebook >= 0.0)) {
    throw DomainError("train: learning rates must be >= 0");
  }
  if (!(clip > 0.0)) throw DomainError("train: clip must be > 0");
  if (!(rf_weight >= 0.0 && align_weight >= 0.0)) throw DomainError("train: loss weights must be >= 0");
  flow.validate();
}

std::vector<double> label_weights(const std::vector<std::size_t>& labels, std::size_t classes) {
  if (labels.empty()) throw DomainError("label_weights: empty batch");
  std::vector<double> w(classes, 0.0);
  for (auto l : labels) {
    if (l >= classes) throw DomainError("label_weights: label " + std::to_string(l) + " outside [0," + std::to_string(classes) + ")");
    w[l] += 1.0;
  }
  for (auto& x : w) x /= static_cast<double>(labels.size());
  return w;
}

LossTerms generation_loss(const Tensor& batch, const MlpEncoder* encoder, const RectifiedFlowDecoder& decoder,
                          const TrainConfig& cfg, Rng& rng) {
  LossTerms terms;
  if (cfg.rf_weight == 0.0) {
    terms.total = Tensor::scalar(0.0);
    return terms;
  }
  Tensor z;
  if (encoder != nullptr) z = compute_latents(encoder->encode(batch), cfg.flow, rng);
  const Tensor rf = rf_loss(decoder, batch, z, Tensor(), rng);
  terms.rf = rf.item();
  terms.total = ops::scale(rf, cfg.rf_weight);
  return terms;
}

LossTerms representation_loss(const Tensor& view1, const Tensor& view2, const MlpEncoder& encoder,
                              const TrainConfig& cfg, Rng& rng) {
  LossTerms terms;
  if (cfg.align_weight == 0.0) {
    terms.total = Tensor::scalar(0.0);
    return terms;
  }
  const Tensor a1 = encoder.encode(view1);
  const Tensor a2 = encoder.encode(view2);
  const Tensor z1 = compute_latents(a1, cfg.flow, rng);
  const Tensor z2 = compute_latents(a2, cfg.flow, rng);
  const AlignmentConfig acfg = AlignmentConfig::from(cfg.flow, cfg.use_log);
  const Pairing pairing = Pairing::identity(view1.rows());
  const AnchorSet set1(a1), set2(a2);
  const Tensor l12 = align_loss(set1, integrate_forward(z2, set1, cfg.flow), pairing, acfg);
  const Tensor l21 = align_loss(set2, integrate_forward(z1, set2, cfg.flow), pairing, acfg);
  const Tensor align = ops::scale(ops::add(l12, l21), 0.5);
  terms.align = align.item();
  terms.total = ops::scale(align, cfg.align_weight);
  return terms;
}

LossTerms joint_loss(const Tensor& batch, const std::vector<std::size_t>& labels, const MlpEncoder& encoder,
                     const RectifiedFlowDecoder& decoder, const LabelCodebook& codebook, const TrainConfig& cfg,
                     Rng& rng) {
  if (labels.size() != batch.rows()) throw ShapeError("joint_loss: label count does not match batch");
  const std::size_t c = codebook.classes();
  const Tensor z = compute_latents(encoder.encode(batch), cfg.flow, rng);
  LossTerms terms;
  std::vector<Tensor> parts;
  if (cfg.rf_weight != 0.0) {
    const Tensor rf = rf_loss(decoder, batch, z, one_hot(labels, c), rng);
    terms.rf = rf.item();
    parts.push_back(ops::scale(rf, cfg.rf_weight));
  }
  if (cfg.align_weight != 0.0) {
    const AnchorSet set(codebook.anchors(), label_weights(labels, c));
    const Trajectory traj = integrate_forward(z, set, cfg.flow);
    const Tensor align = align_loss(set, traj, Pairing{labels}, AlignmentConfig::from(cfg.flow, cfg.use_log));
    terms.align = align.item();
    parts.push_back(ops::scale(align, cfg.align_weight));
  }
  if (parts.empty()) {
    terms.total = Tensor::scalar(0.0);
  } else {
    terms.total = parts.size() == 1 ? parts[0] : ops::add(parts[0], parts[1]);
  }
  return terms;
}

MetricLog train_unconditional(const Dataset& data, MlpEncoder* encoder, RectifiedFlowDecoder& decoder,
                              const TrainConfig& cfg) {
  cfg.validate();
  require_nonempty(data, "train_unconditional");
  Adam opt(cfg.adam);
  if (encoder != nullptr) opt.add_group(values(encoder->parameters()), cfg.lr_encoder);
  opt.add_group(values(decoder.parameters()), cfg.lr_decoder);
  Rng rng(cfg.seed);
  return run_loop(cfg, opt, rng, [&](Rng& r) {
    const Tensor batch = rows_of(data, sample_batch(data.size(), cfg.batch, r));
    return generation_loss(batch, encoder, decoder, cfg, r);
  });
}

MetricLog train_representation(const Dataset& data, MlpEncoder& encoder, const Augmentor& augmentor,
                               const TrainConfig& cfg) {
  cfg.validate();
  require_nonempty(data, "train_representation");
  Adam opt(cfg.adam);
  opt.add_group(values(encoder.parameters()), cfg.lr_encoder);
  Rng rng(cfg.seed);
  return run_loop(cfg, opt, rng, [&](Rng& r) {
    const Tensor batch = rows_of(data, sample_batch(data.size(), cfg.batch, r));
    const Tensor view1 = augmentor.apply(batch, r);
    const Tensor view2 = augmentor.apply(batch, r);
    return representation_loss(view1, view2, encoder, cfg, r);
  });
}

MetricLog train_joint(const Dataset& data, MlpEncoder& encoder, RectifiedFlowDecoder& decoder,
                      LabelCodebook& codebook, const TrainConfig& cfg) {
  cfg.validate();
  require_nonempty(data, "train_joint");
  if (!data.labeled()) throw DomainError("train_joint: dataset has no labels");
  if (data.classes != codebook.classes()) {
    throw DomainError("train_joint: dataset has " + std::to_string(data.classes) + " classes, codebook " +
                      std::to_string(codebook.classes()));
  }
  Adam opt(cfg.adam);
  opt.add_group(values(encoder.parameters()), cfg.lr_encoder);
  opt.add_group(values(decoder.parameters()), cfg.lr_decoder);
  opt.add_group(values(codebook.parameters()), cfg.lr_codebook);
  Rng rng(cfg.seed);
  return run_loop(cfg, opt, rng, [&](Rng& r) {
    const Dataset batch = data.subset(sample_batch(data.size(), cfg.batch, r));
    return joint_loss(batch.points, batch.labels, encoder, decoder, codebook, cfg, r);
  });
}

std::vector<std::size_t> classify(const Tensor& points, const MlpEncoder& encoder, const LabelCodebook& codebook,
                                  const FlowConfig& flow, std::size_t inference_batch, Rng& rng) {
  if (inference_batch == 0) throw DomainError("classify: inference batch must be positive");
  NoGradScope no_grad;
  std::vector<std::size_t> out;
  out.reserve(points.rows());
  for (std::size_t begin = 0; begin < points.rows(); begin += inference_batch) {
    const std::size_t end = std::min(points.rows(), begin + inference_batch);
    const Tensor anchors = encoder.encode(ops::slice(points, 0, begin, end));
    const auto labels = label_decode(codebook, compute_latents(anchors, flow, rng), flow);
    out.insert(out.end(), labels.begin(), labels.end());
  }
  return out;
}

Generated generate_unconditional(const RectifiedFlowDecoder& decoder, const LabelCodebook* codebook,
                                 std::size_t count, std::size_t rf_steps, const FlowConfig& flow, Rng& rng) {
  NoGradScope no_grad;
  Generated g;
  if (decoder.classes() > 0 && (codebook == nullptr || decoder.latent_dim() == 0)) {
    throw DomainError("generate: a class-conditional decoder needs a codebook and latent input");
  }
  if (count == 0) {
    g.points = Tensor::zeros({0, decoder.data_dim()});
    return g;
  }
  Tensor onehot;
  if (decoder.latent_dim() > 0) g.latents = rng.normal_tensor({count, decoder.latent_dim()});
  if (decoder.classes() > 0) {
    g.labels = label_decode(*codebook, g.latents, flow);
    onehot = one_hot(g.labels, decoder.classes());
  }
  g.points = rf_sample(decoder, g.latents, onehot, count, rf_steps, rng);
  return g;
}

Generated generate_conditional(const RectifiedFlowDecoder& decoder, const LabelCodebook& codebook, std::size_t k,
                               std::size_t count, std::size_t rf_steps, const FlowConfig& flow, Rng& rng) {
  NoGradScope no_grad;
  if (k >= codebook.classes()) {
    throw DomainError("generate: class " + std::to_string(k) + " outside [0," + std::to_string(codebook.classes()) + ")");
  }
  if (decoder.classes() != codebook.classes() || decoder.latent_dim() != codebook.latent_dim()) {
    throw DomainError("generate: decoder and codebook disagree on classes or latent width");
  }
  Generated g;
  if (count == 0) {
    g.points = Tensor::zeros({0, decoder.data_dim()});
    return g;
  }
  const Tensor sources = ops::matmul(one_hot(std::vector<std::size_t>(count, k), codebook.classes()),
                                     codebook.anchors().detach());
  g.latents = compute_latents(sources, codebook.anchor_set(), flow, rng);
  g.labels.assign(count, k);
  g.points = rf_sample(decoder, g.latents, one_hot(g.labels, decoder.classes()), count, rf_steps, rng);
  return g;
}

}  // namespace lzn
