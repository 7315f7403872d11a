#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "lzn/alignment.hpp"
#include "lzn/data.hpp"
#include "lzn/flow.hpp"
#include "lzn/models.hpp"
#include "lzn/optim.hpp"

namespace lzn {

struct TrainConfig {
  std::size_t iterations = 2000;
  std::size_t batch = 256;
  double lr_encoder = 1e-3;
  double lr_decoder = 1e-3;
  double lr_codebook = 1e-3;
  double clip = 1.0;
  double rf_weight = 1.0;
  double align_weight = 1.0;
  AdamOptions adam;
  /// Latent computation during training. alpha is 1 for generation and
  /// usually 0.45 for representation learning.
  FlowConfig flow;
  bool use_log = false;
  std::uint64_t seed = 0;
  /// Fill wall_ms in the metric log. Off by default so logs are reproducible.
  bool wall_clock = false;

  void validate() const;
};

struct MetricRow {
  std::size_t iter = 0;
  double loss_total = 0.0;
  double loss_rf = 0.0;
  double loss_align = 0.0;
  double grad_norm = 0.0;  // before clipping
  double wall_ms = 0.0;
};

using MetricLog = std::vector<MetricRow>;

/// Loss terms of one evaluation; `total` carries the tape history.
struct LossTerms {
  Tensor total;
  double rf = 0.0;
  double align = 0.0;
};

/// RF loss of a batch with latents from the batch's own anchors (minibatch
/// approximation). Without an encoder the decoder must be unconditional on z.
LossTerms generation_loss(const Tensor& batch, const MlpEncoder* encoder, const RectifiedFlowDecoder& decoder,
                          const TrainConfig& cfg, Rng& rng);

/// Symmetrised alignment of two augmented views: view-2 latents flowed under
/// view-1 anchors with identity pairing, and the reverse, averaged.
LossTerms representation_loss(const Tensor& view1, const Tensor& view2, const MlpEncoder& encoder,
                              const TrainConfig& cfg, Rng& rng);

/// rf_weight * RF loss (with z and one-hot class) + align_weight * alignment
/// of the image latents to the label anchors weighted by batch frequency.
LossTerms joint_loss(const Tensor& batch, const std::vector<std::size_t>& labels, const MlpEncoder& encoder,
                     const RectifiedFlowDecoder& decoder, const LabelCodebook& codebook, const TrainConfig& cfg,
                     Rng& rng);

/// Per-class frequency of `labels`; classes absent from the batch get 0.
std::vector<double> label_weights(const std::vector<std::size_t>& labels, std::size_t classes);

/// RF training with (encoder given) or without LZN latents.
MetricLog train_unconditional(const Dataset& data, MlpEncoder* encoder, RectifiedFlowDecoder& decoder,
                              const TrainConfig& cfg);
MetricLog train_representation(const Dataset& data, MlpEncoder& encoder, const Augmentor& augmentor,
                               const TrainConfig& cfg);
MetricLog train_joint(const Dataset& data, MlpEncoder& encoder, RectifiedFlowDecoder& decoder,
                      LabelCodebook& codebook, const TrainConfig& cfg);

/// Class of each row: anchors -> latents against the chunk's own anchors with
/// the given flow (alpha 0 gives zone centres) -> label_decode. Rows are
/// processed in chunks of `inference_batch`.
std::vector<std::size_t> classify(const Tensor& points, const MlpEncoder& encoder, const LabelCodebook& codebook,
                                  const FlowConfig& flow, std::size_t inference_batch, Rng& rng);

struct Generated {
  Tensor points;                    // count x d
  std::vector<std::size_t> labels;  // class used per row; empty when the decoder has no classes
  Tensor latents;                   // z per row; undefined when the decoder has no latent input
};

/// z ~ N(0, I); with a codebook the class is label_decode(z).
Generated generate_unconditional(const RectifiedFlowDecoder& decoder, const LabelCodebook* codebook,
                                 std::size_t count, std::size_t rf_steps, const FlowConfig& flow, Rng& rng);
/// z drawn from class k's zone via compute_latents over the label anchors.
Generated generate_conditional(const RectifiedFlowDecoder& decoder, const LabelCodebook& codebook, std::size_t k,
                               std::size_t count, std::size_t rf_steps, const FlowConfig& flow, Rng& rng);

}  // namespace lzn
