#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "lzn/data.hpp"
#include "lzn/models.hpp"
#include "lzn/training.hpp"

namespace lzn {

/// Unreadable or invalid configuration. The message names the file, and the
/// line or key where known.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModelConfig {
  std::size_t latent_dim = 2;
  std::vector<std::size_t> encoder_hidden{128, 128, 128};
  std::vector<std::size_t> decoder_hidden{256, 256, 256, 256};
  Activation activation = Activation::Tanh;
};

struct AugmentConfig {
  double jitter = 0.1;
  double rotation = 0.0;  // max angle in radians; 0 disables

  Augmentor build() const;
};

struct EvalConfig {
  std::size_t rf_steps = 100;
  std::size_t recon_steps = 100;  // ODE steps of the invert-then-regenerate reconstruction
  std::size_t samples = 1000;
  double classify_alpha = 0.0;
  std::size_t inference_batch = 1000;
  std::size_t test_count = 1000;  // held-out split, same generator with data seed + 1
  std::size_t zone_grid = 200;
  double zone_extent = 3.0;
  double grad_tolerance = 1e-4;
};

struct RunConfig {
  DatasetSpec data;
  ModelConfig model;
  TrainConfig train;
  AugmentConfig augment;
  EvalConfig eval;
  bool alpha_set = false;    // [flow] alpha given explicitly
  bool use_log_set = false;  // [train] use_log given explicitly

  void validate() const;
  /// Held-out split of the configured dataset.
  DatasetSpec test_spec() const;
};

/// INI-style text: `[section]` headers, `key = value` lines, full-line
/// comments starting with `#` or `;`. Unknown sections or keys are errors.
RunConfig parse_run_config(const std::string& text, const std::string& origin = "<config>");
RunConfig load_run_config(const std::string& path);
/// Canonical text of every field; parse_run_config(to_text(c)) reproduces c.
std::string to_text(const RunConfig& cfg);

}  // namespace lzn
