#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "lzn/tensor.hpp"

namespace lzn {

/// Seedable random stream. Every stochastic routine takes one of these by
/// reference; there is no global generator.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }

  Tensor normal_tensor(Shape shape) {
    std::vector<double> v(numel_of(shape));
    for (auto& x : v) x = normal();
    return Tensor(std::move(shape), std::move(v));
  }

  /// Independent child stream; advances this stream by one draw.
  Rng fork() { return Rng(engine_()); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace lzn
