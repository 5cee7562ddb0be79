#pragma once

#include "jvae/common.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace jvae {

/// Seed for stream `name` under `master`. Streams with different names are
/// decorrelated, so adding a knob that draws from a new stream leaves the
/// others untouched.
std::uint64_t derive_seed(std::uint64_t master, std::string_view name);

/// A named PRNG stream (64-bit Mersenne twister plus a cached normal sampler).
class RngStream {
 public:
  RngStream() : RngStream(0, "default") {}
  RngStream(std::uint64_t master, std::string_view name);

  double uniform() { return unit_(engine_); }
  double normal() { return normal_(engine_); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Standard Gumbel draw, with u clipped to [1e-12, 1 - 1e-12].
  double gumbel();

  Matrix normal_matrix(Index rows, Index cols);
  Matrix gumbel_matrix(Index rows, Index cols);

  std::mt19937_64& engine() { return engine_; }

  /// Text serialization of the full state (engine and distributions).
  std::string state() const;
  void set_state(const std::string& s);

 private:
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace jvae
