#pragma once

#include <cstdint>
#include <random>

namespace vigil {

/// Seeded generator with platform-independent transforms. std::mt19937_64 output is
/// fixed by the standard; the std distributions are not, so they are avoided here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller; consumes exactly two draws.
  double gaussian();

  bool bernoulli(double p) { return uniform() < p; }

  friend bool operator==(const Rng&, const Rng&) = default;

 private:
  std::mt19937_64 engine_;
};

}  // namespace vigil
