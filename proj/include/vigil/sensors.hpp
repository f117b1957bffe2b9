#pragma once

#include <cstdint>
#include <utility>

#include "vigil/rng.hpp"
#include "vigil/sensor_sample.hpp"

namespace vigil {

inline constexpr double kMq3FullScalePpm = 500.0;
inline constexpr double kMaxGroundTruthPpm = 1000.0;

struct NoiseSpec {
  std::uint64_t seed = 0;
  double alcohol_jitter = 0.0;  // std-dev in ADC counts
  double eye_flip_prob = 0.0;   // per sample

  /// Throws DomainError on jitter < 0 or flip probability outside [0, 1).
  void validate() const;
  bool is_silent() const { return alcohol_jitter == 0.0 && eye_flip_prob == 0.0; }

  friend bool operator==(const NoiseSpec&, const NoiseSpec&) = default;
};

/// What the driver and cabin are really doing at an instant.
struct GroundTruth {
  bool eyes_closed = false;
  double ppm = 0.0;
  NoiseSpec noise;

  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

/// Linear MQ3 transfer to a 10-bit ADC: 0 ppm -> 0, 500 ppm and above -> 1023.
/// Throws DomainError for negative or non-finite ppm.
int mq3_raw(double ppm);

/// True iff raw strictly exceeds the threshold.
constexpr bool classify_alcohol(int raw, int threshold) { return raw > threshold; }

/// Reads both simulated sensors at `at`. Always consumes three draws from `rng`
/// (two for jitter, one for the eye flip) so streams stay aligned regardless of noise.
std::pair<SensorSample, Rng> sample_sensors(const GroundTruth& truth, TimeMs at, Rng rng);

}  // namespace vigil
