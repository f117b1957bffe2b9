#include "vigil/sensors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace vigil {

double Rng::gaussian() {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void NoiseSpec::validate() const {
  if (!(alcohol_jitter >= 0.0) || !std::isfinite(alcohol_jitter)) {
    throw DomainError("alcohol jitter must be >= 0");
  }
  if (!(eye_flip_prob >= 0.0 && eye_flip_prob < 1.0)) {
    throw DomainError("eye flip probability must be in [0,1)");
  }
}

int mq3_raw(double ppm) {
  if (!(ppm >= 0.0) || !std::isfinite(ppm)) {
    throw DomainError("ppm must be finite and >= 0");
  }
  const double clamped = std::min(ppm, kMq3FullScalePpm);
  return static_cast<int>(std::lround(clamped * kAdcMax / kMq3FullScalePpm));
}

std::pair<SensorSample, Rng> sample_sensors(const GroundTruth& truth, TimeMs at, Rng rng) {
  const double jitter = rng.gaussian() * truth.noise.alcohol_jitter;
  const bool flip = rng.uniform() < truth.noise.eye_flip_prob;

  SensorSample sample;
  sample.at = at;
  const double noisy = static_cast<double>(mq3_raw(truth.ppm)) + jitter;
  sample.alcohol_raw = static_cast<int>(std::clamp(std::lround(noisy), 0L, static_cast<long>(kAdcMax)));
  sample.eyes_closed = truth.eyes_closed != flip;
  return {sample, rng};
}

}  // namespace vigil
