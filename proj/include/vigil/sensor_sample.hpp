#pragma once

#include "vigil/common.hpp"

namespace vigil {

inline constexpr int kAdcMax = 1023;

/// One timestamped reading pair from the alcohol and eye sensors.
struct SensorSample {
  TimeMs at = 0;
  int alcohol_raw = 0;  // 10-bit ADC counts
  bool eyes_closed = false;

  friend bool operator==(const SensorSample&, const SensorSample&) = default;
};

}  // namespace vigil
