#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace vigil {

/// Virtual time in integer milliseconds. Every duration in the model is exact in ms.
using TimeMs = std::int64_t;

inline TimeMs seconds_to_ms(double seconds) {
  // 1e-6 absorbs binary representation error of decimal inputs like 1.005
  return static_cast<TimeMs>(std::floor(seconds * 1000.0 + 1e-6));
}

inline double ms_to_seconds(TimeMs ms) { return static_cast<double>(ms) / 1000.0; }

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Timestamps going backwards, or a deadline scheduled in the past.
class MonotonicityError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class StateError : public Error {
 public:
  using Error::Error;
};

}  // namespace vigil
