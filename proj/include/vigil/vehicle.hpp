#pragma once

#include "vigil/controller.hpp"

namespace vigil {

inline constexpr double kMaxDuty = 255.0;

/// Relay-driven motor. Speed is a PWM duty in [0, 255].
struct MotorState {
  double speed = 0.0;
  MotorCommand command;  // RUN(0)
  TimeMs ramp_started_at = 0;
  double ramp_initial_speed = 0.0;

  friend bool operator==(const MotorState&, const MotorState&) = default;
};

/// Linear ramp: initial at ramp_start, exactly 0 at and after ramp_start + stop_duration.
/// Throws MonotonicityError when now < ramp_start, ConfigError when stop_duration
/// is outside [10, 15] s.
double speed_at(double initial, TimeMs ramp_start, TimeMs now, double stop_duration_s);

/// Throws StateError when asked to ramp a motor that is already stopped.
MotorState apply_motor_command(const MotorState& state, const MotorCommand& cmd, TimeMs now);

/// Speed of `state` at `now`, evaluated lazily from the ramp parameters.
double current_speed(const MotorState& state, TimeMs now, double stop_duration_s);

}  // namespace vigil
