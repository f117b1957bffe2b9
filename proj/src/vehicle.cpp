#include "vigil/vehicle.hpp"

#include <algorithm>

namespace vigil {

double speed_at(double initial, TimeMs ramp_start, TimeMs now, double stop_duration_s) {
  if (now < ramp_start) {
    throw MonotonicityError("speed_at: now precedes ramp start");
  }
  if (!(stop_duration_s >= 10.0 && stop_duration_s <= 15.0)) {
    throw ConfigError("stop_duration outside [10,15]");
  }
  const TimeMs duration_ms = seconds_to_ms(stop_duration_s);
  const TimeMs elapsed = now - ramp_start;
  if (elapsed >= duration_ms) return 0.0;
  return initial * static_cast<double>(duration_ms - elapsed) / static_cast<double>(duration_ms);
}

MotorState apply_motor_command(const MotorState& state, const MotorCommand& cmd, TimeMs now) {
  MotorState next = state;
  next.command = cmd;
  switch (cmd.kind) {
    case MotorCommand::Kind::RUN:
      next.speed = std::clamp(static_cast<double>(cmd.speed), 0.0, kMaxDuty);
      break;
    case MotorCommand::Kind::RAMP:
      if (state.command.kind == MotorCommand::Kind::STOP) {
        throw StateError("cannot ramp a stopped motor");
      }
      if (state.command.kind != MotorCommand::Kind::RAMP) {
        next.ramp_started_at = now;
        next.ramp_initial_speed = state.speed;
      }
      break;
    case MotorCommand::Kind::STOP:
      next.speed = 0.0;
      break;
  }
  return next;
}

double current_speed(const MotorState& state, TimeMs now, double stop_duration_s) {
  if (state.command.kind == MotorCommand::Kind::RAMP) {
    return speed_at(state.ramp_initial_speed, state.ramp_started_at, now, stop_duration_s);
  }
  return state.speed;
}

}  // namespace vigil
