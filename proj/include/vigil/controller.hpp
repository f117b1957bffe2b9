#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "vigil/alert_message.hpp"
#include "vigil/common.hpp"
#include "vigil/sensor_sample.hpp"

namespace vigil {

/// Tunables of the monitoring loop. Durations are in seconds.
struct ControllerConfig {
  int alcohol_threshold = 400;       // raw counts; detection is strictly above
  double t_alcohol_recheck = 20.0;   // wait before the alcohol recheck
  double t_eye_recheck = 2.0;        // wait between eye-closure rechecks
  double stop_duration = 12.5;       // ramp from cruise to standstill, within [10, 15]
  double eye_sample_period = 2.0;    // cadence of eye status reports
  double alcohol_sample_period = 1.0;
  int cruise_speed = 200;            // PWM duty under RUN

  /// Throws ConfigError naming the first violated bound.
  void validate() const;

  TimeMs alcohol_recheck_ms() const { return seconds_to_ms(t_alcohol_recheck); }
  TimeMs eye_recheck_ms() const { return seconds_to_ms(t_eye_recheck); }
  TimeMs stop_duration_ms() const { return seconds_to_ms(stop_duration); }
  TimeMs eye_period_ms() const { return seconds_to_ms(eye_sample_period); }
  TimeMs alcohol_period_ms() const { return seconds_to_ms(alcohol_sample_period); }

  friend bool operator==(const ControllerConfig&, const ControllerConfig&) = default;
};

enum class Phase { NORMAL, EYE_SUSPECT, EYE_WARNING, ALCOHOL_WARNING, RAMP_DOWN, STOPPED };
enum class RampCause { EYE, ALCOHOL };

std::string_view to_string(Phase phase);
std::optional<Phase> phase_from_string(std::string_view name);
std::string_view to_string(RampCause cause);

struct ControllerPhase {
  Phase phase = Phase::NORMAL;
  TimeMs entered_at = 0;
  std::optional<RampCause> ramp_cause;  // set only in RAMP_DOWN and STOPPED

  friend bool operator==(const ControllerPhase&, const ControllerPhase&) = default;
};

/// Motor command. RAMP corresponds to "slow down", STOP to "stop".
struct MotorCommand {
  enum class Kind { RUN, RAMP, STOP };
  Kind kind = Kind::RUN;
  int speed = 0;             // RUN: duty 0-255
  TimeMs ramp_started_at = 0;  // RAMP only
  int initial_speed = 0;       // RAMP only

  static MotorCommand run(int speed) { return {Kind::RUN, speed, 0, 0}; }
  static MotorCommand ramp(TimeMs started_at, int initial) { return {Kind::RAMP, 0, started_at, initial}; }
  static MotorCommand stop() { return {Kind::STOP, 0, 0, 0}; }

  friend bool operator==(const MotorCommand&, const MotorCommand&) = default;
};

struct ActuatorState {
  bool alarm = false;
  bool red_lamp = false;
  bool green_lamp = false;
  bool vibration = false;
  MotorCommand motor;

  friend bool operator==(const ActuatorState&, const ActuatorState&) = default;
};

struct ControllerState {
  ControllerConfig config;
  ControllerPhase phase;
  bool alcohol_detected = false;
  bool eyes_closed = false;
  bool vehicle_operating = true;
  std::optional<TimeMs> last_step_at;     // none before the first sample
  std::optional<TimeMs> last_status_at;   // last STATUS_EYES_OPEN report
  TimeMs last_eye_sample_at = 0;
  TimeMs last_alcohol_sample_at = 0;
  std::optional<TimeMs> recheck_at;       // pending recheck deadline
  std::uint16_t next_alert_seq = 0;

  friend bool operator==(const ControllerState&, const ControllerState&) = default;
};

struct StepResult {
  ControllerState state;
  ActuatorState actuators;
  std::vector<AlertMessage> alerts;
  bool latched = false;  // step was ignored because the vehicle is stopped
};

ControllerState controller_init(const ControllerConfig& config);

/// Advances the monitoring state machine by one sensor sample at virtual time `now`.
///
/// Alcohol is evaluated before eye closure. Only one escalation runs at a time;
/// alcohol detection preempts an eye escalation that has not yet reached the ramp.
/// A sample at exactly a recheck deadline is the recheck sample. Once STOPPED the
/// result is latched until controller_reset.
///
/// Throws MonotonicityError if `now` is earlier than the previous step or the
/// sample timestamp differs from `now`.
StepResult controller_step(const ControllerState& state, const SensorSample& sample, TimeMs now);

/// Only valid from STOPPED. Keeps the alert sequence counter so sequence numbers stay
/// strictly increasing within a session.
ControllerState controller_reset(const ControllerState& state);

/// Actuator outputs implied by a state; pure function of phase and config.
ActuatorState actuators_for(const ControllerState& state);

/// Earliest instant at which the controller needs a step regardless of sampling
/// cadence: a pending recheck, or the end of the ramp.
std::optional<TimeMs> next_deadline(const ControllerState& state);

}  // namespace vigil
