#include "vigil/controller.hpp"

#include <array>
#include <string>
#include <utility>

#include "vigil/sensors.hpp"

namespace vigil {

namespace {

constexpr std::array<std::string_view, 6> kPhaseNames = {
    "NORMAL", "EYE_SUSPECT", "EYE_WARNING", "ALCOHOL_WARNING", "RAMP_DOWN", "STOPPED"};

void require_positive(double value, const char* name) {
  if (!(value > 0.0)) {
    throw ConfigError(std::string(name) + " must be strictly positive");
  }
}

ControllerState enter(ControllerState state, Phase phase, TimeMs now,
                      std::optional<RampCause> cause = std::nullopt) {
  state.phase = ControllerPhase{phase, now, cause};
  state.recheck_at.reset();
  state.vehicle_operating = phase != Phase::STOPPED;
  return state;
}

struct Emitter {
  ControllerState& state;
  std::vector<AlertMessage>& out;
  TimeMs now;

  void operator()(AlertCode code, std::string detail) {
    out.push_back(AlertMessage{state.next_alert_seq, now, code, std::move(detail)});
    ++state.next_alert_seq;
  }
};

std::string raw_detail(int raw) { return "raw=" + std::to_string(raw); }

}  // namespace

std::string_view to_string(Phase phase) { return kPhaseNames.at(static_cast<std::size_t>(phase)); }

std::optional<Phase> phase_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kPhaseNames.size(); ++i) {
    if (kPhaseNames[i] == name) return static_cast<Phase>(i);
  }
  return std::nullopt;
}

std::string_view to_string(RampCause cause) { return cause == RampCause::EYE ? "EYE" : "ALCOHOL"; }

void ControllerConfig::validate() const {
  require_positive(t_alcohol_recheck, "t_alcohol_recheck");
  require_positive(t_eye_recheck, "t_eye_recheck");
  require_positive(stop_duration, "stop_duration");
  require_positive(eye_sample_period, "eye_sample_period");
  require_positive(alcohol_sample_period, "alcohol_sample_period");
  if (stop_duration < 10.0 || stop_duration > 15.0) {
    throw ConfigError("stop_duration outside [10,15]");
  }
  if (alcohol_threshold < 0 || alcohol_threshold > kAdcMax) {
    throw ConfigError("alcohol_threshold outside [0,1023]");
  }
  if (cruise_speed < 0 || cruise_speed > 255) {
    throw ConfigError("cruise_speed outside [0,255]");
  }
  // Sub-millisecond durations would collapse to zero in virtual time.
  if (eye_recheck_ms() <= 0 || alcohol_recheck_ms() <= 0 || eye_period_ms() <= 0 ||
      alcohol_period_ms() <= 0) {
    throw ConfigError("durations must be at least 1 ms");
  }
}

ControllerState controller_init(const ControllerConfig& config) {
  config.validate();
  ControllerState state;
  state.config = config;
  return state;
}

ActuatorState actuators_for(const ControllerState& state) {
  ActuatorState out;
  const auto& cfg = state.config;
  const bool eye_cause = state.phase.ramp_cause == RampCause::EYE;
  switch (state.phase.phase) {
    case Phase::NORMAL:
      out.green_lamp = true;
      out.motor = MotorCommand::run(cfg.cruise_speed);
      break;
    case Phase::EYE_SUSPECT:
      out.motor = MotorCommand::run(cfg.cruise_speed);
      break;
    case Phase::EYE_WARNING:
      out.alarm = out.red_lamp = out.vibration = true;
      out.motor = MotorCommand::run(cfg.cruise_speed);
      break;
    case Phase::ALCOHOL_WARNING:
      out.alarm = out.red_lamp = true;
      out.motor = MotorCommand::run(cfg.cruise_speed);
      break;
    case Phase::RAMP_DOWN:
      out.alarm = out.red_lamp = true;
      out.vibration = eye_cause;
      out.motor = MotorCommand::ramp(state.phase.entered_at, cfg.cruise_speed);
      break;
    case Phase::STOPPED:
      out.alarm = out.red_lamp = true;
      out.vibration = eye_cause;
      out.motor = MotorCommand::stop();
      break;
  }
  return out;
}

std::optional<TimeMs> next_deadline(const ControllerState& state) {
  if (state.phase.phase == Phase::RAMP_DOWN) {
    return state.phase.entered_at + state.config.stop_duration_ms();
  }
  return state.recheck_at;
}

StepResult controller_step(const ControllerState& state, const SensorSample& sample, TimeMs now) {
  if (sample.at != now) {
    throw MonotonicityError("sample timestamp " + std::to_string(sample.at) +
                            " does not match step time " + std::to_string(now));
  }
  if (state.last_step_at && now < *state.last_step_at) {
    throw MonotonicityError("step at " + std::to_string(now) + " ms precedes previous step at " +
                            std::to_string(*state.last_step_at) + " ms");
  }
  if (state.phase.phase == Phase::STOPPED) {
    return StepResult{state, actuators_for(state), {}, true};
  }

  ControllerState next = state;
  std::vector<AlertMessage> alerts;
  Emitter emit{next, alerts, now};

  next.last_step_at = now;
  next.last_alcohol_sample_at = now;
  next.last_eye_sample_at = now;
  next.alcohol_detected = classify_alcohol(sample.alcohol_raw, next.config.alcohol_threshold);
  next.eyes_closed = sample.eyes_closed;

  const bool recheck_due = next.recheck_at && now >= *next.recheck_at;

  switch (state.phase.phase) {
    case Phase::NORMAL:
      if (next.alcohol_detected) {
        next = enter(next, Phase::ALCOHOL_WARNING, now);
        next.recheck_at = now + next.config.alcohol_recheck_ms();
        emit(AlertCode::ALERT_ALCOHOL, raw_detail(sample.alcohol_raw));
      } else if (next.eyes_closed) {
        next = enter(next, Phase::EYE_SUSPECT, now);
        next.recheck_at = now + next.config.eye_recheck_ms();
        emit(AlertCode::ALERT_EYES_CLOSED, "eyes closed");
      }
      break;

    case Phase::ALCOHOL_WARNING:
      if (recheck_due) {
        if (next.alcohol_detected) {
          next = enter(next, Phase::RAMP_DOWN, now, RampCause::ALCOHOL);
          emit(AlertCode::MOTOR_RAMP, "alcohol persists " + raw_detail(sample.alcohol_raw));
        } else {
          next = enter(next, Phase::NORMAL, now);
        }
      }
      break;

    case Phase::EYE_SUSPECT:
    case Phase::EYE_WARNING:
      if (next.alcohol_detected) {
        next = enter(next, Phase::ALCOHOL_WARNING, now);
        next.recheck_at = now + next.config.alcohol_recheck_ms();
        emit(AlertCode::ALERT_ALCOHOL, raw_detail(sample.alcohol_raw));
      } else if (recheck_due) {
        if (!next.eyes_closed) {
          next = enter(next, Phase::NORMAL, now);
        } else if (state.phase.phase == Phase::EYE_SUSPECT) {
          next = enter(next, Phase::EYE_WARNING, now);
          next.recheck_at = now + next.config.eye_recheck_ms();
          emit(AlertCode::ALERT_DROWSY, "eyes still closed");
        } else {
          next = enter(next, Phase::RAMP_DOWN, now, RampCause::EYE);
          emit(AlertCode::ALERT_URGENT_SLEEP, "eyes closed, slowing vehicle");
        }
      }
      break;

    case Phase::RAMP_DOWN: {
      const TimeMs ramp_end = state.phase.entered_at + state.config.stop_duration_ms();
      if (now >= ramp_end) {
        const auto cause = state.phase.ramp_cause;
        next = enter(next, Phase::STOPPED, now, cause);
        emit(AlertCode::MOTOR_STOPPED,
             std::string("vehicle stopped (") + std::string(to_string(cause.value_or(RampCause::EYE))) + ")");
      }
      break;
    }

    case Phase::STOPPED:
      break;
  }

  if (next.phase.phase == Phase::NORMAL && !next.eyes_closed) {
    const TimeMs period = next.config.eye_period_ms();
    if (!next.last_status_at || now - *next.last_status_at >= period) {
      emit(AlertCode::STATUS_EYES_OPEN, "eyes open");
      next.last_status_at = now;
    }
  }

  return StepResult{next, actuators_for(next), std::move(alerts), false};
}

ControllerState controller_reset(const ControllerState& state) {
  if (state.phase.phase != Phase::STOPPED) {
    throw StateError("reset only from latched stop");
  }
  ControllerState fresh = controller_init(state.config);
  fresh.next_alert_seq = state.next_alert_seq;
  fresh.last_step_at = state.last_step_at;
  fresh.phase.entered_at = state.last_step_at.value_or(state.phase.entered_at);
  return fresh;
}

}  // namespace vigil
