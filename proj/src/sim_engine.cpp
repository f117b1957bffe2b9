#include "vigil/sim_engine.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace vigil {

namespace {

constexpr std::array<std::string_view, 7> kRecordKindNames = {
    "phase_change", "actuator", "motor_speed", "alert_sent", "alert_delivered", "alert_lost", "sample"};

bool same_outputs(const ActuatorState& a, const ActuatorState& b) {
  return a.alarm == b.alarm && a.red_lamp == b.red_lamp && a.green_lamp == b.green_lamp &&
         a.vibration == b.vibration;
}

TimeMs ceil_ms(double ms) { return static_cast<TimeMs>(std::ceil(ms - 1e-9)); }

std::string format_number(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

std::string csv_field(std::string_view text) {
  if (text.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(text);
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

std::string_view to_string(RecordKind kind) { return kRecordKindNames.at(static_cast<std::size_t>(kind)); }

std::optional<RecordKind> record_kind_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kRecordKindNames.size(); ++i) {
    if (kRecordKindNames[i] == name) return static_cast<RecordKind>(i);
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// SimCore

SimCore::SimCore(const ControllerConfig& controller_cfg, const ChannelConfig& channel_cfg)
    : controller_(controller_init(controller_cfg)),
      actuators_(actuators_for(controller_)),
      channel_cfg_(channel_cfg),
      channel_rng_(channel_cfg.seed) {
  channel_cfg_.validate();
  motor_ = apply_motor_command(MotorState{}, actuators_.motor, 0);
}

double SimCore::speed_at(TimeMs t) const {
  return current_speed(motor_, t, controller_.config.stop_duration);
}

TraceRecord SimCore::snapshot(TimeMs t, RecordKind kind) const {
  TraceRecord rec;
  rec.t_ms = t;
  rec.kind = kind;
  rec.phase = controller_.phase.phase;
  rec.speed = speed_at(t);
  rec.alarm = actuators_.alarm;
  rec.red = actuators_.red_lamp;
  rec.green = actuators_.green_lamp;
  rec.vibration = actuators_.vibration;
  return rec;
}

void SimCore::record(TraceRecord rec) {
  if (!trace_.records.empty() && rec.t_ms < trace_.records.back().t_ms) {
    throw std::logic_error("trace time went backwards");
  }
  trace_.records.push_back(std::move(rec));
}

void SimCore::begin(TimeMs t0) {
  record(snapshot(t0, RecordKind::ACTUATOR));
  auto speed = snapshot(t0, RecordKind::MOTOR_SPEED);
  last_recorded_speed_ = speed.speed;
  record(std::move(speed));
}

void SimCore::deliver(const PendingDelivery& pending) {
  auto rec = snapshot(pending.due_ms, pending.delivered ? RecordKind::ALERT_DELIVERED : RecordKind::ALERT_LOST);
  rec.code = pending.message.code;
  rec.seq = pending.message.seq;
  rec.detail = pending.message.detail;
  rec.retries = pending.retries;
  record(std::move(rec));
}

std::vector<PendingDelivery> SimCore::step(TimeMs t, const GroundTruth& truth,
                                           std::optional<std::size_t> noise_source) {
  if (noise_source != noise_source_) {
    noise_source_ = noise_source;
    sensor_rng_ = Rng(truth.noise.seed);
  }
  auto [sample, rng] = sample_sensors(truth, t, sensor_rng_);
  sensor_rng_ = rng;

  auto sample_rec = snapshot(t, RecordKind::SAMPLE);
  sample_rec.alcohol_raw = sample.alcohol_raw;
  sample_rec.eyes_closed = sample.eyes_closed;
  record(std::move(sample_rec));

  const Phase before = controller_.phase.phase;
  StepResult result = controller_step(controller_, sample, t);
  controller_ = std::move(result.state);

  if (!(result.actuators.motor == actuators_.motor)) {
    motor_ = apply_motor_command(motor_, result.actuators.motor, t);
  }
  const bool outputs_changed = !same_outputs(result.actuators, actuators_);
  actuators_ = result.actuators;

  if (controller_.phase.phase != before) {
    auto rec = snapshot(t, RecordKind::PHASE_CHANGE);
    rec.from_phase = before;
    record(std::move(rec));
  }
  if (outputs_changed) record(snapshot(t, RecordKind::ACTUATOR));
  const double speed = speed_at(t);
  if (speed != last_recorded_speed_) {
    last_recorded_speed_ = speed;
    record(snapshot(t, RecordKind::MOTOR_SPEED));
  }

  std::vector<PendingDelivery> pending;
  for (auto& alert : result.alerts) {
    auto rec = snapshot(t, RecordKind::ALERT_SENT);
    rec.code = alert.code;
    rec.seq = alert.seq;
    rec.detail = alert.detail;
    record(std::move(rec));

    const Bytes frame = encode_frame(alert);
    const double start = std::max(static_cast<double>(t), link_free_at_ms_);
    auto [outcome, rng_after] = transmit(frame, channel_cfg_, start, channel_rng_);
    channel_rng_ = rng_after;
    link_free_at_ms_ = outcome.link_free_at_ms;
    trace_.transcript.insert(trace_.transcript.end(), outcome.events.begin(), outcome.events.end());
    pending.push_back(PendingDelivery{std::max(ceil_ms(outcome.at_ms), t + 1), std::move(alert), outcome.delivered,
                                      outcome.retries});
  }
  return pending;
}

bool SimCore::reset(TimeMs t) {
  if (!stopped()) return false;
  const Phase before = controller_.phase.phase;
  controller_ = controller_reset(controller_);
  controller_.phase.entered_at = std::max(controller_.phase.entered_at, t);
  actuators_ = actuators_for(controller_);
  motor_ = apply_motor_command(MotorState{}, actuators_.motor, t);

  auto rec = snapshot(t, RecordKind::PHASE_CHANGE);
  rec.from_phase = before;
  record(std::move(rec));
  record(snapshot(t, RecordKind::ACTUATOR));
  last_recorded_speed_ = speed_at(t);
  record(snapshot(t, RecordKind::MOTOR_SPEED));
  return true;
}

// ---------------------------------------------------------------------------
// EventEngine

EventEngine::EventEngine(const ControllerConfig& controller_cfg, const ChannelConfig& channel_cfg,
                         TruthSource source, std::optional<TimeMs> end_ms)
    : core_(controller_cfg, channel_cfg), source_(std::move(source)), end_ms_(end_ms) {
  core_.begin(0);
  if (end_ms_) schedule(*end_ms_, SimEventKind::SCENARIO_END);
  schedule_samples_from(0);
}

void EventEngine::schedule(TimeMs at, SimEventKind kind, std::size_t payload) {
  if (at <= last_instant_) {
    throw std::logic_error("scheduling inversion: event at " + std::to_string(at) + " ms after instant " +
                           std::to_string(last_instant_) + " ms was handled");
  }
  queue_.push(SimEvent{at, next_seq_++, kind, payload});
}

void EventEngine::schedule_samples_from(TimeMs t) {
  const auto& cfg = core_.controller_config();
  for (const auto& [kind, period] : {std::pair{SimEventKind::SAMPLE_ALCOHOL, cfg.alcohol_period_ms()},
                                    std::pair{SimEventKind::SAMPLE_EYES, cfg.eye_period_ms()}}) {
    const TimeMs next = (t + period - 1) / period * period;
    next_sample_at_[kind == SimEventKind::SAMPLE_EYES ? 1 : 0] = next;
    schedule(next, kind);
  }
}

bool EventEngine::deadline_scheduled(TimeMs at) const {
  return std::find(deadlines_scheduled_.begin(), deadlines_scheduled_.end(), at) != deadlines_scheduled_.end();
}

std::optional<TimeMs> EventEngine::next_event_time() const {
  if (finished_ || queue_.empty()) return std::nullopt;
  return queue_.top().at;
}

void EventEngine::handle_instant(TimeMs t) {
  std::vector<SimEvent> batch;
  while (!queue_.empty() && queue_.top().at == t) {
    batch.push_back(queue_.top());
    queue_.pop();
  }
  if (end_ms_ && t >= *end_ms_) {
    finished_ = true;
    return;
  }
  last_instant_ = t;

  for (const auto& ev : batch) {
    if (ev.kind == SimEventKind::CHANNEL_DELIVERY) {
      core_.deliver(deliveries_[ev.payload]);
      --in_flight_;
    }
  }

  bool step_needed = false;
  std::vector<SimEventKind> resample;
  for (const auto& ev : batch) {
    switch (ev.kind) {
      case SimEventKind::SAMPLE_ALCOHOL:
      case SimEventKind::SAMPLE_EYES: {
        const std::size_t slot = ev.kind == SimEventKind::SAMPLE_EYES ? 1 : 0;
        if (next_sample_at_[slot] != t) break;  // superseded by a reset
        step_needed = true;
        resample.push_back(ev.kind);
        break;
      }
      case SimEventKind::RECHECK:
      case SimEventKind::RAMP_COMPLETE:
        std::erase(deadlines_scheduled_, t);
        if (core_.deadline() == t) step_needed = true;
        break;
      default:
        break;
    }
  }

  if (step_needed && !core_.stopped()) {
    auto pending = core_.step(t, source_.truth(t), source_.noise_source(t));
    for (auto& p : pending) {
      deliveries_.push_back(std::move(p));
      ++in_flight_;
      schedule(deliveries_.back().due_ms, SimEventKind::CHANNEL_DELIVERY, deliveries_.size() - 1);
    }
    if (const auto d = core_.deadline(); d && !deadline_scheduled(*d)) {
      const auto kind = core_.controller().phase.phase == Phase::RAMP_DOWN ? SimEventKind::RAMP_COMPLETE
                                                                           : SimEventKind::RECHECK;
      schedule(*d, kind);
      deadlines_scheduled_.push_back(*d);
    }
  }

  if (!core_.stopped()) {
    const auto& cfg = core_.controller_config();
    for (const auto kind : resample) {
      const bool eyes = kind == SimEventKind::SAMPLE_EYES;
      const TimeMs next = t + (eyes ? cfg.eye_period_ms() : cfg.alcohol_period_ms());
      next_sample_at_[eyes ? 1 : 0] = next;
      schedule(next, kind);
    }
  } else {
    next_sample_at_ = {-1, -1};
  }

  if (end_ms_ && core_.stopped() && in_flight_ == 0) {
    finished_ = true;
  }
}

bool EventEngine::advance_to(TimeMs t) {
  while (!finished_ && !queue_.empty() && queue_.top().at <= t) {
    handle_instant(queue_.top().at);
  }
  if (!finished_ && end_ms_ && queue_.empty()) finished_ = true;
  return !finished_;
}

void EventEngine::run_to_completion() {
  if (!end_ms_) throw std::logic_error("run_to_completion needs an end time");
  while (!finished_ && !queue_.empty()) {
    handle_instant(queue_.top().at);
  }
  finished_ = true;
}

bool EventEngine::reset(TimeMs t) {
  const TimeMs at = std::max(t, last_instant_ + 1);
  if (!core_.reset(at)) return false;
  schedule_samples_from(at);
  return true;
}

// ---------------------------------------------------------------------------
// Scripted runs

namespace {

// Walks the script forward; valid because the engine queries nondecreasing times.
class TruthCursor {
 public:
  explicit TruthCursor(const ScenarioScript& script) : script_(&script) {}

  void advance(TimeMs t) {
    while (next_ < script_->events.size() && script_->events[next_].at_ms() <= t) {
      const auto& ev = script_->events[next_];
      std::visit(
          [&](const auto& e) {
            using E = std::decay_t<decltype(e)>;
            if constexpr (std::is_same_v<E, EyesEvent>) {
              truth_.eyes_closed = e.closed;
            } else if constexpr (std::is_same_v<E, AlcoholEvent>) {
              truth_.ppm = e.ppm;
            } else {
              truth_.noise = e.spec;
              noise_ = next_;
            }
          },
          ev.kind);
      ++next_;
    }
  }

  const GroundTruth& truth() const { return truth_; }
  std::optional<std::size_t> noise() const { return noise_; }

 private:
  const ScenarioScript* script_;
  std::size_t next_ = 0;
  GroundTruth truth_;
  std::optional<std::size_t> noise_;
};

}  // namespace

Trace run(const ScenarioScript& script, const ControllerConfig& controller_cfg, const ChannelConfig& channel_cfg) {
  auto cursor = std::make_shared<TruthCursor>(script);
  TruthSource source{
      [cursor](TimeMs t) {
        cursor->advance(t);
        return cursor->truth();
      },
      [cursor](TimeMs t) {
        cursor->advance(t);
        return cursor->noise();
      },
  };
  EventEngine engine(controller_cfg, channel_cfg, std::move(source), script.end_ms());
  engine.run_to_completion();
  return engine.core().trace();
}

Trace oracle_run(const ScenarioScript& script, const ControllerConfig& controller_cfg,
                 const ChannelConfig& channel_cfg) {
  SimCore core(controller_cfg, channel_cfg);
  core.begin(0);
  const TimeMs alcohol_period = controller_cfg.alcohol_period_ms();
  const TimeMs eye_period = controller_cfg.eye_period_ms();
  std::vector<PendingDelivery> in_flight;

  for (TimeMs t = 0; t < script.end_ms(); ++t) {
    for (auto it = in_flight.begin(); it != in_flight.end();) {
      if (it->due_ms == t) {
        core.deliver(*it);
        it = in_flight.erase(it);
      } else {
        ++it;
      }
    }
    if (!core.stopped()) {
      const bool sample_due = t % alcohol_period == 0 || t % eye_period == 0;
      const bool deadline_due = core.deadline() == t;
      if (sample_due || deadline_due) {
        auto fresh = core.step(t, ground_truth_at_ms(script, t), active_noise_event(script, t));
        in_flight.insert(in_flight.end(), fresh.begin(), fresh.end());
      }
    }
    if (core.stopped() && in_flight.empty()) break;
  }
  return core.trace();
}

std::optional<TraceDivergence> compare_traces(const Trace& a, const Trace& b, TimeMs tolerance_ms) {
  const std::size_t n = std::min(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < n; ++i) {
    TraceRecord ra = a.records[i];
    TraceRecord rb = b.records[i];
    if (std::llabs(ra.t_ms - rb.t_ms) > tolerance_ms) {
      return TraceDivergence{i, "timestamp " + std::to_string(ra.t_ms) + " vs " + std::to_string(rb.t_ms) +
                                    " at record " + std::to_string(i) + " (" + std::string(to_string(ra.kind)) +
                                    ")"};
    }
    ra.t_ms = rb.t_ms = 0;
    if (ra.kind != rb.kind) {
      return TraceDivergence{i, "record " + std::to_string(i) + " kind " + std::string(to_string(ra.kind)) +
                                    " vs " + std::string(to_string(rb.kind))};
    }
    if (ra.kind == RecordKind::MOTOR_SPEED || ra.kind == RecordKind::SAMPLE) {
      // Speed is evaluated at the record time, which may legitimately differ within tolerance.
      if (tolerance_ms > 0) ra.speed = rb.speed;
    }
    if (!(ra == rb)) {
      return TraceDivergence{i, "record " + std::to_string(i) + " (" + std::string(to_string(ra.kind)) +
                                    ") fields differ: " + record_to_json(a.records[i]) + " vs " +
                                    record_to_json(b.records[i])};
    }
  }
  if (a.records.size() != b.records.size()) {
    return TraceDivergence{n, "record count " + std::to_string(a.records.size()) + " vs " +
                                  std::to_string(b.records.size())};
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Export / import

std::string record_to_json(const TraceRecord& r) {
  nlohmann::ordered_json j;
  j["t_ms"] = r.t_ms;
  j["kind"] = to_string(r.kind);
  j["phase"] = to_string(r.phase);
  j["speed"] = r.speed;
  j["alarm"] = r.alarm;
  j["red"] = r.red;
  j["green"] = r.green;
  j["vibration"] = r.vibration;
  if (r.from_phase) j["from"] = to_string(*r.from_phase);
  if (r.code) {
    j["code"] = to_string(*r.code);
    j["detail"] = r.detail;
  }
  if (r.seq) j["seq"] = *r.seq;
  if (r.retries) j["retries"] = *r.retries;
  if (r.alcohol_raw) j["alcohol_raw"] = *r.alcohol_raw;
  if (r.eyes_closed) j["eyes_closed"] = *r.eyes_closed;
  return j.dump();
}

std::string record_to_csv(const TraceRecord& r) {
  std::string out = std::to_string(r.t_ms);
  out += ',';
  out += to_string(r.kind);
  out += ',';
  out += to_string(r.phase);
  out += ',';
  out += format_number(r.speed);
  for (bool b : {r.alarm, r.red, r.green, r.vibration}) {
    out += b ? ",1" : ",0";
  }
  out += ',';
  if (r.code) out += to_string(*r.code);
  out += ',';
  out += csv_field(r.detail);
  return out;
}

std::size_t export_trace(const Trace& trace, TraceFormat format, std::ostream& sink) {
  std::size_t written = 0;
  auto emit = [&](const std::string& line) {
    sink << line << '\n';
    if (!sink) throw ExportError("trace sink write failed", written);
    written += line.size() + 1;
  };
  if (format == TraceFormat::CSV) emit(kCsvHeader);
  for (const auto& rec : trace.records) {
    emit(format == TraceFormat::CSV ? record_to_csv(rec) : record_to_json(rec));
  }
  sink.flush();
  if (!sink) throw ExportError("trace sink flush failed", written);
  return written;
}

std::variant<Trace, TraceParseError> import_trace_jsonl(std::istream& in) {
  Trace trace;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return TraceParseError{line_no, "not a JSON object"};
    try {
      TraceRecord r;
      r.t_ms = j.at("t_ms").get<TimeMs>();
      const auto kind = record_kind_from_string(j.at("kind").get<std::string>());
      const auto phase = phase_from_string(j.at("phase").get<std::string>());
      if (!kind || !phase) return TraceParseError{line_no, "unknown kind or phase"};
      r.kind = *kind;
      r.phase = *phase;
      r.speed = j.at("speed").get<double>();
      r.alarm = j.at("alarm").get<bool>();
      r.red = j.at("red").get<bool>();
      r.green = j.at("green").get<bool>();
      r.vibration = j.at("vibration").get<bool>();
      if (j.contains("from")) {
        r.from_phase = phase_from_string(j["from"].get<std::string>());
        if (!r.from_phase) return TraceParseError{line_no, "unknown from-phase"};
      }
      if (j.contains("code")) {
        r.code = alert_code_from_string(j["code"].get<std::string>());
        if (!r.code) return TraceParseError{line_no, "unknown alert code"};
        r.detail = j.at("detail").get<std::string>();
      }
      if (j.contains("seq")) r.seq = j["seq"].get<std::uint16_t>();
      if (j.contains("retries")) r.retries = j["retries"].get<int>();
      if (j.contains("alcohol_raw")) r.alcohol_raw = j["alcohol_raw"].get<int>();
      if (j.contains("eyes_closed")) r.eyes_closed = j["eyes_closed"].get<bool>();
      trace.records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      return TraceParseError{line_no, e.what()};
    }
  }
  return trace;
}

}  // namespace vigil
