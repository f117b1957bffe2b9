#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <iosfwd>
#include <optional>
#include <queue>
#include <string>
#include <variant>
#include <vector>

#include "vigil/alert_channel.hpp"
#include "vigil/controller.hpp"
#include "vigil/scenario.hpp"
#include "vigil/vehicle.hpp"

namespace vigil {

enum class RecordKind { PHASE_CHANGE, ACTUATOR, MOTOR_SPEED, ALERT_SENT, ALERT_DELIVERED, ALERT_LOST, SAMPLE };
std::string_view to_string(RecordKind kind);
std::optional<RecordKind> record_kind_from_string(std::string_view name);

/// One trace line. Every record carries a snapshot of phase, speed and actuators
/// after the change it describes; the optional fields depend on the kind.
struct TraceRecord {
  TimeMs t_ms = 0;
  RecordKind kind = RecordKind::SAMPLE;
  Phase phase = Phase::NORMAL;
  double speed = 0.0;
  bool alarm = false;
  bool red = false;
  bool green = false;
  bool vibration = false;

  std::optional<Phase> from_phase;        // phase_change
  std::optional<AlertCode> code;          // alert_*
  std::optional<std::uint16_t> seq;       // alert_*
  std::string detail;                     // alert_*
  std::optional<int> retries;             // alert_delivered
  std::optional<int> alcohol_raw;         // sample
  std::optional<bool> eyes_closed;        // sample

  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

struct Trace {
  std::vector<TraceRecord> records;
  std::vector<TranscriptEvent> transcript;  // alert channel attempts

  friend bool operator==(const Trace&, const Trace&) = default;
};

enum class SimEventKind { SAMPLE_EYES, SAMPLE_ALCOHOL, RECHECK, CHANNEL_DELIVERY, RAMP_COMPLETE, SCENARIO_END };

struct SimEvent {
  TimeMs at = 0;
  std::uint64_t seq = 0;
  SimEventKind kind = SimEventKind::SAMPLE_ALCOHOL;
  std::size_t payload = 0;  // index of the pending delivery for CHANNEL_DELIVERY

  // Ordered as a min-heap by (at, seq).
  friend bool operator>(const SimEvent& a, const SimEvent& b) {
    return a.at != b.at ? a.at > b.at : a.seq > b.seq;
  }
};

/// An alert in flight on the channel, resolved at `due_ms`.
struct PendingDelivery {
  TimeMs due_ms = 0;
  AlertMessage message;
  bool delivered = false;
  int retries = 0;
};

/// Per-instant semantics shared by every engine: deliveries, sensor sampling,
/// controller step, motor bookkeeping and trace recording. Engines only differ in
/// how they discover which instants need handling.
class SimCore {
 public:
  SimCore(const ControllerConfig& controller_cfg, const ChannelConfig& channel_cfg);

  /// Records the initial actuator and speed snapshot.
  void begin(TimeMs t0);

  void deliver(const PendingDelivery& pending);

  /// Samples `truth` at `t` and steps the controller. Returns deliveries created by
  /// the alerts this step emitted.
  std::vector<PendingDelivery> step(TimeMs t, const GroundTruth& truth, std::optional<std::size_t> noise_source);

  /// Re-initializes a stopped controller at `t`. Returns false if not stopped.
  bool reset(TimeMs t);

  bool stopped() const { return controller_.phase.phase == Phase::STOPPED; }
  std::optional<TimeMs> deadline() const { return next_deadline(controller_); }
  const ControllerState& controller() const { return controller_; }
  const ControllerConfig& controller_config() const { return controller_.config; }
  double speed_at(TimeMs t) const;
  Trace& trace() { return trace_; }
  const Trace& trace() const { return trace_; }

 private:
  TraceRecord snapshot(TimeMs t, RecordKind kind) const;
  void record(TraceRecord rec);

  ControllerState controller_;
  ActuatorState actuators_;
  MotorState motor_;
  ChannelConfig channel_cfg_;
  Rng sensor_rng_;
  std::optional<std::size_t> noise_source_;
  Rng channel_rng_;
  double link_free_at_ms_ = 0.0;
  double last_recorded_speed_ = -1.0;
  Trace trace_;
};

/// Where the engine gets the driver's real state at an instant.
struct TruthSource {
  std::function<GroundTruth(TimeMs)> truth;
  std::function<std::optional<std::size_t>(TimeMs)> noise_source;
};

/// Discrete-event executor over a virtual clock. Events are ordered by (at, seq);
/// all events at one instant are handled together: deliveries first, then at most
/// one controller step.
class EventEngine {
 public:
  EventEngine(const ControllerConfig& controller_cfg, const ChannelConfig& channel_cfg, TruthSource source,
              std::optional<TimeMs> end_ms);

  /// Handles every instant with at <= t. Returns false once the run has finished.
  bool advance_to(TimeMs t);

  /// Runs until SCENARIO_END or quiescence after STOPPED.
  void run_to_completion();

  bool finished() const { return finished_; }
  bool reset(TimeMs t);
  std::optional<TimeMs> next_event_time() const;
  SimCore& core() { return core_; }
  const SimCore& core() const { return core_; }

 private:
  void schedule(TimeMs at, SimEventKind kind, std::size_t payload = 0);
  void schedule_samples_from(TimeMs t);
  void handle_instant(TimeMs t);
  bool deadline_scheduled(TimeMs at) const;

  SimCore core_;
  TruthSource source_;
  std::optional<TimeMs> end_ms_;
  std::priority_queue<SimEvent, std::vector<SimEvent>, std::greater<>> queue_;
  std::vector<PendingDelivery> deliveries_;
  std::vector<TimeMs> deadlines_scheduled_;
  std::array<TimeMs, 2> next_sample_at_{-1, -1};  // alcohol, eyes
  std::uint64_t next_seq_ = 0;
  std::size_t in_flight_ = 0;
  TimeMs last_instant_ = -1;
  bool finished_ = false;
};

/// Event-driven simulation of a script. Throws ConfigError on invalid configs.
Trace run(const ScenarioScript& script, const ControllerConfig& controller_cfg, const ChannelConfig& channel_cfg);

/// Reference interpreter: ticks every millisecond, evaluates ground truth, fires
/// whatever is due and steps the controller. Same record schema as run().
Trace oracle_run(const ScenarioScript& script, const ControllerConfig& controller_cfg,
                 const ChannelConfig& channel_cfg);

struct TraceDivergence {
  std::size_t index = 0;
  std::string description;
};

/// First point where two traces disagree beyond `tolerance_ms` on timestamps.
std::optional<TraceDivergence> compare_traces(const Trace& a, const Trace& b, TimeMs tolerance_ms = 0);

enum class TraceFormat { JSONL, CSV };

inline constexpr const char* kCsvHeader = "t_ms,kind,phase,speed,alarm,red,green,vibration,code,detail";

class ExportError : public Error {
 public:
  ExportError(const std::string& what, std::size_t bytes_written) : Error(what), bytes_written(bytes_written) {}
  std::size_t bytes_written;
};

std::string record_to_json(const TraceRecord& record);
std::string record_to_csv(const TraceRecord& record);

/// Writes the trace and returns the number of bytes written. Throws ExportError,
/// carrying the partial count, when the sink fails.
std::size_t export_trace(const Trace& trace, TraceFormat format, std::ostream& sink);

struct TraceParseError {
  std::size_t line = 0;
  std::string message;
};

/// Reads records written by export_trace(JSONL).
std::variant<Trace, TraceParseError> import_trace_jsonl(std::istream& in);

}  // namespace vigil
