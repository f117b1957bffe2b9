#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "vigil/common.hpp"
#include "vigil/sensors.hpp"

namespace vigil {

/// Alert frames carry a 32-bit millisecond timestamp.
inline constexpr double kMaxScriptSeconds = 4294967.295;

struct EyesEvent {
  bool closed = false;
  friend bool operator==(const EyesEvent&, const EyesEvent&) = default;
};

struct AlcoholEvent {
  double ppm = 0.0;
  friend bool operator==(const AlcoholEvent&, const AlcoholEvent&) = default;
};

struct NoiseEvent {
  NoiseSpec spec;
  friend bool operator==(const NoiseEvent&, const NoiseEvent&) = default;
};

using ScenarioEventKind = std::variant<EyesEvent, AlcoholEvent, NoiseEvent>;

struct ScenarioEvent {
  double at = 0.0;  // seconds
  ScenarioEventKind kind;

  TimeMs at_ms() const { return seconds_to_ms(at); }
  friend bool operator==(const ScenarioEvent&, const ScenarioEvent&) = default;
};

/// Immutable, time-ordered timeline of ground-truth changes.
struct ScenarioScript {
  std::string name;
  std::vector<ScenarioEvent> events;
  double end_at = 0.0;  // seconds

  TimeMs end_ms() const { return seconds_to_ms(end_at); }
  friend bool operator==(const ScenarioScript&, const ScenarioScript&) = default;
};

struct ParseDiagnostic {
  enum class Severity { ERROR, WARNING };
  std::size_t line = 1;    // 1-based
  std::size_t column = 1;  // 1-based, in bytes
  std::string message;
  Severity severity = Severity::ERROR;
};

struct ParseResult {
  std::optional<ScenarioScript> script;  // empty when any error was reported
  std::vector<ParseDiagnostic> diagnostics;

  bool ok() const { return script.has_value(); }
};

/// Line-oriented grammar, `#` starts a comment:
///
///   scenario "name"
///   at <T>s eyes open|closed
///   at <T>s alcohol <P>ppm
///   at <T>s noise seed <INT> jitter <R> flip <R>
///   end <T>s
///
/// Never throws on malformed input; every problem becomes a positioned diagnostic.
ParseResult parse_scenario(std::string_view source);

/// Canonical text: one statement per line, shortest round-trip decimals ("5s").
std::string format_scenario(const ScenarioScript& script);

class RangeError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// Piecewise-constant, left-closed: the latest event at or before t wins.
/// Defaults before any event: eyes open, 0 ppm, silent noise.
/// Throws RangeError for t outside [0, end_at].
GroundTruth ground_truth_at(const ScenarioScript& script, double t_seconds);

/// Same rule on the millisecond grid the engines use.
GroundTruth ground_truth_at_ms(const ScenarioScript& script, TimeMs t_ms);

/// Index of the latest noise event at or before t_ms, if any.
std::optional<std::size_t> active_noise_event(const ScenarioScript& script, TimeMs t_ms);

}  // namespace vigil
