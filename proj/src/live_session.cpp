#include <nlohmann/json.hpp>

#include "vigil/live.hpp"

namespace vigil {

ClientMessage parse_client_message(std::string_view text) {
  const auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return ProtocolError{"message is not a JSON object"};
  const auto type = j.find("type");
  if (type == j.end() || !type->is_string()) return ProtocolError{"missing \"type\""};

  if (*type == "reset") return ResetInput{};
  if (*type != "input") return ProtocolError{"unknown type " + type->dump()};

  if (const auto eyes = j.find("eyes"); eyes != j.end()) {
    if (*eyes == "open") return EyesInput{false};
    if (*eyes == "closed") return EyesInput{true};
    return ProtocolError{"eyes must be \"open\" or \"closed\""};
  }
  if (const auto ppm = j.find("alcohol_ppm"); ppm != j.end()) {
    if (!ppm->is_number()) return ProtocolError{"alcohol_ppm must be a number"};
    const double value = ppm->get<double>();
    if (!(value >= 0.0 && value <= kMaxGroundTruthPpm)) return ProtocolError{"alcohol_ppm outside [0,1000]"};
    return AlcoholInput{value};
  }
  return ProtocolError{"input needs \"eyes\" or \"alcohol_ppm\""};
}

std::string state_message(const LiveState& s) {
  nlohmann::ordered_json j;
  j["type"] = "state";
  j["t_ms"] = s.t_ms;
  j["phase"] = to_string(s.phase);
  j["speed"] = s.speed;
  j["alarm"] = s.alarm;
  j["red"] = s.red;
  j["green"] = s.green;
  j["vibration"] = s.vibration;
  return j.dump();
}

std::string alert_message(const TraceRecord& delivered) {
  nlohmann::ordered_json j;
  j["type"] = "alert";
  j["seq"] = delivered.seq.value_or(0);
  j["code"] = delivered.code ? to_string(*delivered.code) : "";
  j["detail"] = delivered.detail;
  return j.dump();
}

LiveSession::LiveSession(const ControllerConfig& controller_cfg, const ChannelConfig& channel_cfg)
    : truth_(std::make_shared<GroundTruth>()),
      engine_(controller_cfg, channel_cfg,
              TruthSource{[truth = truth_](TimeMs) { return *truth; },
                          [](TimeMs) { return std::optional<std::size_t>{}; }},
              std::nullopt) {}

void LiveSession::advance_to(TimeMs t) {
  engine_.advance_to(t);
  now_ = std::max(now_, t);
}

void LiveSession::apply(const ClientMessage& input, TimeMs now) {
  std::visit(
      [&](const auto& msg) {
        using M = std::decay_t<decltype(msg)>;
        if constexpr (std::is_same_v<M, EyesInput>) {
          truth_->eyes_closed = msg.closed;
        } else if constexpr (std::is_same_v<M, AlcoholInput>) {
          truth_->ppm = msg.ppm;
        } else if constexpr (std::is_same_v<M, ResetInput>) {
          engine_.reset(now);
        }
      },
      input);
}

LiveState LiveSession::state() const {
  const auto& core = engine_.core();
  const auto act = actuators_for(core.controller());
  LiveState s;
  s.t_ms = now_;
  s.phase = core.controller().phase.phase;
  s.speed = core.speed_at(std::max(now_, core.controller().phase.entered_at));
  s.alarm = act.alarm;
  s.red = act.red_lamp;
  s.green = act.green_lamp;
  s.vibration = act.vibration;
  return s;
}

std::vector<TraceRecord> LiveSession::take_delivered_alerts() {
  std::vector<TraceRecord> out;
  const auto& records = trace().records;
  for (; alerts_cursor_ < records.size(); ++alerts_cursor_) {
    if (records[alerts_cursor_].kind == RecordKind::ALERT_DELIVERED) out.push_back(records[alerts_cursor_]);
  }
  return out;
}

}  // namespace vigil
