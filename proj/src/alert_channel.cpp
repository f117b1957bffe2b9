#include "vigil/alert_channel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <string>
#include <unordered_map>

#include <nlohmann/json.hpp>

namespace vigil {

namespace {

constexpr std::array<std::string_view, kAlertCodeCount> kCodeNames = {
    "STATUS_EYES_OPEN", "ALERT_EYES_CLOSED", "ALERT_DROWSY", "ALERT_URGENT_SLEEP",
    "ALERT_ALCOHOL",    "MOTOR_RAMP",        "MOTOR_STOPPED"};

void put_be(Bytes& out, std::uint64_t value, int width) {
  for (int shift = (width - 1) * 8; shift >= 0; shift -= 8) {
    out.push_back(static_cast<std::uint8_t>((value >> shift) & 0xFF));
  }
}

std::uint64_t get_be(std::span<const std::uint8_t> in, std::size_t offset, int width) {
  std::uint64_t value = 0;
  for (int i = 0; i < width; ++i) value = (value << 8) | in[offset + static_cast<std::size_t>(i)];
  return value;
}

}  // namespace

std::string_view to_string(AlertCode code) { return kCodeNames.at(static_cast<std::size_t>(code)); }

std::optional<AlertCode> alert_code_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kCodeNames.size(); ++i) {
    if (kCodeNames[i] == name) return static_cast<AlertCode>(i);
  }
  return std::nullopt;
}

std::uint8_t crc8(std::span<const std::uint8_t> data) {
  std::uint8_t crc = 0x00;
  for (std::uint8_t byte : data) {
    crc ^= byte;
    for (int bit = 0; bit < 8; ++bit) {
      crc = (crc & 0x80) ? static_cast<std::uint8_t>((crc << 1) ^ 0x07) : static_cast<std::uint8_t>(crc << 1);
    }
  }
  return crc;
}

bool is_valid_utf8(std::string_view text) {
  std::size_t i = 0;
  while (i < text.size()) {
    const auto lead = static_cast<unsigned char>(text[i]);
    std::size_t extra = 0;
    std::uint32_t cp = 0;
    if (lead < 0x80) {
      ++i;
      continue;
    } else if ((lead & 0xE0) == 0xC0) {
      extra = 1;
      cp = lead & 0x1F;
    } else if ((lead & 0xF0) == 0xE0) {
      extra = 2;
      cp = lead & 0x0F;
    } else if ((lead & 0xF8) == 0xF0) {
      extra = 3;
      cp = lead & 0x07;
    } else {
      return false;
    }
    if (i + extra >= text.size()) return false;
    for (std::size_t k = 1; k <= extra; ++k) {
      const auto cont = static_cast<unsigned char>(text[i + k]);
      if ((cont & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cont & 0x3F);
    }
    // Reject overlong forms, surrogates and out-of-range code points.
    if ((extra == 1 && cp < 0x80) || (extra == 2 && cp < 0x800) || (extra == 3 && cp < 0x10000) ||
        cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
      return false;
    }
    i += extra + 1;
  }
  return true;
}

Bytes encode_frame(const AlertMessage& msg) {
  if (msg.detail.size() > kMaxDetailBytes) {
    throw EncodeError("detail exceeds 64 bytes");
  }
  if (!is_valid_utf8(msg.detail)) {
    throw EncodeError("detail is not valid UTF-8");
  }
  if (msg.at < 0 || msg.at > 0xFFFFFFFFLL) {
    throw EncodeError("timestamp does not fit in 32 bits");
  }
  Bytes out;
  out.reserve(kFrameOverheadBytes + kPayloadHeaderBytes + msg.detail.size());
  out.push_back(kSync0);
  out.push_back(kSync1);
  out.push_back(static_cast<std::uint8_t>(kPayloadHeaderBytes + msg.detail.size()));
  put_be(out, msg.seq, 2);
  put_be(out, static_cast<std::uint64_t>(msg.at), 4);
  out.push_back(static_cast<std::uint8_t>(msg.code));
  out.insert(out.end(), msg.detail.begin(), msg.detail.end());
  out.push_back(crc8(std::span(out).subspan(2)));
  return out;
}

std::string_view to_string(FrameError err) {
  switch (err) {
    case FrameError::BAD_SYNC: return "BAD_SYNC";
    case FrameError::BAD_LENGTH: return "BAD_LENGTH";
    case FrameError::BAD_CRC: return "BAD_CRC";
    case FrameError::BAD_PAYLOAD: return "BAD_PAYLOAD";
  }
  return "?";
}

DecodeResult decode_frame(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != kSync0 || bytes[1] != kSync1) {
    return FrameError::BAD_SYNC;
  }
  if (bytes.size() < 3) return FrameError::BAD_LENGTH;
  const std::size_t len = bytes[2];
  if (len < kPayloadHeaderBytes || len > kPayloadHeaderBytes + kMaxDetailBytes ||
      bytes.size() != kFrameOverheadBytes + len) {
    return FrameError::BAD_LENGTH;
  }
  if (crc8(bytes.subspan(2, len + 1)) != bytes[3 + len]) {
    return FrameError::BAD_CRC;
  }
  const auto payload = bytes.subspan(3, len);
  const auto code = payload[6];
  if (code >= kAlertCodeCount) return FrameError::BAD_PAYLOAD;
  std::string detail(payload.begin() + kPayloadHeaderBytes, payload.end());
  if (!is_valid_utf8(detail)) return FrameError::BAD_PAYLOAD;

  AlertMessage msg;
  msg.seq = static_cast<std::uint16_t>(get_be(payload, 0, 2));
  msg.at = static_cast<TimeMs>(get_be(payload, 2, 4));
  msg.code = static_cast<AlertCode>(code);
  msg.detail = std::move(detail);
  return msg;
}

void ChannelConfig::validate() const {
  if (!(data_rate > 0.0 && data_rate <= kMaxDataRateBytesPerSec)) {
    throw ConfigError("data_rate must be in (0, 262500] bytes/s");
  }
  if (!(propagation_delay_ms >= 0.0) || !std::isfinite(propagation_delay_ms)) {
    throw ConfigError("propagation_delay must be >= 0");
  }
  if (!(bit_error_rate >= 0.0 && bit_error_rate <= 1.0)) {
    throw ConfigError("bit_error_rate must be in [0,1]");
  }
  if (max_retries < 0) {
    throw ConfigError("max_retries must be >= 0");
  }
}

std::string_view to_string(TranscriptDir dir) {
  switch (dir) {
    case TranscriptDir::SEND: return "send";
    case TranscriptDir::DELIVER: return "deliver";
    case TranscriptDir::CORRUPT: return "corrupt";
  }
  return "?";
}

std::pair<DeliveryOutcome, Rng> transmit(std::span<const std::uint8_t> frame, const ChannelConfig& config,
                                         double now_ms, Rng rng) {
  const auto clean = decode_frame(frame);
  const std::uint16_t seq = std::holds_alternative<AlertMessage>(clean) ? std::get<AlertMessage>(clean).seq : 0;
  const double serialize_ms = static_cast<double>(frame.size()) * 1000.0 / config.data_rate;

  DeliveryOutcome outcome;
  double start = now_ms;
  Bytes received(frame.begin(), frame.end());
  for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
    const double arrival = start + serialize_ms + config.propagation_delay_ms;
    outcome.events.push_back({start, TranscriptDir::SEND, seq, frame.size()});

    bool altered = false;
    std::copy(frame.begin(), frame.end(), received.begin());
    for (auto& byte : received) {
      for (int bit = 0; bit < 8; ++bit) {
        if (rng.bernoulli(config.bit_error_rate)) {
          byte ^= static_cast<std::uint8_t>(1u << bit);
          altered = true;
        }
      }
    }

    outcome.at_ms = arrival;
    outcome.retries = attempt;
    if (altered) ++outcome.corrupted_attempts;

    // An altered frame is caught only if it fails to decode.
    const bool accepted = !altered || std::holds_alternative<AlertMessage>(decode_frame(received));
    if (accepted) {
      outcome.delivered = true;
      outcome.undetected_corruption = altered;
      outcome.events.push_back({arrival, TranscriptDir::DELIVER, seq, frame.size()});
      outcome.link_free_at_ms = arrival + config.propagation_delay_ms;
      break;
    }
    outcome.events.push_back({arrival, TranscriptDir::CORRUPT, seq, frame.size()});
    start = arrival + config.propagation_delay_ms;
    outcome.link_free_at_ms = start;
  }
  return {std::move(outcome), rng};
}

ChannelMetrics compute_metrics(std::span<const TranscriptEvent> transcript) {
  ChannelMetrics m;
  if (transcript.empty()) {
    m.measured_data_rate.reset();
    return m;
  }

  struct Open {
    double first_send_ms;
    std::size_t corrupt;
  };
  std::unordered_map<std::uint16_t, Open> open;
  double prev = transcript.front().t_ms;

  for (const auto& ev : transcript) {
    if (ev.t_ms < prev) {
      throw DomainError("transcript is not time-ordered");
    }
    prev = ev.t_ms;
    switch (ev.dir) {
      case TranscriptDir::SEND:
        if (open.find(ev.seq) == open.end()) {
          open.emplace(ev.seq, Open{ev.t_ms, 0});
          ++m.messages_sent;
        }
        break;
      case TranscriptDir::CORRUPT: {
        ++m.errors_total;
        auto it = open.find(ev.seq);
        if (it != open.end()) ++it->second.corrupt;
        break;
      }
      case TranscriptDir::DELIVER: {
        m.bytes_delivered += ev.bytes;
        ++m.messages_delivered;
        auto it = open.find(ev.seq);
        if (it != open.end()) {
          m.delays_ms.push_back(ev.t_ms - it->second.first_send_ms);
          if (it->second.corrupt > 0) ++m.errors_corrected;
          open.erase(it);
        }
        break;
      }
    }
  }

  m.messages_lost = m.messages_sent >= m.messages_delivered ? m.messages_sent - m.messages_delivered : 0;
  m.elapsed_s = (transcript.back().t_ms - transcript.front().t_ms) / 1000.0;
  if (m.elapsed_s > 0.0) {
    m.measured_data_rate = static_cast<double>(m.bytes_delivered) / m.elapsed_s;
  }
  if (m.errors_total > 0) {
    m.ec_ratio = static_cast<double>(m.errors_corrected) / static_cast<double>(m.errors_total);
    m.ec_ratio_vacuous = false;
  }
  return m;
}

std::optional<double> percentile(std::vector<double> values, double q) {
  if (values.empty()) return std::nullopt;
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(values.size())));
  return values[std::clamp<std::size_t>(rank, 1, values.size()) - 1];
}

std::string transcript_to_jsonl(const TranscriptEvent& event) {
  nlohmann::ordered_json j;
  j["t_ms"] = event.t_ms;
  j["dir"] = to_string(event.dir);
  j["seq"] = event.seq;
  j["bytes"] = event.bytes;
  return j.dump();
}

TranscriptReadResult read_transcript_jsonl(std::istream& in) {
  std::vector<TranscriptEvent> events;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      return TranscriptParseError{line_no, "not a JSON object"};
    }
    TranscriptEvent ev;
    const auto t = j.find("t_ms");
    const auto dir = j.find("dir");
    const auto seq = j.find("seq");
    const auto bytes = j.find("bytes");
    if (t == j.end() || !t->is_number()) return TranscriptParseError{line_no, "missing numeric t_ms"};
    if (dir == j.end() || !dir->is_string()) return TranscriptParseError{line_no, "missing dir"};
    if (seq == j.end() || !seq->is_number_unsigned() || seq->get<std::uint64_t>() > 0xFFFF) {
      return TranscriptParseError{line_no, "seq must be an integer in [0,65535]"};
    }
    if (bytes == j.end() || !bytes->is_number_unsigned()) {
      return TranscriptParseError{line_no, "bytes must be a non-negative integer"};
    }
    const auto dir_name = dir->get<std::string>();
    if (dir_name == "send") {
      ev.dir = TranscriptDir::SEND;
    } else if (dir_name == "deliver") {
      ev.dir = TranscriptDir::DELIVER;
    } else if (dir_name == "corrupt") {
      ev.dir = TranscriptDir::CORRUPT;
    } else {
      return TranscriptParseError{line_no, "unknown dir \"" + dir_name + "\""};
    }
    ev.t_ms = t->get<double>();
    ev.seq = static_cast<std::uint16_t>(seq->get<std::uint64_t>());
    ev.bytes = bytes->get<std::size_t>();
    events.push_back(ev);
  }
  return events;
}

}  // namespace vigil
