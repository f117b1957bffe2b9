#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "vigil/alert_message.hpp"
#include "vigil/rng.hpp"

namespace vigil {

// Frame layout (all multi-byte fields big-endian):
//
//   0xAA 0x55 | len (1) | seq (2) | at_ms (4) | code (1) | detail (len - 7) | crc8 (1)
//
// crc8 is CRC-8 with polynomial 0x07, init 0x00, no reflection, over len + payload.
inline constexpr std::uint8_t kSync0 = 0xAA;
inline constexpr std::uint8_t kSync1 = 0x55;
inline constexpr std::size_t kPayloadHeaderBytes = 7;
inline constexpr std::size_t kFrameOverheadBytes = 4;
inline constexpr std::size_t kMaxFrameBytes = kFrameOverheadBytes + kPayloadHeaderBytes + kMaxDetailBytes;

using Bytes = std::vector<std::uint8_t>;

std::uint8_t crc8(std::span<const std::uint8_t> data);

bool is_valid_utf8(std::string_view text);

class EncodeError : public Error {
 public:
  using Error::Error;
};

/// Throws EncodeError for oversize or non-UTF-8 detail, or a timestamp outside 32 bits.
Bytes encode_frame(const AlertMessage& msg);

enum class FrameError { BAD_SYNC, BAD_LENGTH, BAD_CRC, BAD_PAYLOAD };
std::string_view to_string(FrameError err);

using DecodeResult = std::variant<AlertMessage, FrameError>;

/// Total over arbitrary input: returns the message only if sync, length, CRC and
/// payload fields all validate.
DecodeResult decode_frame(std::span<const std::uint8_t> bytes);

inline constexpr double kMaxDataRateBytesPerSec = 262'500.0;  // 2.1 Mb/s

struct ChannelConfig {
  double data_rate = 960.0;          // bytes per second
  double propagation_delay_ms = 3.0;
  double bit_error_rate = 0.0;
  std::uint64_t seed = 0;
  int max_retries = 3;

  void validate() const;

  friend bool operator==(const ChannelConfig&, const ChannelConfig&) = default;
};

enum class TranscriptDir { SEND, DELIVER, CORRUPT };
std::string_view to_string(TranscriptDir dir);

/// One line of the channel transcript.
struct TranscriptEvent {
  double t_ms = 0.0;
  TranscriptDir dir = TranscriptDir::SEND;
  std::uint16_t seq = 0;
  std::size_t bytes = 0;

  friend bool operator==(const TranscriptEvent&, const TranscriptEvent&) = default;
};

struct DeliveryOutcome {
  bool delivered = false;
  double at_ms = 0.0;        // delivery time, or arrival of the last failed attempt
  int retries = 0;           // attempts after the first
  int corrupted_attempts = 0;
  bool undetected_corruption = false;  // CRC passed on altered bytes
  double link_free_at_ms = 0.0;        // after the final ACK/NAK returns
  std::vector<TranscriptEvent> events;
};

/// Stop-and-wait transmission of one frame starting at `now_ms`.
///
/// Each attempt takes frame_len / data_rate to serialize plus the propagation delay.
/// Every bit is flipped independently with the configured BER; the receiver decodes
/// and NAKs anything that fails. A retransmission starts one propagation delay after
/// the failed arrival. After max_retries retransmissions the frame is lost.
std::pair<DeliveryOutcome, Rng> transmit(std::span<const std::uint8_t> frame, const ChannelConfig& config,
                                         double now_ms, Rng rng);

struct ChannelMetrics {
  std::size_t messages_sent = 0;
  std::size_t messages_delivered = 0;
  std::size_t messages_lost = 0;
  std::size_t bytes_delivered = 0;
  double elapsed_s = 0.0;
  std::optional<double> measured_data_rate;  // bytes/s; empty when elapsed is zero
  std::vector<double> delays_ms;             // deliver - first send, per delivered message
  std::size_t errors_total = 0;
  std::size_t errors_corrected = 0;
  double ec_ratio = 1.0;
  bool ec_ratio_vacuous = true;  // errors_total == 0, ratio defined as 1.0
};

/// Throws DomainError if the transcript is not time-ordered.
ChannelMetrics compute_metrics(std::span<const TranscriptEvent> transcript);

/// Nearest-rank percentile of `values`, q in (0, 1]. Empty input yields nullopt.
std::optional<double> percentile(std::vector<double> values, double q);

std::string transcript_to_jsonl(const TranscriptEvent& event);

struct TranscriptParseError {
  std::size_t line = 0;
  std::string message;
};

using TranscriptReadResult = std::variant<std::vector<TranscriptEvent>, TranscriptParseError>;

/// Blank lines are skipped.
TranscriptReadResult read_transcript_jsonl(std::istream& in);

}  // namespace vigil
