#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "vigil/common.hpp"

namespace vigil {

enum class AlertCode : std::uint8_t {
  STATUS_EYES_OPEN = 0,
  ALERT_EYES_CLOSED = 1,
  ALERT_DROWSY = 2,
  ALERT_URGENT_SLEEP = 3,
  ALERT_ALCOHOL = 4,
  MOTOR_RAMP = 5,
  MOTOR_STOPPED = 6,
};

inline constexpr std::size_t kAlertCodeCount = 7;
inline constexpr std::size_t kMaxDetailBytes = 64;

std::string_view to_string(AlertCode code);
std::optional<AlertCode> alert_code_from_string(std::string_view name);

/// One message for the driver's phone.
struct AlertMessage {
  std::uint16_t seq = 0;
  TimeMs at = 0;
  AlertCode code = AlertCode::STATUS_EYES_OPEN;
  std::string detail;  // UTF-8, at most kMaxDetailBytes

  friend bool operator==(const AlertMessage&, const AlertMessage&) = default;
};

}  // namespace vigil
