#pragma once

#include <string_view>

namespace vigil {

enum class LogLevel { OFF, INFO, DEBUG };

/// Level from VIGIL_LOG (off|info|debug), read once; defaults to off.
LogLevel log_level();
void set_log_level(LogLevel level);

void log_info(std::string_view message);
void log_debug(std::string_view message);

}  // namespace vigil
