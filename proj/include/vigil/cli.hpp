#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "vigil/alert_channel.hpp"
#include "vigil/controller.hpp"

namespace vigil {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInputError = 2;
inline constexpr int kExitOracleDivergence = 3;

/// Applies one `key=value` override. Keys name ControllerConfig or ChannelConfig
/// fields (`stop_duration=12`, `bit_error_rate=0.001`, ...). Throws ConfigError on
/// an unknown key or unparsable value; range checks happen in validate().
void apply_override(ControllerConfig& controller, ChannelConfig& channel, std::string_view assignment);

/// Entry point behind the `vigil` executable. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vigil
