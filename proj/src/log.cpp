#include "vigil/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

namespace vigil {

namespace {

LogLevel from_env() {
  const char* value = std::getenv("VIGIL_LOG");
  if (!value) return LogLevel::OFF;
  const std::string level(value);
  if (level == "debug") return LogLevel::DEBUG;
  if (level == "info") return LogLevel::INFO;
  return LogLevel::OFF;
}

std::atomic<LogLevel>& level_ref() {
  static std::atomic<LogLevel> level{from_env()};
  return level;
}

void write(std::string_view tag, std::string_view message) {
  static std::mutex mutex;
  std::lock_guard lock(mutex);
  std::clog << "[vigil " << tag << "] " << message << '\n';
}

}  // namespace

LogLevel log_level() { return level_ref().load(); }
void set_log_level(LogLevel level) { level_ref().store(level); }

void log_info(std::string_view message) {
  if (log_level() >= LogLevel::INFO) write("info", message);
}

void log_debug(std::string_view message) {
  if (log_level() >= LogLevel::DEBUG) write("debug", message);
}

}  // namespace vigil
