#include "regimeclust/log.hpp"

#include <cstdlib>
#include <iostream>

namespace regimeclust {

namespace {

LogLevel initial_level() {
  const char* env = std::getenv("REGIMECLUST_LOG");
  if (env == nullptr) return LogLevel::Info;
  const std::string value(env);
  if (value == "error") return LogLevel::Error;
  if (value == "debug") return LogLevel::Debug;
  return LogLevel::Info;
}

LogLevel& level_ref() {
  static LogLevel level = initial_level();
  return level;
}

}  // namespace

LogLevel log_level() { return level_ref(); }

void set_log_level(LogLevel level) { level_ref() = level; }

void log_error(const std::string& message) {
  std::cerr << "[regimeclust] error: " << message << '\n';
}

void log_info(const std::string& message) {
  if (log_level() >= LogLevel::Info) {
    std::cerr << "[regimeclust] " << message << '\n';
  }
}

void log_debug(const std::string& message) {
  if (log_level() >= LogLevel::Debug) {
    std::cerr << "[regimeclust] debug: " << message << '\n';
  }
}

}  // namespace regimeclust
