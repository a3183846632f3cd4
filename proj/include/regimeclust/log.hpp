#pragma once

#include <string>

namespace regimeclust {

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

// Current stderr verbosity; initialised once from REGIMECLUST_LOG
// (error|info|debug, default info).
LogLevel log_level();
void set_log_level(LogLevel level);

void log_error(const std::string& message);
void log_info(const std::string& message);
void log_debug(const std::string& message);

}  // namespace regimeclust
