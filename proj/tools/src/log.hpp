#pragma once

#include <string>

namespace slackdyn::cli {

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

/// Reads SLACKDYN_LOG (error, info, debug); unset or unknown means info.
LogLevel level_from_env();
void set_log_level(LogLevel level);
LogLevel log_level();

void log_error(const std::string& msg);
void log_info(const std::string& msg);
void log_debug(const std::string& msg);

}  // namespace slackdyn::cli
