#include "log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string_view>

namespace slackdyn::cli {

namespace {

std::atomic<LogLevel> g_level{LogLevel::Info};
std::mutex g_mutex;

void emit(LogLevel level, std::string_view tag, const std::string& msg)
{
    if (level > g_level.load()) {
        return;
    }
    std::lock_guard lock(g_mutex);
    std::cerr << "[" << tag << "] " << msg << '\n';
}

}  // namespace

LogLevel level_from_env()
{
    const char* env = std::getenv("SLACKDYN_LOG");
    if (env == nullptr) {
        return LogLevel::Info;
    }
    const std::string_view v(env);
    if (v == "error") {
        return LogLevel::Error;
    }
    if (v == "debug") {
        return LogLevel::Debug;
    }
    return LogLevel::Info;
}

void set_log_level(LogLevel level) { g_level = level; }
LogLevel log_level() { return g_level.load(); }

void log_error(const std::string& msg) { emit(LogLevel::Error, "error", msg); }
void log_info(const std::string& msg) { emit(LogLevel::Info, "info", msg); }
void log_debug(const std::string& msg) { emit(LogLevel::Debug, "debug", msg); }

}  // namespace slackdyn::cli
