#include "up2d/log.hpp"

#include <atomic>
#include <iostream>

namespace up2d {

namespace {
std::atomic<LogLevel> g_level{LogLevel::Warn};
std::atomic<std::size_t> g_warnings{0};
} // namespace

void set_log_level(LogLevel level) { g_level = level; }
LogLevel log_level() { return g_level; }

void log_info(const std::string& msg) {
    if (g_level.load() <= LogLevel::Info) std::clog << "[info] " << msg << '\n';
}

void log_warn(const std::string& msg) {
    ++g_warnings;
    if (g_level.load() <= LogLevel::Warn) std::clog << "[warn] " << msg << '\n';
}

std::size_t warning_count() { return g_warnings.load(); }

} // namespace up2d
