#pragma once

#include <cstddef>
#include <string>

namespace up2d {

enum class LogLevel { Debug = 0, Info = 1, Warn = 2, Silent = 3 };

void set_log_level(LogLevel level);
LogLevel log_level();

void log_info(const std::string& msg);
void log_warn(const std::string& msg);

/// Warnings emitted since process start, including suppressed ones.
std::size_t warning_count();

} // namespace up2d
