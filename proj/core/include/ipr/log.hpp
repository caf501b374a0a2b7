#pragma once

#include <cstdarg>

namespace ipr::log {

enum class Level : int { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

// Threshold comes from the INTROSPECT_PR_LOG environment variable
// (error|warn|info|debug), read once. Defaults to warn.
Level threshold();
void set_threshold(Level level);

void write(Level level, const char* fmt, ...) __attribute__((format(printf, 2, 3)));

#define IPR_LOG_ERROR(...) ::ipr::log::write(::ipr::log::Level::kError, __VA_ARGS__)
#define IPR_LOG_WARN(...) ::ipr::log::write(::ipr::log::Level::kWarn, __VA_ARGS__)
#define IPR_LOG_INFO(...) ::ipr::log::write(::ipr::log::Level::kInfo, __VA_ARGS__)
#define IPR_LOG_DEBUG(...) ::ipr::log::write(::ipr::log::Level::kDebug, __VA_ARGS__)

}  // namespace ipr::log
