#pragma once

#include <functional>
#include <string>

namespace grdsr {

enum class LogLevel { Info, Warning };

using LogSink = std::function<void(LogLevel, const std::string&)>;

// Replaces the process-wide sink (default: stderr). Returns the previous sink.
LogSink set_log_sink(LogSink sink);
void log_message(LogLevel level, const std::string& message);
inline void log_warning(const std::string& message) { log_message(LogLevel::Warning, message); }
inline void log_info(const std::string& message) { log_message(LogLevel::Info, message); }

} // namespace grdsr
