#pragma once

#include <functional>
#include <string>

namespace stepattn {

enum class LogLevel { kInfo, kWarning };

using LogSink = std::function<void(LogLevel, const std::string&)>;

/// Replaces the process-wide sink (default: stderr). Returns the previous sink.
LogSink set_log_sink(LogSink sink);
void log_info(const std::string& msg);
void log_warning(const std::string& msg);

}  // namespace stepattn
