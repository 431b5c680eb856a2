#include "grdsr/log.hpp"

#include <iostream>
#include <mutex>

namespace grdsr {

namespace {

std::mutex& sink_mutex() {
    static std::mutex m;
    return m;
}

LogSink& sink() {
    static LogSink s = [](LogLevel level, const std::string& msg) {
        std::cerr << (level == LogLevel::Warning ? "warning: " : "") << msg << '\n';
    };
    return s;
}

} // namespace

LogSink set_log_sink(LogSink s) {
    std::lock_guard lock(sink_mutex());
    LogSink prev = std::move(sink());
    sink() = std::move(s);
    return prev;
}

void log_message(LogLevel level, const std::string& message) {
    std::lock_guard lock(sink_mutex());
    if (sink()) sink()(level, message);
}

} // namespace grdsr
