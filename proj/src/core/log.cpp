#include "transfusor/log.hpp"

#include <iostream>
#include <mutex>

namespace transfusor {
namespace {

std::mutex g_mutex;
LogLevel g_level = LogLevel::kInfo;
LogSink g_sink;

const char* prefix(LogLevel level) {
  switch (level) {
    case LogLevel::kDebug: return "debug: ";
    case LogLevel::kInfo: return "";
    case LogLevel::kWarning: return "warning: ";
    case LogLevel::kError: return "error: ";
    case LogLevel::kSilent: break;
  }
  return "";
}

}  // namespace

void set_log_level(LogLevel level) {
  std::lock_guard lock(g_mutex);
  g_level = level;
}

LogLevel log_level() {
  std::lock_guard lock(g_mutex);
  return g_level;
}

LogSink set_log_sink(LogSink sink) {
  std::lock_guard lock(g_mutex);
  std::swap(g_sink, sink);
  return sink;
}

void log_message(LogLevel level, std::string_view message) {
  std::lock_guard lock(g_mutex);
  if (level < g_level || level == LogLevel::kSilent) return;
  if (g_sink) {
    g_sink(level, message);
    return;
  }
  std::cerr << prefix(level) << message << '\n';
}

}  // namespace transfusor
