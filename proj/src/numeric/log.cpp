#include "ascan/log.hpp"

#include <iostream>
#include <mutex>

namespace ascan {

namespace {

std::mutex g_sink_mutex;
WarningSink g_sink;

}  // namespace

WarningSink set_warning_sink(WarningSink sink) {
  std::lock_guard lock(g_sink_mutex);
  std::swap(g_sink, sink);
  return sink;
}

void warn(const std::string& message) {
  WarningSink sink;
  {
    std::lock_guard lock(g_sink_mutex);
    sink = g_sink;
  }
  if (sink)
    sink(message);
  else
    std::cerr << "warning: " << message << '\n';
}

}  // namespace ascan
