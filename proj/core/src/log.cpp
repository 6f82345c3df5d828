#include "ov3r/log.hpp"

#include <iostream>
#include <mutex>

namespace ov3r::log {

namespace {
std::mutex sink_mutex;
Sink& current() {
  static Sink sink = [](const std::string& m) { std::cerr << "warning: " << m << '\n'; };
  return sink;
}
}  // namespace

Sink set_warning_sink(Sink sink) {
  std::lock_guard lock(sink_mutex);
  Sink previous = std::move(current());
  current() = std::move(sink);
  return previous;
}

void warn(const std::string& message) {
  std::lock_guard lock(sink_mutex);
  if (current()) current()(message);
}

}  // namespace ov3r::log
