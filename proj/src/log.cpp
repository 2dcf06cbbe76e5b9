#include "siamreid/log.hpp"

#include <iostream>
#include <mutex>

namespace siamreid {
namespace {

std::ostream* g_stream = &std::clog;
std::mutex g_mutex;

void emit(std::string_view level, std::string_view message) {
  std::lock_guard lock(g_mutex);
  if (g_stream) *g_stream << "[" << level << "] " << message << '\n';
}

}  // namespace

void set_log_stream(std::ostream* stream) noexcept {
  std::lock_guard lock(g_mutex);
  g_stream = stream;
}

void log_warning(std::string_view message) { emit("warn", message); }
void log_info(std::string_view message) { emit("info", message); }

}  // namespace siamreid
