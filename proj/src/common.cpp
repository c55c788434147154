#include "dpsw/common.hpp"

#include <cstdlib>
#include <iostream>
#include <mutex>

namespace dpsw {

int log_level() {
  static const int level = [] {
    const char* env = std::getenv("DPSW_LOG");
    if (env == nullptr) return 0;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || v < 0) return 0;
    return static_cast<int>(v > 2 ? 2 : v);
  }();
  return level;
}

namespace {
std::mutex log_mutex;

void emit(const std::string& msg) {
  std::lock_guard<std::mutex> lock(log_mutex);
  std::cerr << msg << "\n";
}
}  // namespace

void log_info(const std::string& msg) {
  if (log_level() >= 1) emit(msg);
}

void log_debug(const std::string& msg) {
  if (log_level() >= 2) emit(msg);
}

}  // namespace dpsw
