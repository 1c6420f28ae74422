#pragma once

#include <atomic>
#include <iostream>
#include <string_view>

namespace qeforge::log {

inline std::atomic<bool>& quiet_flag() {
  static std::atomic<bool> quiet{false};
  return quiet;
}

inline void set_quiet(bool quiet) { quiet_flag() = quiet; }

inline void notice(std::string_view message) {
  if (!quiet_flag()) std::clog << "[qeforge] " << message << '\n';
}

}  // namespace qeforge::log
