#pragma once

#include <cstdio>
#include <string>

namespace simcal::detail {

// Shortest-exact formatting for CSV payloads; round-trips any double.
inline std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// 12 significant digits for the plain-text matrix panels.
inline std::string g12(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace simcal::detail
