#pragma once

#include <cstdio>
#include <string>

namespace dive {

/// "%.2f"
inline std::string fixed2(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

}  // namespace dive
