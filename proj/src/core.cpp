#include "psesim/core.hpp"

#include <cstdio>

namespace psesim {

std::string format_time(SimTime t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", t);
  return buf;
}

}  // namespace psesim
