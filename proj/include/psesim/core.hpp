#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>

namespace psesim {

// Simulation time in seconds from scenario start. The scheduler works on a
// 1-second grid; the event queue is continuous.
using SimTime = double;

using AgentId = std::string;

// Instance ids look like "template#index@epoch" so that traces stay
// unambiguous across leader generations.
using TaskId = std::string;

enum class AgentRole { Rover, BaseStation };

// Opaque stand-in for bulky shared state (maps, poses). Only the size is
// modeled, for bandwidth accounting in the trace.
struct Blob {
  std::string tag;
  std::size_t size_bytes = 0;
  bool operator==(const Blob&) const = default;
};

using StateValue = std::variant<double, bool, Blob>;

inline bool value_as_flag(const StateValue& v, bool fallback = false) {
  if (const bool* b = std::get_if<bool>(&v)) return *b;
  if (const double* d = std::get_if<double>(&v)) return *d != 0.0;
  return fallback;
}

inline std::optional<double> value_as_number(const StateValue& v) {
  if (const double* d = std::get_if<double>(&v)) return *d;
  if (const bool* b = std::get_if<bool>(&v)) return *b ? 1.0 : 0.0;
  return std::nullopt;
}

inline std::size_t value_wire_size(const StateValue& v) {
  if (std::holds_alternative<bool>(v)) return 1;
  if (std::holds_alternative<double>(v)) return 8;
  return std::get<Blob>(v).size_bytes;
}

std::string format_time(SimTime t);

}  // namespace psesim
