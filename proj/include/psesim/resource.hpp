// Piecewise-linear resource timelines and the rover power/thermal model.
#pragma once

#include <array>
#include <map>
#include <optional>
#include <vector>

#include "psesim/tasknet.hpp"

namespace psesim::resource {

using tasknet::Mode;

// Value trajectory over a planning window: linear rate pieces plus
// instantaneous steps/sets at breakpoints. Evaluation is right-continuous:
// value_at(t) includes any step applied exactly at t.
class Timeline {
 public:
  Timeline() = default;
  Timeline(double initial_value, double origin);

  double origin() const { return origin_; }
  double initial() const { return initial_; }

  void add_rate(double from, double to, double rate);
  void add_step(double at, double delta);
  void set_at(double at, double value);  // absolute write (flag semantics)

  double value_at(double t) const;
  double left_limit(double t) const;

  // Exact extrema over [a, b] (segment endpoints + left limits).
  double min_over(double a, double b) const;
  double max_over(double a, double b) const;

  // Earliest t in [a, b] with value < lo or > hi; exact crossing solve.
  std::optional<double> first_violation(double a, double b, double lo,
                                        double hi) const;

  // Times in (a, b] where in-bounds(lo, hi) status can change: breakpoints
  // plus linear crossings of either bound. Sorted, deduplicated.
  std::vector<double> change_points(double a, double b, double lo,
                                    double hi) const;

  std::vector<double> breakpoints() const;

 private:
  struct Node {
    double step = 0.0;       // additive jump applied at the breakpoint
    double rate_delta = 0.0; // slope change from the breakpoint onward
    std::optional<double> set;  // absolute write, applied after step
  };
  double initial_ = 0.0;
  double origin_ = 0.0;
  std::map<double, Node> nodes_;
};

// Per-mode electrical and thermal tables, sun-angle bucketed. Sun angles
// cover 20..90 degrees in 10-degree steps (8 buckets); angles outside the
// range clamp to the nearest bucket.
struct PowerModel {
  double capacity_wh = 40.0;
  double heat_reuse = 0.8;  // fraction of mode power offsetting heater demand
  std::map<Mode, double> mode_power_w = {
      {Mode::Idle, 4.0},     {Mode::Sync, 6.0},    {Mode::Planning, 9.0},
      {Mode::Driving, 16.0}, {Mode::LowPower, 0.5},
  };
  // Solar input and heater demand per bucket (20, 30, ... 90 degrees).
  std::array<double, 8> solar_w = {4.0, 6.0, 8.0, 10.0, 11.5, 12.5, 13.0, 13.5};
  std::array<double, 8> heater_w = {9.0, 8.0, 7.0, 6.0, 5.0, 4.0, 3.5, 3.0};
  // CPU temperature drift in deg/minute per bucket, by mode.
  std::map<Mode, std::array<double, 8>> temp_per_min = {
      {Mode::Idle, {-1.2, -1.0, -0.8, -0.6, -0.5, -0.4, -0.3, -0.2}},
      {Mode::Sync, {-0.6, -0.4, -0.2, 0.0, 0.1, 0.2, 0.3, 0.4}},
      {Mode::Planning, {0.2, 0.4, 0.6, 0.8, 0.9, 1.0, 1.1, 1.2}},
      {Mode::Driving, {1.0, 1.3, 1.6, 1.9, 2.1, 2.3, 2.4, 2.5}},
      {Mode::LowPower, {-2.0, -1.8, -1.6, -1.4, -1.3, -1.2, -1.1, -1.0}},
  };
};

int sun_bucket(double sun_deg);

// Net battery drift in %SOC per second for an agent running `mode` under
// `sun_deg`. Heater demand is offset by reusable mode heat before drawing
// from the battery.
double soc_rate(const PowerModel& pm, Mode mode, double sun_deg);

// CPU temperature drift in deg/second (table-driven, independent of the
// current temperature).
double temp_rate(const PowerModel& pm, Mode mode, double sun_deg);

// A scheduled task's contribution to an agent's timelines: incremental
// rates relative to idle, active over [start, end).
struct RateContribution {
  double start = 0;
  double end = 0;
  double rate = 0;
};

// Build a projection: initial value, idle baseline over [origin, horizon),
// plus per-task incremental contributions.
Timeline project_timeline(double initial_value, double origin, double horizon,
                          double baseline_rate,
                          const std::vector<RateContribution>& tasks);

// Range-constraint check against a projection over [from, to]; returns the
// earliest violation time if any.
std::optional<double> check_range(const Timeline& tl, double from, double to,
                                  double lower, double upper);

}  // namespace psesim::resource
