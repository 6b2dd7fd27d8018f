#include "psesim/resource.hpp"

#include <algorithm>
#include <cmath>

namespace psesim::resource {

Timeline::Timeline(double initial_value, double origin)
    : initial_(initial_value), origin_(origin) {}

void Timeline::add_rate(double from, double to, double rate) {
  if (to <= from || rate == 0.0) return;
  from = std::max(from, origin_);
  if (to <= from) return;
  nodes_[from].rate_delta += rate;
  nodes_[to].rate_delta -= rate;
}

void Timeline::add_step(double at, double delta) {
  if (delta == 0.0) return;
  nodes_[std::max(at, origin_)].step += delta;
}

void Timeline::set_at(double at, double value) {
  nodes_[std::max(at, origin_)].set = value;
}

double Timeline::value_at(double t) const {
  double v = initial_;
  double rate = 0.0;
  double prev = origin_;
  for (const auto& [bt, node] : nodes_) {
    if (bt > t) break;
    v += rate * (bt - prev);
    v += node.step;
    if (node.set) v = *node.set;
    rate += node.rate_delta;
    prev = bt;
  }
  if (t > prev) v += rate * (t - prev);
  return v;
}

double Timeline::left_limit(double t) const {
  double v = initial_;
  double rate = 0.0;
  double prev = origin_;
  for (const auto& [bt, node] : nodes_) {
    if (bt >= t) break;
    v += rate * (bt - prev);
    v += node.step;
    if (node.set) v = *node.set;
    rate += node.rate_delta;
    prev = bt;
  }
  if (t > prev) v += rate * (t - prev);
  return v;
}

double Timeline::min_over(double a, double b) const {
  double m = std::min(value_at(a), value_at(b));
  for (const auto& [bt, node] : nodes_) {
    (void)node;
    if (bt <= a || bt > b) continue;
    m = std::min({m, left_limit(bt), value_at(bt)});
  }
  return m;
}

double Timeline::max_over(double a, double b) const {
  double m = std::max(value_at(a), value_at(b));
  for (const auto& [bt, node] : nodes_) {
    (void)node;
    if (bt <= a || bt > b) continue;
    m = std::max({m, left_limit(bt), value_at(bt)});
  }
  return m;
}

std::optional<double> Timeline::first_violation(double a, double b, double lo,
                                                double hi) const {
  if (b < a) return std::nullopt;
  double v = value_at(a);
  if (v < lo || v > hi) return a;
  double rate = 0.0;
  for (const auto& [bt, node] : nodes_) {
    (void)node;
    if (bt <= a) rate += node.rate_delta;
  }
  double cur = a;
  auto it = nodes_.upper_bound(a);
  auto check_piece = [&](double to) -> std::optional<double> {
    if (to <= cur || rate == 0.0) return std::nullopt;
    double end_v = v + rate * (to - cur);
    if (rate > 0 && end_v > hi) return cur + (hi - v) / rate;
    if (rate < 0 && end_v < lo) return cur + (lo - v) / rate;
    return std::nullopt;
  };
  while (it != nodes_.end() && it->first <= b) {
    if (auto x = check_piece(it->first)) return x;
    v = value_at(it->first);
    rate += it->second.rate_delta;
    if (it->second.set) {
      // recompute slope from scratch is unnecessary: set only affects value
    }
    cur = it->first;
    if (v < lo || v > hi) return cur;
    ++it;
  }
  if (auto x = check_piece(b)) return x;
  return std::nullopt;
}

std::vector<double> Timeline::change_points(double a, double b, double lo,
                                            double hi) const {
  std::vector<double> out;
  double v = value_at(a);
  double rate = 0.0;
  for (const auto& [bt, node] : nodes_)
    if (bt <= a) rate += node.rate_delta;
  double cur = a;
  auto emit_crossings = [&](double to) {
    if (to <= cur || rate == 0.0) return;
    for (double bound : {lo, hi}) {
      if (!std::isfinite(bound)) continue;
      double t = cur + (bound - v) / rate;
      if (t > cur && t <= to && t <= b) out.push_back(t);
    }
  };
  auto it = nodes_.upper_bound(a);
  while (it != nodes_.end() && it->first <= b) {
    emit_crossings(it->first);
    out.push_back(it->first);
    v = value_at(it->first);
    rate += it->second.rate_delta;
    cur = it->first;
    ++it;
  }
  emit_crossings(b);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<double> Timeline::breakpoints() const {
  std::vector<double> out;
  out.reserve(nodes_.size());
  for (const auto& [bt, node] : nodes_) {
    (void)node;
    out.push_back(bt);
  }
  return out;
}

int sun_bucket(double sun_deg) {
  double clamped = std::clamp(sun_deg, 20.0, 90.0);
  int idx = int((clamped - 20.0) / 10.0);
  return std::clamp(idx, 0, 7);
}

double soc_rate(const PowerModel& pm, Mode mode, double sun_deg) {
  int b = sun_bucket(sun_deg);
  double p_mode = pm.mode_power_w.at(mode);
  double heater_net = std::max(0.0, pm.heater_w[b] - pm.heat_reuse * p_mode);
  double net_w = pm.solar_w[b] - p_mode - heater_net;
  return 100.0 * net_w / (pm.capacity_wh * 3600.0);
}

double temp_rate(const PowerModel& pm, Mode mode, double sun_deg) {
  return pm.temp_per_min.at(mode)[sun_bucket(sun_deg)] / 60.0;
}

Timeline project_timeline(double initial_value, double origin, double horizon,
                          double baseline_rate,
                          const std::vector<RateContribution>& tasks) {
  Timeline tl(initial_value, origin);
  tl.add_rate(origin, horizon, baseline_rate);
  for (const auto& c : tasks) tl.add_rate(c.start, c.end, c.rate);
  return tl;
}

std::optional<double> check_range(const Timeline& tl, double from, double to,
                                  double lower, double upper) {
  return tl.first_violation(from, to, lower, upper);
}

}  // namespace psesim::resource
