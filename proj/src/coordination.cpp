#include "psesim/coordination.hpp"

#include <algorithm>

namespace psesim::coord {

namespace {
constexpr double kEps = 1e-9;

using tasknet::Constraint;
using tasknet::ConstraintLocus;
using tasknet::ConstraintScope;
using tasknet::Status;
using tasknet::VarKind;
using tasknet::VarRef;
}  // namespace

const char* watch_phase_name(WatchPhase p) {
  switch (p) {
    case WatchPhase::PreCheckPending: return "pre-check-pending";
    case WatchPhase::Maintaining: return "maintaining";
    case WatchPhase::Closed: return "closed";
  }
  return "?";
}

Watcher::Watcher(const tasknet::TaskNetwork& net, CoordConfig cfg)
    : net_(net), cfg_(cfg) {}

void Watcher::clear() {
  watches_.clear();
  aborted_.clear();
}

void Watcher::register_watches(const sched::Plan& plan,
                               const sched::PlanContext& ctx) {
  std::vector<MultiAgentWatch> fresh;
  for (const auto& row : plan.tasks) {
    if (row.status != Status::Committed && row.status != Status::Executing)
      continue;
    const tasknet::TaskTemplate* tpl = net_.find_task(row.template_id);
    if (!tpl) continue;
    double start = row.actual_start.value_or(row.scheduled_start);
    double end = row.actual_start
                     ? *row.actual_start + row.scheduled_duration
                     : row.scheduled_end;
    for (size_t i = 0; i < tpl->constraints.size(); ++i) {
      const Constraint& c = tpl->constraints[i];
      if (c.locus != ConstraintLocus::MultiAgent) continue;
      if (c.scope == ConstraintScope::Precedence) continue;
      MultiAgentWatch w;
      w.task = row.id;
      w.executor = sched::resolve_executor(tpl->executor, ctx);
      w.tpl = tpl;
      w.constraint = int(i);
      w.start = start;
      w.end = end;
      w.grace_deadline = start + cfg_.grace;
      w.phase = aborted_.count(row.id) ? WatchPhase::Closed
                                       : WatchPhase::PreCheckPending;
      // A watch that already passed its pre-check stays armed across
      // replans.
      for (const auto& old : watches_) {
        if (old.task == w.task && old.constraint == w.constraint &&
            old.tpl == w.tpl) {
          w.phase = old.phase;
          break;
        }
      }
      fresh.push_back(std::move(w));
    }
  }
  watches_ = std::move(fresh);
}

bool Watcher::holds(const Constraint& c, const AgentId& executor,
                    const StateReader& view) const {
  VarRef var = sched::resolve_var(c.variable, executor);
  const tasknet::StateVariable* sv = net_.find_variable(var);
  if (sv && sv->kind == VarKind::Flag) {
    std::optional<bool> v =
        view.read_flag ? view.read_flag(var) : std::nullopt;
    if (!v) return false;
    return c.allowed.count(*v) > 0;
  }
  std::optional<double> v =
      view.read_number ? view.read_number(var) : std::nullopt;
  if (!v) return false;
  return *v >= c.lower - kEps && *v <= c.upper + kEps;
}

void Watcher::close_all(const TaskId& task) {
  for (auto& w : watches_)
    if (w.task == task) w.phase = WatchPhase::Closed;
}

std::vector<AbortOrder> Watcher::evaluate(const StateReader& view,
                                          SimTime now) {
  std::vector<AbortOrder> out;
  for (auto& w : watches_) {
    if (w.phase == WatchPhase::Closed) continue;
    if (aborted_.count(w.task)) {
      w.phase = WatchPhase::Closed;
      continue;
    }
    if (now + kEps < w.start) continue;  // not due yet
    bool ok = holds(w.cref(), w.executor, view);
    if (w.phase == WatchPhase::PreCheckPending) {
      if (ok) {
        w.phase = WatchPhase::Maintaining;
      } else if (now + kEps >= w.grace_deadline) {
        out.push_back({w.executor, {w.task},
                       w.cref().str() + " unmet at grace deadline"});
        aborted_.insert(w.task);
        close_all(w.task);
      }
      continue;
    }
    if (!ok) {
      out.push_back({w.executor, {w.task}, w.cref().str() + " violated"});
      aborted_.insert(w.task);
      close_all(w.task);
    }
  }
  return out;
}

}  // namespace psesim::coord
