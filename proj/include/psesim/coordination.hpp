// Leader-side evaluation of multi-agent constraints. Violations turn into
// single-task-id abort messages; nothing else ever crosses the wire here.
#pragma once

#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "psesim/messages.hpp"
#include "psesim/scheduler.hpp"
#include "psesim/tasknet.hpp"

namespace psesim::coord {

enum class WatchPhase { PreCheckPending, Maintaining, Closed };

const char* watch_phase_name(WatchPhase p);

struct MultiAgentWatch {
  TaskId task;
  AgentId executor;  // where an abort for this task goes
  // Index into the template's constraint list (templates outlive watches).
  const tasknet::TaskTemplate* tpl = nullptr;
  int constraint = 0;
  SimTime start = 0.0;  // effective task start at registration
  SimTime end = 0.0;
  WatchPhase phase = WatchPhase::PreCheckPending;
  SimTime grace_deadline = 0.0;  // pre-check watches only

  const tasknet::Constraint& cref() const {
    return tpl->constraints[size_t(constraint)];
  }
};

struct AbortOrder {
  AgentId to;
  msg::AbortTask m;
  std::string why;
};

struct CoordConfig {
  // How long after task start the one-time pre-check may stay unsatisfied,
  // aligned with the commit window.
  double grace = 5.0;
};

// The leader's possibly-stale view of team state, plus the plan's current
// row status. Missing reads count as constraint violations.
struct StateReader {
  std::function<std::optional<double>(const tasknet::VarRef&)> read_number;
  std::function<std::optional<bool>(const tasknet::VarRef&)> read_flag;
};

// Watch registry for one leadership epoch. Rebuilt from the plan after every
// (re)plan; evaluated once per planner tick. Passive: the caller decides
// whether it is the active leader before evaluating.
class Watcher {
 public:
  Watcher(const tasknet::TaskNetwork& net, CoordConfig cfg);

  // One watch per (committed-or-executing task, multi-agent constraint).
  // Precedence-scope constraints never yield watches. Phases survive
  // re-registration: a watch that already passed its pre-check does not run
  // it again after a replan.
  void register_watches(const sched::Plan& plan, const sched::PlanContext& ctx);

  // Pre-check watches resolve within [start, grace-deadline]: pass closes
  // them, failure at the deadline aborts the task. Maintenance watches fire
  // on any violation while the task is in [start, end]. One abort per task;
  // every watch on an aborted task closes.
  std::vector<AbortOrder> evaluate(const StateReader& view, SimTime now);

  const std::vector<MultiAgentWatch>& watches() const { return watches_; }
  void clear();

 private:
  bool holds(const tasknet::Constraint& c, const AgentId& executor,
             const StateReader& view) const;
  void close_all(const TaskId& task);

  const tasknet::TaskNetwork& net_;
  CoordConfig cfg_;
  std::vector<MultiAgentWatch> watches_;
  std::set<TaskId> aborted_;
};

}  // namespace psesim::coord
