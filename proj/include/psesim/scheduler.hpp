// Strategic planner: greedy priority-order insertion scheduling, the 1 Hz
// plan evaluation loop, and the commit handoff to agent controllers.
#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "psesim/messages.hpp"
#include "psesim/resource.hpp"
#include "psesim/tasknet.hpp"

namespace psesim::sched {

using tasknet::TaskInstance;
using tasknet::TaskNetwork;
using tasknet::VarRef;

// ---------------------------------------------------------------------------
// Inputs

// One planning variable as the planner last saw it. `rate` is the idle
// baseline drift; scheduled tasks layer their incremental rates on top.
struct VarState {
  double value = 0.0;
  double rate = 0.0;
};

// The leader's (possibly stale) view of team state at plan time. The plan
// treats these values as ground truth; execution-time divergence is caught
// by the 1 Hz re-evaluation and by the local controllers.
struct StateSnapshot {
  SimTime at = 0.0;
  std::map<VarRef, VarState> vars;

  double value_or(const VarRef& v, double fallback) const;
  bool flag_or(const VarRef& v, bool fallback) const;
};

struct Window {
  SimTime start = 0.0;        // planning begins here (usually: now)
  SimTime end = 0.0;          // hard horizon (wake-window shutdown)
  SimTime wake_origin = 0.0;  // reference for wake-relative preferred starts
};

// Snapshot pre-filled with every network variable: participation and awake
// flags true, team flags false, continuous values zero with zero drift.
// Callers overwrite what they actually know.
StateSnapshot default_snapshot(const TaskNetwork& net, SimTime at);

// Detail-command hook, dispatched right after a task is given a slot. May
// return a replacement duration (e.g. formation planning sizing subset
// drives); returning nothing keeps the proposed duration.
using DetailHook = std::function<std::optional<double>(
    const tasknet::TaskTemplate&, const TaskInstance&, double duration)>;

struct PlanConfig {
  double grid = 1.0;               // candidate starts snap to this grid
  double commit_window = 5.0;      // starts within this window are handed off
  double min_truncated = 30.0;     // shortest useful truncated drive
  double max_start_delay = 30.0;   // controller delay authority (presumption)
  double report_grace = 5.0;       // slack before a silent commit is presumed dead
  int max_iteration_factor = 2;    // inner loop bound = factor x task count
};

// Who fills the placeholder executors for this plan.
struct PlanContext {
  AgentId leader;
  AgentId survivor;
  int epoch = 0;
  PlanConfig cfg;
  DetailHook detail;  // empty = no-op
};

AgentId resolve_executor(const tasknet::Executor& ex, const PlanContext& ctx);

// Replaces the "@executor" owner placeholder in constraint/impact variable
// references with the concrete executing agent.
VarRef resolve_var(const VarRef& v, const AgentId& executor);

// ---------------------------------------------------------------------------
// Plans

struct Plan {
  int epoch = 0;
  Window window;
  std::vector<TaskInstance> tasks;  // the full pool, post-insertion
  std::map<VarRef, resource::Timeline> timelines;
  std::vector<TaskId> rejected;     // considered this run, found no slot

  TaskInstance* find(const TaskId& id);
  const TaskInstance* find(const TaskId& id) const;
  // Scheduled/committed/executing rows ordered by (start, id).
  std::vector<const TaskInstance*> active() const;
};

// One full run of the insertion scheduler. Scheduled-but-uncommitted rows
// are first reset to unscheduled (and their subtask rows discarded);
// committed and executing rows are pinned. Unscheduled instances are then
// considered in priority order (ties by id) and either placed as close to
// their preferred start as the constraints allow or left unscheduled.
// Decomposition subtasks are created and pinned to the parent's bounds when
// the parent is placed. Stop tasks are never placed directly: drives whose
// maintenance constraints would fail mid-task are shortened and the paired
// stop task is placed at the truncation point.
Plan plan_priority_insertion(const TaskNetwork& net,
                             std::vector<TaskInstance> pool,
                             const StateSnapshot& snap, Window window,
                             const PlanContext& ctx);

// Where one unscheduled instance would go against the plan as it stands
// (everything placed stays put). Nothing is mutated.
struct Slot {
  double start = 0.0;
  double end = 0.0;
  bool truncated = false;
};
std::optional<Slot> find_valid_interval(const TaskNetwork& net,
                                        const Plan& plan, const TaskId& id,
                                        const StateSnapshot& snap,
                                        const PlanContext& ctx);

// Independent feasibility re-check of a finished plan against its own
// timelines. Returns human-readable findings; empty means conflict-free.
std::vector<std::string> verify_plan(const TaskNetwork& net, const Plan& plan,
                                     const PlanContext& ctx);

// Re-projects the active rows from a fresh snapshot and reports rows whose
// constraints no longer hold (the 1 Hz conflict check).
std::vector<std::string> plan_conflicts(const TaskNetwork& net,
                                        const Plan& plan,
                                        const StateSnapshot& snap, SimTime now,
                                        const PlanContext& ctx);

// Scheduled rows starting within the commit window become Committed and
// yield one CommitTask each (executor resolved, stop targets carried).
// Tasks whose precedence predecessors are running late are held back.
std::vector<msg::CommitTask> commit_due_tasks(const TaskNetwork& net,
                                              Plan& plan, SimTime now,
                                              const PlanContext& ctx);

// JSON-lines dump, one record per active row (see docs/formats.md).
std::string plan_dump_jsonl(const TaskNetwork& net, const Plan& plan,
                            const PlanContext& ctx);

// ---------------------------------------------------------------------------
// Replanning triggers

struct ReplanTrigger {
  enum class Kind {
    TaskFailure,
    MultiAgentConflict,
    MilestoneComplete,
    CommitWindowPass,
    ConflictDetected,
  };
  Kind kind = Kind::ConflictDetected;
  std::string source;  // task instance or constraint description
  SimTime time = 0.0;
};

const char* trigger_kind_name(ReplanTrigger::Kind k);

// ---------------------------------------------------------------------------
// Planner runtime (leader side)

struct TickResult {
  std::vector<ReplanTrigger> triggers;
  std::vector<msg::CommitTask> commits;
  bool replanned = false;
  bool noop() const { return triggers.empty() && commits.empty() && !replanned; }
};

// Owns the instance pool and active plan for one leadership epoch. Driven by
// the simulation layer: activate() on leader takeover, tick() at 1 Hz with
// the freshest snapshot and any status reports that arrived since last tick.
class Planner {
 public:
  Planner(const TaskNetwork& net, PlanContext ctx);

  // Fresh pool from the network (previous epochs' work is visible only
  // through the snapshot, not the pool).
  void activate(SimTime now, Window window);
  void deactivate();
  bool active() const { return active_; }

  const Plan& plan() const { return plan_; }
  const PlanContext& context() const { return ctx_; }

  // Throws std::logic_error when inactive.
  TickResult tick(const StateSnapshot& snap,
                  const std::vector<msg::TaskStatusReport>& reports,
                  SimTime now);

  // Force a replan outside the trigger flow (scenario hooks, tests).
  void replan(const ReplanTrigger& trigger, const StateSnapshot& snap,
              SimTime now);

 private:
  void apply_report(const msg::TaskStatusReport& r, SimTime now,
                    std::vector<ReplanTrigger>& out);
  void spawn_retries();
  void detect_milestones(const StateSnapshot& snap, SimTime now,
                         std::vector<ReplanTrigger>& out);
  void presume_lost_commits(SimTime now, std::vector<ReplanTrigger>& out);
  void schedule_predictive_stops(const StateSnapshot& snap, SimTime now);

  const TaskNetwork& net_;
  PlanContext ctx_;
  bool active_ = false;
  bool planned_once_ = false;
  Plan plan_;
  Window window_;
  std::map<std::string, bool> milestone_seen_;
  // Committed rows presumed failed after silence; a late report overrides.
  std::set<TaskId> presumed_lost_;
  // Retry instances already spawned, by template.
  std::map<std::string, int> retries_spawned_;
};

}  // namespace psesim::sched
