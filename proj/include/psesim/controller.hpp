// Per-agent executive: accepts committed tasks from the leader, starts them
// when due, polices local constraints against live state, and reports back.
#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "psesim/core.hpp"
#include "psesim/messages.hpp"
#include "psesim/tasknet.hpp"

namespace psesim::ctrl {

using psesim::AgentId;
using psesim::SimTime;
using psesim::TaskId;

struct ControllerConfig {
  // Cap on the controller's authority to delay a task past its scheduled
  // start. The effective bound per task is min(cap, slack to the next
  // mode-conflicting task on this agent).
  double max_start_delay = 30.0;
};

// How an instance actually behaves at execution time. All-zero is nominal;
// the mission fault script fills these in for injected runs.
struct ExecBehavior {
  double start_delay = 0.0;          // agent lags this long before starting
  double extra_duration = 0.0;       // runs past the planned duration
  double cut_duration = 0.0;         // finishes this much under plan
  std::optional<double> fail_after;  // dies this long into execution
};

// All hooks are optional; unset hooks behave as no-ops (and reads as
// "no record").
struct ControllerHooks {
  // Deliver a status report to the accepted leader.
  std::function<void(const msg::TaskStatusReport&)> report;
  // Acknowledge a leader change once no prior-authority work is running.
  std::function<void(const msg::ControllerReady&)> ack;
  // Trace record: event kind, task id, free-form detail.
  std::function<void(const std::string&, const TaskId&, const std::string&)>
      trace;
  // Live local state: own variables read authoritative truth, foreign ones
  // the local replica. Missing records read as nullopt.
  std::function<std::optional<double>(const tasknet::VarRef&)> read_number;
  std::function<std::optional<bool>(const tasknet::VarRef&)> read_flag;
  // Truth write for flag impacts and coordination clears.
  std::function<void(const tasknet::VarRef&, bool)> write_flag;
  // Fault-script lookup for a freshly committed instance.
  std::function<ExecBehavior(const TaskId&, const std::string& template_id)>
      behavior;
};

enum class Phase { Waiting, Delayed, Running, Done };

struct Tracked {
  TaskId id;
  std::string template_id;
  const tasknet::TaskTemplate* tpl = nullptr;
  int epoch = 0;
  SimTime scheduled_start = 0.0;
  SimTime scheduled_end = 0.0;
  TaskId stop_target;  // set on stop tasks: halt this instance at start
  Phase phase = Phase::Waiting;
  SimTime actual_start = 0.0;
  SimTime finish_at = 0.0;  // actual completion moment once running
  ExecBehavior behavior;
  // Leader changed while this was running: finish under the old epoch, then
  // clean up. Such rows no longer count as "under authority".
  bool wind_down = false;
  bool halted = false;  // stopped early by a paired stop task
};

// Single-context executive, one per agent, driven by the 1 Hz simulation
// tick. All notions of "now" come in by argument.
class Controller {
 public:
  Controller(AgentId self, const tasknet::TaskNetwork& net,
             ControllerConfig cfg, ControllerHooks hooks);

  // Commit handoff from the leader. Stale epochs are reported dropped; a
  // commit arriving after its scheduled start is started immediately if it
  // still passes the local pre-check.
  void receive_commit(const msg::CommitTask& m, SimTime now);

  // Abort by task id. Executing tasks clean up and report aborted; tracked
  // but unstarted ones report dropped; anything else is an idempotent no-op
  // with an informational report.
  void handle_abort(const msg::AbortTask& m, SimTime now);

  // Leader announcement with a newer epoch: drop uncommanded tasks, let
  // running ones wind down, acknowledge once nothing is running.
  void handle_leader_change(const AgentId& leader, int epoch, SimTime now);

  // Once per simulation second: finish due tasks, police maintenance
  // constraints against live state, start due tasks.
  void tick(SimTime now);

  // Forced low-power cutoff. Running non-sleep tasks are recorded as
  // interrupted (trace only; nothing can be sent), and all state is cleared.
  void interrupt_all(SimTime now);

  const AgentId& agent() const { return self_; }
  const AgentId& accepted_leader() const { return leader_; }
  int accepted_epoch() const { return epoch_; }
  bool ready() const { return ready_; }

  // Active (non-terminal) tracked tasks, including wind-down rows.
  const std::vector<Tracked>& tasks() const { return tasks_; }
  bool any_running() const;
  const Tracked* find(const TaskId& id) const;
  int interrupted_count() const { return interrupted_; }

 private:
  Tracked* find_mut(const TaskId& id);
  double effective_delay(const Tracked& t) const;
  bool pre_check(const Tracked& t, std::string* why) const;
  bool constraint_holds(const tasknet::Constraint& c) const;
  void attempt_start(Tracked& t, SimTime now);
  void start_task(Tracked& t, SimTime now);
  void complete_task(Tracked& t, SimTime at);
  void fail_task(Tracked& t, SimTime at, const std::string& why);
  void abort_impl(const msg::AbortTask& m, SimTime now);
  void finish(Tracked& t, tasknet::Status status);  // mark terminal
  void prune();                                     // drop marked rows
  void send_report(const Tracked& t, tasknet::Status status, SimTime at,
                   bool stopped_early, const std::string& detail);
  void apply_flag_impacts(const Tracked& t, tasknet::ImpactModel when);
  void maybe_ack();
  void trace(const std::string& kind, const TaskId& id,
             const std::string& detail);

  AgentId self_;
  const tasknet::TaskNetwork& net_;
  ControllerConfig cfg_;
  ControllerHooks hooks_;

  AgentId leader_;
  int epoch_ = -1;
  bool ready_ = false;
  int ack_pending_ = -1;  // epoch awaiting ControllerReady, -1 = none

  std::vector<Tracked> tasks_;
  std::map<TaskId, tasknet::Status> done_;
  int interrupted_ = 0;
};

}  // namespace psesim::ctrl
