#include "psesim/controller.hpp"

#include <algorithm>

namespace psesim::ctrl {

namespace {
constexpr double kEps = 1e-9;

using tasknet::Constraint;
using tasknet::ConstraintLocus;
using tasknet::ConstraintScope;
using tasknet::ImpactModel;
using tasknet::Status;
using tasknet::TaskCategory;
using tasknet::VarKind;
}  // namespace

Controller::Controller(AgentId self, const tasknet::TaskNetwork& net,
                       ControllerConfig cfg, ControllerHooks hooks)
    : self_(std::move(self)),
      net_(net),
      cfg_(cfg),
      hooks_(std::move(hooks)) {}

bool Controller::any_running() const {
  return std::any_of(tasks_.begin(), tasks_.end(), [](const Tracked& t) {
    return t.phase == Phase::Running;
  });
}

const Tracked* Controller::find(const TaskId& id) const {
  for (const auto& t : tasks_)
    if (t.id == id) return &t;
  return nullptr;
}

Tracked* Controller::find_mut(const TaskId& id) {
  for (auto& t : tasks_)
    if (t.id == id) return &t;
  return nullptr;
}

void Controller::trace(const std::string& kind, const TaskId& id,
                       const std::string& detail) {
  if (hooks_.trace) hooks_.trace(kind, id, detail);
}

void Controller::send_report(const Tracked& t, Status status, SimTime at,
                             bool stopped_early, const std::string& detail) {
  if (!hooks_.report) return;
  msg::TaskStatusReport r;
  r.epoch = t.epoch;
  r.instance_id = t.id;
  r.status = status;
  r.stopped_early = stopped_early;
  r.time = at;
  r.detail = detail;
  hooks_.report(r);
}

// ---------------------------------------------------------------------------
// Commit handoff

void Controller::receive_commit(const msg::CommitTask& m, SimTime now) {
  if (m.epoch != epoch_) {
    Tracked stale;
    stale.id = m.instance_id;
    stale.epoch = m.epoch;
    trace("commit-stale", m.instance_id, "epoch " + std::to_string(m.epoch));
    send_report(stale, Status::Dropped, now, false, "stale epoch");
    return;
  }
  auto done = done_.find(m.instance_id);
  if (done != done_.end()) {
    Tracked t;
    t.id = m.instance_id;
    t.epoch = m.epoch;
    send_report(t, done->second, now, false, "already finished");
    return;
  }
  if (Tracked* existing = find_mut(m.instance_id)) {
    // Re-commit: refresh the schedule, keep execution state.
    existing->scheduled_start = m.start;
    existing->scheduled_end = m.end;
    return;
  }

  Tracked t;
  t.id = m.instance_id;
  t.template_id = m.template_id;
  t.tpl = net_.find_task(m.template_id);
  t.epoch = m.epoch;
  t.scheduled_start = m.start;
  t.scheduled_end = m.end;
  t.stop_target = m.stop_target;
  if (!t.tpl) {
    send_report(t, Status::Failed, now, false, "unknown template");
    done_[t.id] = Status::Failed;
    return;
  }
  if (hooks_.behavior) t.behavior = hooks_.behavior(t.id, t.template_id);
  tasks_.push_back(std::move(t));

  Tracked& row = tasks_.back();
  if (now + kEps >= row.scheduled_start + row.behavior.start_delay)
    attempt_start(row, now);
  prune();
  maybe_ack();
}

// ---------------------------------------------------------------------------
// Start logic

double Controller::effective_delay(const Tracked& t) const {
  // Only a later task that would contend for the same exclusivity class
  // bounds the delay authority; parallel-compatible tasks do not.
  double bound = cfg_.max_start_delay;
  for (const auto& o : tasks_) {
    if (o.id == t.id || !o.tpl || !t.tpl) continue;
    if (o.scheduled_start < t.scheduled_start - kEps) continue;
    if (o.scheduled_start <= t.scheduled_start + kEps && o.id <= t.id) continue;
    if (!tasknet::modes_conflict(o.tpl->mode, t.tpl->mode)) continue;
    bound = std::min(bound, std::max(0.0, o.scheduled_start - t.scheduled_end));
  }
  return bound;
}

bool Controller::constraint_holds(const Constraint& c) const {
  const tasknet::StateVariable* var = net_.find_variable(c.variable);
  bool is_flag = var && var->kind == VarKind::Flag;
  if (is_flag) {
    std::optional<bool> v =
        hooks_.read_flag ? hooks_.read_flag(c.variable) : std::nullopt;
    if (!v) return false;  // unverifiable reads as unmet
    return c.allowed.count(*v) > 0;
  }
  std::optional<double> v =
      hooks_.read_number ? hooks_.read_number(c.variable) : std::nullopt;
  if (!v) return false;
  return *v >= c.lower - kEps && *v <= c.upper + kEps;
}

bool Controller::pre_check(const Tracked& t, std::string* why) const {
  if (!t.tpl) return false;
  for (const auto& c : t.tpl->constraints) {
    // Precedence was sequenced by the leader's plan; multi-agent constraints
    // are the leader's watches. Local state constraints are ours.
    if (c.scope != ConstraintScope::PreExecution) continue;
    if (c.locus != ConstraintLocus::Local) continue;
    if (!constraint_holds(c)) {
      if (why) *why = c.str() + " unmet";
      return false;
    }
  }
  return true;
}

void Controller::attempt_start(Tracked& t, SimTime now) {
  // A stop task's job is to halt its target; do that first so the freed
  // exclusivity class does not block the stop itself.
  if (!t.stop_target.empty()) {
    if (Tracked* target = find_mut(t.stop_target)) {
      if (target->phase == Phase::Running) {
        target->halted = true;
        complete_task(*target, now);
      }
    }
  }
  for (const auto& o : tasks_) {
    if (o.phase != Phase::Running || o.id == t.id) continue;
    if (o.tpl && t.tpl && tasknet::modes_conflict(o.tpl->mode, t.tpl->mode)) {
      t.phase = Phase::Delayed;
      return;
    }
  }
  std::string why;
  if (!pre_check(t, &why)) {
    t.phase = Phase::Delayed;
    trace("start-held", t.id, why);
    return;
  }
  start_task(t, now);
}

void Controller::start_task(Tracked& t, SimTime now) {
  t.phase = Phase::Running;
  t.actual_start = now;
  double planned = std::max(0.0, t.scheduled_end - t.scheduled_start);
  double actual = std::max(
      0.0, planned + t.behavior.extra_duration - t.behavior.cut_duration);
  t.finish_at = now + actual;
  trace("task-start", t.id, t.tpl ? t.tpl->command : "");
  apply_flag_impacts(t, ImpactModel::DeltaAtStart);
  send_report(t, Status::Executing, now, false, "");
}

void Controller::apply_flag_impacts(const Tracked& t, ImpactModel when) {
  if (!t.tpl || !hooks_.write_flag) return;
  for (const auto& im : t.tpl->impacts) {
    if (im.model != when) continue;
    const tasknet::StateVariable* var = net_.find_variable(im.variable);
    if (var && var->kind == VarKind::Flag)
      hooks_.write_flag(im.variable, im.flag_value);
  }
}

// ---------------------------------------------------------------------------
// Terminal transitions

// Mark only; callers iterate over tasks_, so the actual removal waits for
// prune() at the end of each public entry point.
void Controller::finish(Tracked& t, Status status) {
  done_[t.id] = status;
  t.phase = Phase::Done;
}

void Controller::prune() {
  tasks_.erase(std::remove_if(
                   tasks_.begin(), tasks_.end(),
                   [](const Tracked& o) { return o.phase == Phase::Done; }),
               tasks_.end());
}

void Controller::complete_task(Tracked& t, SimTime at) {
  // Wind-down rows are handed back in a clean state for the next regime.
  if (t.wind_down && t.tpl && !t.tpl->cleanup_command.empty())
    trace("cleanup", t.id, t.tpl->cleanup_command);
  apply_flag_impacts(t, ImpactModel::DeltaAtEnd);
  trace("task-complete", t.id, t.halted ? "stopped early" : "");
  send_report(t, Status::Completed, at, t.halted, "");
  finish(t, Status::Completed);
}

void Controller::fail_task(Tracked& t, SimTime at, const std::string& why) {
  if (t.phase == Phase::Running && t.tpl && !t.tpl->cleanup_command.empty())
    trace("cleanup", t.id, t.tpl->cleanup_command);
  if (t.phase == Phase::Running && t.tpl && t.tpl->clears_coordination &&
      hooks_.write_flag)
    hooks_.write_flag({tasknet::kTeamOwner, "coordinated"}, false);
  trace("task-failed", t.id, why);
  send_report(t, Status::Failed, at, false, why);
  finish(t, Status::Failed);
}

// ---------------------------------------------------------------------------
// Abort

void Controller::handle_abort(const msg::AbortTask& m, SimTime now) {
  abort_impl(m, now);
  prune();
  maybe_ack();
}

void Controller::abort_impl(const msg::AbortTask& m, SimTime now) {
  Tracked* t = find_mut(m.instance_id);
  if (t && t->phase == Phase::Running) {
    if (t->tpl && !t->tpl->cleanup_command.empty())
      trace("cleanup", t->id, t->tpl->cleanup_command);
    if (t->tpl && t->tpl->clears_coordination && hooks_.write_flag)
      hooks_.write_flag({tasknet::kTeamOwner, "coordinated"}, false);
    trace("task-aborted", t->id, "");
    send_report(*t, Status::Aborted, now, false, "abort from leader");
    finish(*t, Status::Aborted);
    return;
  }
  if (t) {  // tracked but never started
    trace("task-dropped", t->id, "aborted before start");
    send_report(*t, Status::Dropped, now, false, "aborted before start");
    finish(*t, Status::Dropped);
    return;
  }
  auto done = done_.find(m.instance_id);
  Tracked ghost;
  ghost.id = m.instance_id;
  ghost.epoch = epoch_;
  if (done != done_.end()) {
    trace("abort-noop", m.instance_id, "already finished");
    send_report(ghost, done->second, now, false, "abort ignored");
  } else {
    trace("abort-noop", m.instance_id, "unknown task");
    send_report(ghost, Status::Dropped, now, false, "unknown task");
  }
}

// ---------------------------------------------------------------------------
// Leader change

void Controller::handle_leader_change(const AgentId& leader, int epoch,
                                      SimTime now) {
  if (epoch <= epoch_) return;
  leader_ = leader;
  epoch_ = epoch;
  ready_ = false;
  ack_pending_ = epoch;

  std::vector<TaskId> drop;
  for (auto& t : tasks_) {
    if (t.phase == Phase::Running) {
      t.wind_down = true;
    } else {
      drop.push_back(t.id);
    }
  }
  for (const auto& id : drop) {
    Tracked* t = find_mut(id);
    if (!t) continue;
    trace("task-dropped", id, "leader change");
    send_report(*t, Status::Dropped, now, false, "leader change");
    finish(*t, Status::Dropped);
  }
  prune();
  maybe_ack();
}

void Controller::maybe_ack() {
  if (ack_pending_ < 0) return;
  for (const auto& t : tasks_)
    if (t.phase == Phase::Running && t.wind_down) return;
  ready_ = true;
  if (hooks_.ack) {
    msg::ControllerReady r;
    r.epoch = ack_pending_;
    r.agent = self_;
    hooks_.ack(r);
  }
  ack_pending_ = -1;
}

// ---------------------------------------------------------------------------
// Tick

void Controller::tick(SimTime now) {
  // Finish first so a task ending this second frees its exclusivity class
  // for a start at the same tick.
  for (auto& t : tasks_) {
    if (t.phase != Phase::Running) continue;
    if (t.finish_at <= now + kEps) complete_task(t, t.finish_at);
  }
  for (auto& t : tasks_) {
    if (t.phase != Phase::Running || !t.behavior.fail_after) continue;
    double at = t.actual_start + *t.behavior.fail_after;
    if (at <= now + kEps) fail_task(t, at, "injected fault");
  }
  for (auto& t : tasks_) {
    if (t.phase != Phase::Running || !t.tpl) continue;
    for (const auto& c : t.tpl->constraints) {
      if (c.scope != ConstraintScope::Maintenance) continue;
      if (c.locus != ConstraintLocus::Local) continue;
      if (!constraint_holds(c)) {
        fail_task(t, now, c.str() + " violated");
        break;
      }
    }
  }

  // Starts, deterministically ordered.
  std::vector<TaskId> due;
  for (const auto& t : tasks_)
    if (t.phase == Phase::Waiting || t.phase == Phase::Delayed)
      due.push_back(t.id);
  std::sort(due.begin(), due.end(), [&](const TaskId& a, const TaskId& b) {
    const Tracked* ta = find(a);
    const Tracked* tb = find(b);
    if (ta->scheduled_start != tb->scheduled_start)
      return ta->scheduled_start < tb->scheduled_start;
    return a < b;
  });
  for (const auto& id : due) {
    Tracked* t = find_mut(id);
    if (!t || (t->phase != Phase::Waiting && t->phase != Phase::Delayed))
      continue;
    if (now + kEps < t->scheduled_start + t->behavior.start_delay) {
      // Not yet due (or held by an injected lag); authority still burns.
      if (now > t->scheduled_start + effective_delay(*t) + kEps)
        fail_task(*t, now, "start authority exhausted");
      continue;
    }
    if (now > t->scheduled_start + effective_delay(*t) + kEps) {
      fail_task(*t, now, "start authority exhausted");
      continue;
    }
    attempt_start(*t, now);
  }

  prune();
  maybe_ack();
}

// ---------------------------------------------------------------------------
// Forced low-power cutoff

void Controller::interrupt_all(SimTime now) {
  for (auto& t : tasks_) {
    if (t.phase != Phase::Running) continue;
    if (t.tpl && t.tpl->category == TaskCategory::Sleep) {
      done_[t.id] = Status::Completed;
      continue;
    }
    trace("task-interrupted", t.id,
          "shutdown at " + psesim::format_time(now));
    ++interrupted_;
    done_[t.id] = Status::Failed;
  }
  tasks_.clear();
  ack_pending_ = -1;
}

}  // namespace psesim::ctrl
