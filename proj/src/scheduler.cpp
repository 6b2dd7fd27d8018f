#include "psesim/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace psesim::sched {

using resource::Timeline;
using tasknet::Constraint;
using tasknet::ConstraintScope;
using tasknet::Executor;
using tasknet::ExecutorKind;
using tasknet::Impact;
using tasknet::ImpactModel;
using tasknet::Mode;
using tasknet::PredOutcome;
using tasknet::Status;
using tasknet::TaskCategory;
using tasknet::TaskTemplate;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kEps = 1e-9;

bool row_active(const TaskInstance& r) {
  return r.status == Status::Scheduled || r.status == Status::Committed ||
         r.status == Status::Executing;
}

bool flag_true(double v) { return v >= 0.5; }
}  // namespace

// ---------------------------------------------------------------------------
// Snapshots

double StateSnapshot::value_or(const VarRef& v, double fallback) const {
  auto it = vars.find(v);
  return it == vars.end() ? fallback : it->second.value;
}

bool StateSnapshot::flag_or(const VarRef& v, bool fallback) const {
  auto it = vars.find(v);
  return it == vars.end() ? fallback : flag_true(it->second.value);
}

StateSnapshot default_snapshot(const TaskNetwork& net, SimTime at) {
  StateSnapshot s;
  s.at = at;
  for (const auto& v : net.variables) {
    VarState vs;
    if (v.kind == tasknet::VarKind::Flag)
      vs.value = (v.ref.name == "participating" || v.ref.name == "awake")
                     ? 1.0
                     : 0.0;
    s.vars[v.ref] = vs;
  }
  return s;
}

AgentId resolve_executor(const Executor& ex, const PlanContext& ctx) {
  switch (ex.kind) {
    case ExecutorKind::Agent: return ex.agent;
    case ExecutorKind::Leader: return ctx.leader;
    case ExecutorKind::Survivor: return ctx.survivor;
  }
  return {};
}

VarRef resolve_var(const VarRef& v, const AgentId& executor) {
  if (v.owner == "@executor") return {executor, v.name};
  return v;
}

// ---------------------------------------------------------------------------
// Plan accessors

TaskInstance* Plan::find(const TaskId& id) {
  for (auto& t : tasks)
    if (t.id == id) return &t;
  return nullptr;
}

const TaskInstance* Plan::find(const TaskId& id) const {
  return const_cast<Plan*>(this)->find(id);
}

std::vector<const TaskInstance*> Plan::active() const {
  std::vector<const TaskInstance*> out;
  for (const auto& t : tasks)
    if (row_active(t)) out.push_back(&t);
  std::sort(out.begin(), out.end(),
            [](const TaskInstance* a, const TaskInstance* b) {
              if (a->scheduled_start != b->scheduled_start)
                return a->scheduled_start < b->scheduled_start;
              return a->id < b->id;
            });
  return out;
}

const char* trigger_kind_name(ReplanTrigger::Kind k) {
  switch (k) {
    case ReplanTrigger::Kind::TaskFailure: return "task-failure";
    case ReplanTrigger::Kind::MultiAgentConflict: return "multi-agent-conflict";
    case ReplanTrigger::Kind::MilestoneComplete: return "milestone-complete";
    case ReplanTrigger::Kind::CommitWindowPass: return "commit-window-pass";
    case ReplanTrigger::Kind::ConflictDetected: return "conflict-detected";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Insertion engine

namespace {

struct BusySlot {
  double start = 0, end = 0;
  Mode mode = Mode::Idle;
};

// Per-agent occupancy with mode-exclusivity queries.
class Occupancy {
 public:
  void add(const AgentId& a, double s, double e, Mode m) {
    auto& v = slots_[a];
    v.push_back({s, e, m});
    std::sort(v.begin(), v.end(),
              [](const BusySlot& x, const BusySlot& y) {
                return x.start < y.start;
              });
  }

  bool blocked(const AgentId& a, Mode m, double s, double e) const {
    auto it = slots_.find(a);
    if (it == slots_.end()) return false;
    for (const auto& b : it->second)
      if (b.start < e - kEps && s < b.end - kEps &&
          tasknet::modes_conflict(m, b.mode))
        return true;
    return false;
  }

  // Earliest conflicting slot start at/after s (caps a growing interval).
  double next_block(const AgentId& a, Mode m, double s) const {
    auto it = slots_.find(a);
    if (it == slots_.end()) return kInf;
    for (const auto& b : it->second)
      if (b.start >= s - kEps && tasknet::modes_conflict(m, b.mode))
        return b.start;
    return kInf;
  }

  // Ends of conflicting slots after t (candidate starts).
  void conflict_ends(const AgentId& a, Mode m, double t,
                     std::vector<double>& out) const {
    auto it = slots_.find(a);
    if (it == slots_.end()) return;
    for (const auto& b : it->second)
      if (b.end > t && tasknet::modes_conflict(m, b.mode))
        out.push_back(b.end);
  }

 private:
  std::map<AgentId, std::vector<BusySlot>> slots_;
};

// The working state of one insertion run (or of a read-only probe against an
// existing plan).
class Engine {
 public:
  Engine(const TaskNetwork& net, std::vector<TaskInstance> pool,
         const StateSnapshot& snap, Window w, const PlanContext& ctx)
      : net_(net), ctx_(ctx), w_(w), snap_(snap), pool_(std::move(pool)) {
    for (const auto& t : net_.tasks) {
      tpl_[t.id] = &t;
      for (const auto& sub : t.decomposition) tpl_[sub.id] = &sub;
    }
  }

  // Full run: reset uncommitted, pin the rest, place in priority order.
  Plan run() {
    reset_uncommitted();
    seed();
    for (auto& row : pool_)
      if (row.status == Status::Committed || row.status == Status::Executing)
        pin(row);

    std::size_t total = pool_.size();
    for (const auto& row : pool_) {
      const TaskTemplate* t = tpl(row.template_id);
      if (t) total += t->decomposition.size();
    }
    for (std::size_t pass = 0; pass < total + 1; ++pass) {
      int budget = ctx_.cfg.max_iteration_factor * int(pool_.size());
      bool any = false;
      for (std::size_t i : candidate_order()) {
        if (budget-- <= 0) break;
        if (try_place(i)) any = true;
      }
      if (!any) break;
    }

    Plan plan;
    plan.epoch = ctx_.epoch;
    plan.window = w_;
    for (std::size_t i : candidate_order()) plan.rejected.push_back(pool_[i].id);
    plan.tasks = std::move(pool_);
    plan.timelines = std::move(tls_);
    return plan;
  }

  // Probe: pin everything active as-is, then ask where one row would go.
  std::optional<Slot> probe(const TaskId& id) {
    seed();
    for (auto& row : pool_)
      if (row_active(row)) pin(row);
    for (std::size_t i = 0; i < pool_.size(); ++i)
      if (pool_[i].id == id) {
        if (pool_[i].status != Status::Unscheduled) return std::nullopt;
        return find_slot(i);
      }
    return std::nullopt;
  }

  // Projection only (for the 1 Hz conflict re-check).
  void project() {
    seed();
    for (auto& row : pool_)
      if (row_active(row)) pin(row);
  }

  const std::map<VarRef, Timeline>& timelines() const { return tls_; }
  const std::vector<TaskInstance>& pool() const { return pool_; }

  const TaskTemplate* tpl(const std::string& id) const {
    auto it = tpl_.find(id);
    return it == tpl_.end() ? nullptr : it->second;
  }

  double predicted_end(const TaskInstance& r) const {
    if (r.actual_start) return *r.actual_start + r.scheduled_duration;
    return r.scheduled_end;
  }

  // A predecessor whose executor has dropped out of the team will never run;
  // waiting on it would wedge the whole chain. Such edges are waived.
  bool executor_out(const TaskTemplate& t) const {
    AgentId exec = resolve_executor(t.executor, ctx_);
    if (exec.empty()) return true;
    return !snap_.flag_or({exec, "participating"}, true);
  }

  // Earliest start permitted by the row's precedence constraints, or nothing
  // if some predecessor can no longer supply an acceptable outcome.
  std::optional<double> precedence_bound(const TaskTemplate& t) const {
    double lb = w_.start;
    for (const auto& c : t.constraints) {
      if (c.scope != ConstraintScope::Precedence) continue;
      bool satisfied = false;
      double bound = kInf;
      for (const auto& r : pool_) {
        if (r.template_id != c.predecessor) continue;
        if (tasknet::status_terminal(r.status)) {
          if (c.accept.count(r.outcome())) satisfied = true;
        } else if (row_active(r)) {
          bound = std::min(bound, predicted_end(r));
        }
      }
      if (satisfied) continue;
      if (bound == kInf) {
        const TaskTemplate* p = tpl(c.predecessor);
        if (p && executor_out(*p)) continue;
        return std::nullopt;
      }
      lb = std::max(lb, bound);
    }
    return lb;
  }

 private:
  double ceil_grid(double t) const {
    double g = ctx_.cfg.grid;
    return std::ceil((t - kEps) / g) * g + 0.0;  // +0.0 scrubs negative zero
  }
  // The bound a rate of sign r runs into.
  static double bound_for(const Constraint& c, double r) {
    return r < 0 ? c.lower : c.upper;
  }
  double floor_grid(double t) const {
    double g = ctx_.cfg.grid;
    return std::floor((t + kEps) / g) * g + 0.0;
  }

  void reset_uncommitted() {
    // Stops already aimed at a committed/executing drive survive the reset:
    // the drive's shortened end was predicted around them.
    std::set<TaskId> live;
    for (const auto& r : pool_)
      if (r.status == Status::Committed || r.status == Status::Executing)
        live.insert(r.id);
    std::vector<TaskInstance> kept;
    kept.reserve(pool_.size());
    for (auto& r : pool_) {
      bool subtask = !r.parent.empty();
      bool live_stop = !r.stop_target.empty() && live.count(r.stop_target);
      if (!live_stop &&
          (r.status == Status::Scheduled || r.status == Status::Unscheduled)) {
        if (subtask) continue;  // recreated when the parent places again
        r.status = Status::Unscheduled;
        r.scheduled_start = r.scheduled_end = 0;
        r.scheduled_duration = 0;
        r.stop_target.clear();
      }
      kept.push_back(std::move(r));
    }
    pool_ = std::move(kept);
  }

  void seed() {
    for (const auto& v : net_.variables) {
      VarState vs;
      auto it = snap_.vars.find(v.ref);
      if (it != snap_.vars.end()) vs = it->second;
      Timeline tl(vs.value, w_.start);
      if (vs.rate != 0) tl.add_rate(w_.start, w_.end, vs.rate);
      tls_.emplace(v.ref, std::move(tl));
    }
  }

  // Fold a pinned row's impacts and occupancy into the projection.
  void pin(const TaskInstance& r) {
    const TaskTemplate* t = tpl(r.template_id);
    if (!t) return;
    AgentId exec = resolve_executor(t->executor, ctx_);
    double s = r.actual_start ? *r.actual_start : r.scheduled_start;
    double e = predicted_end(r);
    busy_.add(exec, s, e, t->mode);
    // A pinned parent's rover-side load is carried by its pinned subtasks.
    bool parent = t->has_decomposition();
    if (parent && r.status != Status::Scheduled) {
      // Impacts of a committed/executing parent are the union of its
      // subtasks' plus its own flag writes; the subtask rows are pinned
      // separately, so only apply the parent's start/end flag writes here.
      for (const auto& im : t->impacts)
        if (im.model != ImpactModel::LinearRate &&
            !owned_by_subtask(*t, im.variable))
          apply_step(im, exec, s, e);
      return;
    }
    apply_impacts(*t, exec, s, e);
  }

  bool owned_by_subtask(const TaskTemplate& parent, const VarRef& v) const {
    for (const auto& sub : parent.decomposition)
      for (const auto& im : sub.impacts)
        if (resolve_var(im.variable, resolve_executor(sub.executor, ctx_)) ==
            resolve_var(v, resolve_executor(parent.executor, ctx_)))
          return true;
    return false;
  }

  void apply_step(const Impact& im, const AgentId& exec, double s, double e) {
    double at = im.model == ImpactModel::DeltaAtStart ? s : e;
    if (at < w_.start - kEps) return;  // already reflected in the snapshot
    auto it = tls_.find(resolve_var(im.variable, exec));
    if (it == tls_.end()) return;
    const tasknet::StateVariable* v =
        net_.find_variable(resolve_var(im.variable, exec));
    if (v && v->kind == tasknet::VarKind::Flag)
      it->second.set_at(at, im.flag_value ? 1.0 : 0.0);
    else
      it->second.add_step(at, im.amount);
  }

  void apply_impacts(const TaskTemplate& t, const AgentId& exec, double s,
                     double e) {
    for (const auto& im : t.impacts) {
      if (im.model == ImpactModel::LinearRate) {
        auto it = tls_.find(resolve_var(im.variable, exec));
        if (it != tls_.end())
          it->second.add_rate(std::max(s, w_.start), e, im.amount);
      } else {
        apply_step(im, exec, s, e);
      }
    }
  }

  bool milestone_blocked(const TaskTemplate& t) const {
    if (t.category == TaskCategory::ExploreDrive)
      return snap_.flag_or({tasknet::kTeamOwner, "explore_complete"}, false);
    if (t.category == TaskCategory::FormationParent)
      return snap_.flag_or({tasknet::kTeamOwner, "formation_complete"}, false);
    return false;
  }

  // Unscheduled top-level rows worth trying, priority order, ties by id.
  std::vector<std::size_t> candidate_order() const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < pool_.size(); ++i) {
      const auto& r = pool_[i];
      if (r.status != Status::Unscheduled || !r.parent.empty()) continue;
      const TaskTemplate* t = tpl(r.template_id);
      if (!t || t->category == TaskCategory::Stop) continue;
      if (milestone_blocked(*t)) continue;
      if (w_.wake_origin + t->preferred_start > w_.end) continue;
      idx.push_back(i);
    }
    std::sort(idx.begin(), idx.end(), [this](std::size_t a, std::size_t b) {
      const TaskTemplate* ta = tpl(pool_[a].template_id);
      const TaskTemplate* tb = tpl(pool_[b].template_id);
      if (ta->priority != tb->priority) return ta->priority > tb->priority;
      return pool_[a].id < pool_[b].id;
    });
    return idx;
  }

  // All (agent, mode) pairs a placement occupies: the task itself plus its
  // decomposition subtasks, so a parent is only placed where every member
  // rover is free.
  std::vector<std::pair<AgentId, Mode>> footprint(const TaskTemplate& t) const {
    std::vector<std::pair<AgentId, Mode>> out;
    out.emplace_back(resolve_executor(t.executor, ctx_), t.mode);
    for (const auto& sub : t.decomposition)
      out.emplace_back(resolve_executor(sub.executor, ctx_), sub.mode);
    return out;
  }

  std::optional<std::string> pre_violation(const TaskTemplate& t,
                                           const AgentId& exec,
                                           double s) const {
    for (const auto& c : t.constraints) {
      if (c.scope != ConstraintScope::PreExecution) continue;
      VarRef var = resolve_var(c.variable, exec);
      auto it = tls_.find(var);
      if (it == tls_.end()) return "unknown variable " + var.str();
      double v = it->second.value_at(s);
      const tasknet::StateVariable* sv = net_.find_variable(var);
      if (sv && sv->kind == tasknet::VarKind::Flag) {
        if (!c.allowed.count(flag_true(v)))
          return var.str() + " flag blocks start";
      } else if (v < c.lower - kEps || v > c.upper + kEps) {
        std::ostringstream os;
        os << var.str() << "=" << v << " outside [" << c.lower << ","
           << c.upper << "] at start";
        return os.str();
      }
    }
    return std::nullopt;
  }

  struct MaintResult {
    bool ok = false;
    double crossing = 0;  // earliest violation when !ok and truncatable
    bool truncatable = false;
    std::string detail;
  };

  // Check maintenance constraints over [s, e] with the task's own linear
  // rates layered on (extra == nullptr means they are already projected).
  MaintResult maint_check(const TaskTemplate& t, const AgentId& exec, double s,
                          double e,
                          const std::map<VarRef, double>* extra) const {
    MaintResult res;
    res.ok = true;
    for (const auto& c : t.constraints) {
      if (c.scope != ConstraintScope::Maintenance) continue;
      VarRef var = resolve_var(c.variable, exec);
      auto it = tls_.find(var);
      if (it == tls_.end()) {
        res.ok = false;
        res.detail = "unknown variable " + var.str();
        return res;
      }
      const tasknet::StateVariable* sv = net_.find_variable(var);
      if (sv && sv->kind == tasknet::VarKind::Flag) {
        const Timeline* src = &it->second;
        Timeline scratch;
        // A flag the task itself raises at start counts from s onward.
        for (const auto& im : t.impacts) {
          if (im.model != ImpactModel::DeltaAtStart) continue;
          if (resolve_var(im.variable, exec) != var) continue;
          scratch = it->second;
          scratch.set_at(s, im.flag_value ? 1.0 : 0.0);
          src = &scratch;
          break;
        }
        double lo = src->min_over(s, e);
        double hi = src->max_over(s, e);
        bool needs_true = c.allowed.count(true) && !c.allowed.count(false);
        bool needs_false = c.allowed.count(false) && !c.allowed.count(true);
        if ((needs_true && lo < 0.5) || (needs_false && hi >= 0.5)) {
          res.ok = false;
          res.detail = var.str() + " flag breaks during task";
          return res;
        }
        continue;
      }
      Timeline probe = it->second;
      if (extra) {
        auto r = extra->find(var);
        if (r != extra->end() && r->second != 0)
          probe.add_rate(s, e, r->second);
      }
      auto cross = probe.first_violation(s, e, c.lower, c.upper);
      if (cross) {
        res.ok = false;
        res.truncatable = *cross > s + kEps;
        res.crossing = *cross;
        std::ostringstream os;
        os << var.str() << " leaves [" << c.lower << "," << c.upper << "] at "
           << *cross;
        res.detail = os.str();
        return res;
      }
    }
    return res;
  }

  std::map<VarRef, double> own_rates(const TaskTemplate& t,
                                     const AgentId& exec) const {
    std::map<VarRef, double> out;
    for (const auto& im : t.impacts)
      if (im.model == ImpactModel::LinearRate)
        out[resolve_var(im.variable, exec)] += im.amount;
    return out;
  }

  // An insertion is only valid if it leaves every row already in the plan
  // satisfiable: a drain placed before an earlier-scheduled task's window
  // must not push that task's constraints out of range.
  bool breaks_placed_rows(const TaskTemplate& t, const AgentId& exec,
                          double s, double e) const {
    if (t.impacts.empty()) return false;
    std::map<VarRef, Timeline> temp;  // perturbed copies, touched vars only
    for (const auto& im : t.impacts) {
      VarRef var = resolve_var(im.variable, exec);
      auto src = tls_.find(var);
      if (src == tls_.end()) continue;
      auto [it, _] = temp.try_emplace(var, src->second);
      if (im.model == ImpactModel::LinearRate) {
        if (im.amount != 0)
          it->second.add_rate(std::max(s, w_.start), e, im.amount);
      } else {
        double at = im.model == ImpactModel::DeltaAtStart ? s : e;
        if (at < w_.start - kEps) continue;
        const tasknet::StateVariable* v = net_.find_variable(var);
        if (v && v->kind == tasknet::VarKind::Flag)
          it->second.set_at(at, im.flag_value ? 1.0 : 0.0);
        else
          it->second.add_step(at, im.amount);
      }
    }
    if (temp.empty()) return false;

    for (const auto& p : pool_) {
      if (!row_active(p)) continue;
      const TaskTemplate* pt = tpl(p.template_id);
      if (!pt) continue;
      AgentId pexec = resolve_executor(pt->executor, ctx_);
      double ps = p.actual_start ? *p.actual_start : p.scheduled_start;
      double pe = predicted_end(p);
      for (const auto& c : pt->constraints) {
        if (c.scope == ConstraintScope::Precedence) continue;
        VarRef var = resolve_var(c.variable, pexec);
        auto it = temp.find(var);
        if (it == temp.end()) continue;
        const tasknet::StateVariable* sv = net_.find_variable(var);
        bool is_flag = sv && sv->kind == tasknet::VarKind::Flag;
        if (c.scope == ConstraintScope::PreExecution) {
          if (p.status == Status::Executing) continue;  // already started
          if (ps < w_.start - kEps) continue;
          double v = it->second.value_at(ps);
          if (is_flag ? !c.allowed.count(flag_true(v))
                      : (v < c.lower - kEps || v > c.upper + kEps))
            return true;
        } else {
          double a = std::max(ps, w_.start);
          if (a > pe) continue;
          if (is_flag) {
            double lo = it->second.min_over(a, pe);
            double hi = it->second.max_over(a, pe);
            bool needs_true = c.allowed.count(true) && !c.allowed.count(false);
            bool needs_false = c.allowed.count(false) && !c.allowed.count(true);
            if ((needs_true && lo < 0.5) || (needs_false && hi >= 0.5))
              return true;
          } else if (it->second.first_violation(a, pe, c.lower, c.upper)) {
            return true;
          }
        }
      }
    }
    return false;
  }

  std::optional<Slot> find_slot(std::size_t i) {
    const TaskInstance& row = pool_[i];
    const TaskTemplate* t = tpl(row.template_id);
    if (!t) return std::nullopt;
    AgentId exec = resolve_executor(t->executor, ctx_);
    if (exec.empty()) return std::nullopt;

    auto prec = precedence_bound(*t);
    if (!prec) return std::nullopt;
    double base =
        ceil_grid(std::max({w_.start, w_.wake_origin + t->preferred_start,
                            *prec}));
    if (base > w_.end) return std::nullopt;

    auto prints = footprint(*t);
    std::vector<double> cands{base};
    for (const auto& [a, m] : prints) busy_.conflict_ends(a, m, base, cands);
    for (const auto& c : t->constraints) {
      if (c.scope == ConstraintScope::Precedence) continue;
      VarRef var = resolve_var(c.variable, exec);
      auto it = tls_.find(var);
      if (it == tls_.end()) continue;
      const tasknet::StateVariable* sv = net_.find_variable(var);
      if (sv && sv->kind == tasknet::VarKind::Flag) {
        for (double bp : it->second.breakpoints())
          if (bp > base && bp <= w_.end) cands.push_back(bp);
      } else {
        for (double cp :
             it->second.change_points(base, w_.end, c.lower, c.upper))
          cands.push_back(cp);
      }
    }
    double min_dur =
        t->stoppable ? std::min(ctx_.cfg.min_truncated, t->expected_duration)
                     : t->expected_duration;
    auto rates = own_rates(*t, exec);

    // A fixed-length task whose own rate fights the baseline can become
    // feasible strictly between the base timeline's change points: the
    // binding moment is the task end (or an interior dip), displaced from
    // the start by the duration. Add those displaced crossings.
    if (!t->stoppable) {
      double d = t->expected_duration;
      for (const auto& c : t->constraints) {
        if (c.scope != ConstraintScope::Maintenance) continue;
        VarRef var = resolve_var(c.variable, exec);
        auto it = tls_.find(var);
        if (it == tls_.end()) continue;
        const tasknet::StateVariable* sv = net_.find_variable(var);
        if (sv && sv->kind == tasknet::VarKind::Flag) continue;
        double r = 0;
        auto rr = rates.find(var);
        if (rr != rates.end()) r = rr->second;
        if (r == 0) continue;
        double bound = r < 0 ? c.lower : c.upper;
        double level = bound - r * d;  // base value making the task end sit
                                       // exactly on the bound
        for (double cp :
             it->second.change_points(base + d, w_.end, level, level))
          cands.push_back(cp - d);
        for (double bp : it->second.breakpoints()) {
          if (bp <= base || bp > w_.end) continue;
          double sstar = bp + (it->second.value_at(bp) - bound) / r;
          if (sstar > base && sstar + d <= w_.end) cands.push_back(sstar);
        }
      }
    }

    // Starts that clear this task's impacts off an already-placed row's
    // constraint. Cross-row feasibility is monotone in the start (moving the
    // impact later only relieves a fixed earlier window), so the clearing
    // thresholds are the only additional starts the sweep needs.
    if (!t->impacts.empty()) {
      double d = t->expected_duration;
      for (const auto& im : t->impacts) {
        VarRef var = resolve_var(im.variable, exec);
        auto vt = tls_.find(var);
        if (vt == tls_.end()) continue;
        double r = im.model == ImpactModel::LinearRate ? im.amount : 0.0;
        for (const auto& p : pool_) {
          if (!row_active(p)) continue;
          const TaskTemplate* pt = tpl(p.template_id);
          if (!pt) continue;
          AgentId pexec = resolve_executor(pt->executor, ctx_);
          double ps = p.actual_start ? *p.actual_start : p.scheduled_start;
          double pe = predicted_end(p);
          for (const auto& c : pt->constraints) {
            if (c.scope == ConstraintScope::Precedence) continue;
            if (resolve_var(c.variable, pexec) != var) continue;
            std::vector<double> crit{ps};
            if (c.scope == ConstraintScope::Maintenance) {
              crit.push_back(pe);
              for (double bp : vt->second.breakpoints())
                if (bp > ps && bp < pe) crit.push_back(bp);
            }
            for (double u : crit) {
              cands.push_back(u);
              cands.push_back(u - d);
              if (r != 0)
                cands.push_back(u + (vt->second.value_at(u) - bound_for(c, r)) / r);
              else
                cands.push_back(u + ctx_.cfg.grid);  // step clears past u
            }
            if (r != 0 && c.scope == ConstraintScope::Maintenance) {
              // Binding exactly at the impact's own end inside p's window.
              double level = bound_for(c, r) - r * d;
              double a2 = std::max(ps, base + d), b2 = std::min(pe, w_.end);
              if (a2 < b2)
                for (double cp : vt->second.change_points(a2, b2, level, level))
                  cands.push_back(cp - d);
            }
          }
        }
      }
    }

    for (auto& c : cands) c = ceil_grid(std::max(c, base));
    std::sort(cands.begin(), cands.end());
    cands.erase(std::unique(cands.begin(), cands.end()), cands.end());

    for (double s : cands) {
      if (s + min_dur > w_.end + kEps) break;
      bool taken = false;
      double cap = w_.end;
      for (const auto& [a, m] : prints) {
        if (busy_.blocked(a, m, s, s + min_dur)) {
          taken = true;
          break;
        }
        cap = std::min(cap, busy_.next_block(a, m, s + min_dur));
      }
      if (taken) continue;

      double e = s + t->expected_duration;
      bool truncated = false;
      if (e > cap + kEps) {
        if (!t->stoppable) continue;
        e = floor_grid(cap);
        truncated = true;
        if (e - s + kEps < min_dur) continue;
      }
      if (pre_violation(*t, exec, s)) continue;

      // Maintenance, shrinking the end toward any crossing until stable.
      bool ok = false;
      for (int guard = 0; guard < 64; ++guard) {
        MaintResult m = maint_check(*t, exec, s, e, &rates);
        if (m.ok) {
          ok = true;
          break;
        }
        if (!t->stoppable || !m.truncatable) break;
        double ne = floor_grid(m.crossing);
        if (ne >= e) ne = e - ctx_.cfg.grid;
        if (ne - s + kEps < min_dur) break;
        e = ne;
        truncated = true;
      }
      if (!ok) continue;
      if (breaks_placed_rows(*t, exec, s, e)) continue;
      return Slot{s, e, truncated};
    }
    return std::nullopt;
  }

  bool try_place(std::size_t i) {
    auto slot = find_slot(i);
    if (!slot) return false;
    place(i, *slot);
    return true;
  }

  void place(std::size_t i, Slot slot) {
    const TaskTemplate* t = tpl(pool_[i].template_id);
    AgentId exec = resolve_executor(t->executor, ctx_);

    double s = slot.start, e = slot.end;
    if (!t->detail_command.empty() && ctx_.detail) {
      // Detail commands may only shrink the slot; growth would invalidate
      // the checks that admitted it.
      if (auto d = ctx_.detail(*t, pool_[i], e - s)) {
        double nd = std::clamp(*d, ctx_.cfg.grid, e - s);
        e = s + floor_grid(nd);
      }
    }

    auto& row = pool_[i];
    row.status = Status::Scheduled;
    row.scheduled_start = s;
    row.scheduled_end = e;
    row.scheduled_duration = e - s;

    apply_impacts(*t, exec, s, e);
    busy_.add(exec, s, e, t->mode);
    if (slot.truncated && !t->stop_task.empty())
      place_stop(t->stop_task, e, row.id);

    if (!t->has_decomposition()) return;
    std::string parent_id = row.id;
    int index = row.index;
    for (const auto& sub : t->decomposition) {
      TaskInstance si;
      si.id = tasknet::make_instance_id(sub.id, index, ctx_.epoch);
      si.template_id = sub.id;
      si.index = index;
      si.epoch = ctx_.epoch;
      si.parent = parent_id;
      AgentId sexec = resolve_executor(sub.executor, ctx_);
      // The parent carries the union of its subtasks' constraints and
      // impacts, so the slot is already valid for every member; pin the
      // subtask at the exact parent bounds without re-applying impacts.
      si.status = Status::Scheduled;
      si.scheduled_start = s;
      si.scheduled_end = e;
      si.scheduled_duration = e - s;
      busy_.add(sexec, s, e, sub.mode);
      pool_.push_back(std::move(si));
      if (slot.truncated && !sub.stop_task.empty())
        place_stop(sub.stop_task, e, pool_.back().id);
    }
  }

  void place_stop(const std::string& stop_tpl_id, double at,
                  const TaskId& target) {
    const TaskTemplate* st = tpl(stop_tpl_id);
    if (!st) return;
    for (auto& r : pool_) {
      if (r.template_id != stop_tpl_id || r.status != Status::Unscheduled)
        continue;
      r.status = Status::Scheduled;
      r.scheduled_start = at;
      r.scheduled_end = std::min(at + st->expected_duration, w_.end);
      r.scheduled_duration = r.scheduled_end - r.scheduled_start;
      r.stop_target = target;
      busy_.add(resolve_executor(st->executor, ctx_), r.scheduled_start,
                r.scheduled_end, st->mode);
      return;
    }
  }

  const TaskNetwork& net_;
  const PlanContext& ctx_;
  Window w_;
  const StateSnapshot& snap_;
  std::vector<TaskInstance> pool_;
  std::map<VarRef, Timeline> tls_;
  Occupancy busy_;
  std::map<std::string, const TaskTemplate*> tpl_;
};

}  // namespace

Plan plan_priority_insertion(const TaskNetwork& net,
                             std::vector<TaskInstance> pool,
                             const StateSnapshot& snap, Window window,
                             const PlanContext& ctx) {
  if (window.end < window.start)
    throw std::invalid_argument("scheduling window ends before it starts");
  Engine eng(net, std::move(pool), snap, window, ctx);
  return eng.run();
}

std::optional<Slot> find_valid_interval(const TaskNetwork& net,
                                        const Plan& plan, const TaskId& id,
                                        const StateSnapshot& snap,
                                        const PlanContext& ctx) {
  Engine eng(net, plan.tasks, snap, plan.window, ctx);
  return eng.probe(id);
}

// ---------------------------------------------------------------------------
// Re-checks

namespace {

// Shared by verify_plan (plan's own timelines) and plan_conflicts (fresh
// projection): check every active row against `tls`.
std::vector<std::string> check_rows(const TaskNetwork& net,
                                    const std::vector<TaskInstance>& rows,
                                    const std::map<VarRef, Timeline>& tls,
                                    const Window& w, SimTime from,
                                    const PlanContext& ctx) {
  std::vector<std::string> out;
  auto note = [&](const TaskInstance& r, const std::string& what) {
    out.push_back(r.id + ": " + what);
  };

  std::map<std::string, const TaskTemplate*> tpl;
  for (const auto& t : net.tasks) {
    tpl[t.id] = &t;
    for (const auto& sub : t.decomposition) tpl[sub.id] = &sub;
  }
  auto predicted_end = [](const TaskInstance& r) {
    return r.actual_start ? *r.actual_start + r.scheduled_duration
                          : r.scheduled_end;
  };
  auto out_of_team = [&](const TaskTemplate& t) {
    AgentId exec = resolve_executor(t.executor, ctx);
    if (exec.empty()) return true;
    auto it = tls.find(VarRef{exec, "participating"});
    return it != tls.end() && it->second.value_at(from) < 0.5;
  };

  for (const auto& r : rows) {
    if (!row_active(r)) continue;
    auto it = tpl.find(r.template_id);
    if (it == tpl.end()) {
      note(r, "unknown template");
      continue;
    }
    const TaskTemplate& t = *it->second;
    AgentId exec = resolve_executor(t.executor, ctx);
    double s = r.actual_start ? *r.actual_start : r.scheduled_start;
    double e = predicted_end(r);

    if (e > w.end + kEps) note(r, "runs past the window end");

    for (const auto& c : t.constraints) {
      if (c.scope == ConstraintScope::Precedence) {
        bool satisfied = false;
        double bound = kInf;
        for (const auto& p : rows) {
          if (p.template_id != c.predecessor) continue;
          if (tasknet::status_terminal(p.status)) {
            if (c.accept.count(p.outcome())) satisfied = true;
          } else if (row_active(p)) {
            bound = std::min(bound, predicted_end(p));
          }
        }
        if (!satisfied && bound == kInf) {
          auto pt = tpl.find(c.predecessor);
          if (pt != tpl.end() && out_of_team(*pt->second)) continue;  // waived
        }
        if (!satisfied && bound > s + kEps)
          note(r, "predecessor " + c.predecessor + " not done by start");
        continue;
      }
      VarRef var = resolve_var(c.variable, exec);
      auto tl = tls.find(var);
      if (tl == tls.end()) {
        note(r, "no timeline for " + var.str());
        continue;
      }
      const tasknet::StateVariable* sv = net.find_variable(var);
      bool is_flag = sv && sv->kind == tasknet::VarKind::Flag;
      if (c.scope == ConstraintScope::PreExecution) {
        if (r.status == Status::Executing) continue;  // already started
        if (s < from - kEps) continue;
        double v = tl->second.value_at(s);
        if (is_flag ? !c.allowed.count(flag_true(v))
                    : (v < c.lower - kEps || v > c.upper + kEps))
          note(r, var.str() + " blocks start (" + c.str() + ")");
      } else {
        double a = std::max(s, from);
        if (a > e) continue;
        if (is_flag) {
          double lo = tl->second.min_over(a, e);
          double hi = tl->second.max_over(a, e);
          bool needs_true = c.allowed.count(true) && !c.allowed.count(false);
          bool needs_false = c.allowed.count(false) && !c.allowed.count(true);
          if ((needs_true && lo < 0.5) || (needs_false && hi >= 0.5))
            note(r, var.str() + " flag breaks during task");
        } else {
          double lo = tl->second.min_over(a, e);
          double hi = tl->second.max_over(a, e);
          if (lo < c.lower - kEps || hi > c.upper + kEps)
            note(r, var.str() + " leaves range during task (" + c.str() + ")");
        }
      }
    }

    // Pinned subtasks sit exactly on their parent.
    if (!r.parent.empty()) {
      for (const auto& p : rows)
        if (p.id == r.parent && row_active(p) &&
            (std::abs(p.scheduled_start - r.scheduled_start) > kEps ||
             std::abs(p.scheduled_end - r.scheduled_end) > kEps))
          note(r, "not pinned to parent bounds");
    }
  }

  // Executor exclusivity, pairwise over the effective windows (a task that
  // started late occupies actual_start .. actual_start + duration, not its
  // original slot).
  auto eff_start = [](const TaskInstance& r) {
    return r.actual_start ? *r.actual_start : r.scheduled_start;
  };
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!row_active(rows[i])) continue;
    auto ti = tpl.find(rows[i].template_id);
    if (ti == tpl.end()) continue;
    AgentId ei = resolve_executor(ti->second->executor, ctx);
    for (std::size_t j = i + 1; j < rows.size(); ++j) {
      if (!row_active(rows[j])) continue;
      auto tj = tpl.find(rows[j].template_id);
      if (tj == tpl.end()) continue;
      if (resolve_executor(tj->second->executor, ctx) != ei) continue;
      if (!tasknet::modes_conflict(ti->second->mode, tj->second->mode))
        continue;
      if (eff_start(rows[i]) < predicted_end(rows[j]) - kEps &&
          eff_start(rows[j]) < predicted_end(rows[i]) - kEps)
        out.push_back(rows[i].id + " overlaps " + rows[j].id + " on " + ei);
    }
  }
  return out;
}

}  // namespace

std::vector<std::string> verify_plan(const TaskNetwork& net, const Plan& plan,
                                     const PlanContext& ctx) {
  return check_rows(net, plan.tasks, plan.timelines, plan.window,
                    plan.window.start, ctx);
}

std::vector<std::string> plan_conflicts(const TaskNetwork& net,
                                        const Plan& plan,
                                        const StateSnapshot& snap, SimTime now,
                                        const PlanContext& ctx) {
  Window w = plan.window;
  w.start = now;
  Engine eng(net, plan.tasks, snap, w, ctx);
  eng.project();
  return check_rows(net, eng.pool(), eng.timelines(), w, now, ctx);
}

// ---------------------------------------------------------------------------
// Commit handoff

std::vector<msg::CommitTask> commit_due_tasks(const TaskNetwork& net,
                                              Plan& plan, SimTime now,
                                              const PlanContext& ctx) {
  std::vector<msg::CommitTask> out;
  auto predicted_end = [](const TaskInstance& r) {
    return r.actual_start ? *r.actual_start + r.scheduled_duration
                          : r.scheduled_end;
  };

  auto out_of_team = [&](const std::string& tpl_id) {
    const TaskTemplate* p = net.find_task(tpl_id);
    if (!p) return false;
    AgentId exec = resolve_executor(p->executor, ctx);
    if (exec.empty()) return true;
    auto it = plan.timelines.find(VarRef{exec, "participating"});
    return it != plan.timelines.end() &&
           it->second.value_at(plan.window.start) < 0.5;
  };

  // Predecessor running late (predicted done but no terminal report) holds
  // the commit back; the successor keeps its slot until replan moves it.
  auto deferred = [&](const TaskTemplate& t, double start) {
    for (const auto& c : t.constraints) {
      if (c.scope != ConstraintScope::Precedence) continue;
      bool satisfied = false;
      bool on_track = false;
      bool any_live = false;
      for (const auto& p : plan.tasks) {
        if (p.template_id != c.predecessor) continue;
        if (tasknet::status_terminal(p.status)) {
          if (c.accept.count(p.outcome())) satisfied = true;
        } else if (row_active(p)) {
          any_live = true;
          double pe = predicted_end(p);
          if (pe <= start + kEps && pe > now + kEps) on_track = true;
          if (pe <= now + kEps) return true;  // late, wait for the report
        }
      }
      if (satisfied || on_track) continue;
      if (!any_live && out_of_team(c.predecessor)) continue;  // waived
      return true;
    }
    return false;
  };

  std::vector<TaskInstance*> due;
  for (auto& r : plan.tasks) {
    if (r.status != Status::Scheduled) continue;
    if (r.scheduled_start > now + ctx.cfg.commit_window + kEps) continue;
    if (r.scheduled_start + ctx.cfg.max_start_delay < now - kEps) continue;
    due.push_back(&r);
  }
  std::sort(due.begin(), due.end(), [](TaskInstance* a, TaskInstance* b) {
    if (a->scheduled_start != b->scheduled_start)
      return a->scheduled_start < b->scheduled_start;
    return a->id < b->id;
  });

  for (TaskInstance* r : due) {
    const TaskTemplate* t = net.find_task(r->template_id);
    if (!t) continue;
    if (deferred(*t, r->scheduled_start)) continue;
    r->status = Status::Committed;
    msg::CommitTask m;
    m.epoch = plan.epoch;
    m.instance_id = r->id;
    m.template_id = r->template_id;
    m.executor = resolve_executor(t->executor, ctx);
    m.start = r->scheduled_start;
    m.end = r->scheduled_end;
    m.stop_target = r->stop_target;
    out.push_back(std::move(m));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Plan dump

std::string plan_dump_jsonl(const TaskNetwork& net, const Plan& plan,
                            const PlanContext& ctx) {
  std::string out;
  for (const TaskInstance* r : plan.active()) {
    const TaskTemplate* t = net.find_task(r->template_id);
    nlohmann::ordered_json j;
    j["id"] = r->id;
    j["executor"] = t ? resolve_executor(t->executor, ctx) : AgentId{};
    j["start"] = r->scheduled_start;
    j["end"] = r->scheduled_end;
    j["status"] = tasknet::status_name(r->status);
    out += j.dump();
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Planner runtime

Planner::Planner(const TaskNetwork& net, PlanContext ctx)
    : net_(net), ctx_(std::move(ctx)) {}

void Planner::activate(SimTime now, Window window) {
  active_ = true;
  planned_once_ = false;
  window_ = window;
  window_.start = now;
  plan_ = Plan{};
  plan_.epoch = ctx_.epoch;
  plan_.window = window_;
  plan_.tasks = tasknet::expand_instances(net_, ctx_.epoch);
  milestone_seen_.clear();
  presumed_lost_.clear();
  retries_spawned_.clear();
}

void Planner::deactivate() { active_ = false; }

void Planner::apply_report(const msg::TaskStatusReport& r, SimTime now,
                           std::vector<ReplanTrigger>& out) {
  (void)now;
  if (r.epoch != ctx_.epoch) return;
  TaskInstance* row = plan_.find(r.instance_id);
  if (!row) return;
  bool presumed = presumed_lost_.count(r.instance_id) > 0;
  switch (r.status) {
    case Status::Executing:
      if (tasknet::status_transition_allowed(row->status, Status::Executing) ||
          presumed) {
        row->status = Status::Executing;
        row->actual_start = r.time;
        presumed_lost_.erase(r.instance_id);
      }
      break;
    case Status::Completed:
      // Accept straight from Committed too: a skipped Executing report must
      // not wedge the row into a presumed failure.
      if (tasknet::status_transition_allowed(row->status, Status::Completed) ||
          row->status == Status::Committed || presumed) {
        row->status = Status::Completed;
        row->actual_end = r.time;
        row->stopped_early = r.stopped_early;
        presumed_lost_.erase(r.instance_id);
        // Finishing well under schedule frees time the plan doesn't know
        // about; replan promptly instead of waiting for the next cycle.
        if (r.time + ctx_.cfg.grid < row->scheduled_end)
          out.push_back({ReplanTrigger::Kind::ConflictDetected,
                         r.instance_id + " ended early", r.time});
      }
      break;
    case Status::Failed:
      if (tasknet::status_transition_allowed(row->status, Status::Failed)) {
        row->status = Status::Failed;
        row->actual_end = r.time;
        out.push_back({ReplanTrigger::Kind::TaskFailure, r.instance_id, r.time});
      }
      break;
    case Status::Aborted:
      if (tasknet::status_transition_allowed(row->status, Status::Aborted)) {
        row->status = Status::Aborted;
        row->actual_end = r.time;
      }
      break;
    case Status::Dropped:
      if (tasknet::status_transition_allowed(row->status, Status::Dropped)) {
        row->status = Status::Dropped;
        out.push_back({ReplanTrigger::Kind::TaskFailure, r.instance_id, r.time});
      }
      break;
    default:
      break;
  }
}

void Planner::spawn_retries() {
  for (const auto& t : net_.tasks) {
    if (t.retry_budget <= 0) continue;
    int bad = 0;
    for (const auto& r : plan_.tasks) {
      if (r.template_id != t.id) continue;
      if (r.status == Status::Failed || r.status == Status::Aborted ||
          r.status == Status::Dropped)
        ++bad;
    }
    int& spawned = retries_spawned_[t.id];
    while (spawned < std::min(bad, t.retry_budget)) {
      TaskInstance ti;
      int index = t.instance_count + spawned;
      ti.id = tasknet::make_instance_id(t.id, index, ctx_.epoch);
      ti.template_id = t.id;
      ti.index = index;
      ti.epoch = ctx_.epoch;
      plan_.tasks.push_back(std::move(ti));
      ++spawned;
    }
  }
}

void Planner::detect_milestones(const StateSnapshot& snap, SimTime now,
                                std::vector<ReplanTrigger>& out) {
  for (const auto& v : net_.variables) {
    if (v.ref.owner != tasknet::kTeamOwner) continue;
    if (v.ref.name.find("_complete") == std::string::npos) continue;
    bool val = snap.flag_or(v.ref, false);
    bool& seen = milestone_seen_[v.ref.name];
    if (val && !seen)
      out.push_back({ReplanTrigger::Kind::MilestoneComplete, v.ref.str(), now});
    seen = val;
  }
}

void Planner::presume_lost_commits(SimTime now,
                                   std::vector<ReplanTrigger>& out) {
  for (auto& r : plan_.tasks) {
    if (r.status != Status::Committed) continue;
    double deadline = r.scheduled_start + ctx_.cfg.max_start_delay +
                      ctx_.cfg.report_grace;
    if (now <= deadline + kEps) continue;
    r.status = Status::Failed;
    r.actual_end = now;
    presumed_lost_.insert(r.id);
    out.push_back({ReplanTrigger::Kind::TaskFailure,
                   r.id + " (no report, presumed lost)", now});
  }
}

// Executing drives predicted to cross a maintenance bound get their stop
// task scheduled at the crossing; coordinated drives stop all siblings at
// the same instant.
void Planner::schedule_predictive_stops(const StateSnapshot& snap,
                                        SimTime now) {
  for (auto& r : plan_.tasks) {
    if (r.status != Status::Executing || !r.stop_target.empty()) continue;
    const TaskTemplate* t = net_.find_task(r.template_id);
    if (!t || t->stop_task.empty()) continue;
    // Already has a stop aimed at it?
    bool covered = false;
    for (const auto& s : plan_.tasks)
      if (s.stop_target == r.id && row_active(s)) covered = true;
    if (covered) continue;

    AgentId exec = resolve_executor(t->executor, ctx_);
    double start = r.actual_start.value_or(r.scheduled_start);
    double end = start + r.scheduled_duration;
    if (end <= now) continue;
    double crossing = kInf;
    for (const auto& c : t->constraints) {
      if (c.scope != ConstraintScope::Maintenance) continue;
      VarRef var = resolve_var(c.variable, exec);
      const tasknet::StateVariable* sv = net_.find_variable(var);
      if (sv && sv->kind == tasknet::VarKind::Flag) continue;
      auto it = snap.vars.find(var);
      if (it == snap.vars.end()) continue;
      double rate = it->second.rate;
      for (const auto& im : t->impacts)
        if (im.model == ImpactModel::LinearRate &&
            resolve_var(im.variable, exec) == var)
          rate += im.amount;
      double v = it->second.value;
      if (rate < 0 && v > c.lower)
        crossing = std::min(crossing, now + (c.lower - v) / rate);
      else if (rate > 0 && v < c.upper)
        crossing = std::min(crossing, now + (c.upper - v) / rate);
      else if (v < c.lower || v > c.upper)
        crossing = std::min(crossing, now);
    }
    if (crossing >= end - kEps) continue;

    double at = std::max(now, std::floor(crossing / ctx_.cfg.grid) *
                                  ctx_.cfg.grid);
    // Coordinated drives: stop every sibling at the same instant.
    std::vector<TaskInstance*> targets{&r};
    if (!r.parent.empty())
      for (auto& sib : plan_.tasks)
        if (sib.parent == r.parent && sib.id != r.id &&
            sib.status == Status::Executing)
          targets.push_back(&sib);
    for (TaskInstance* d : targets) {
      const TaskTemplate* dt = net_.find_task(d->template_id);
      if (!dt || dt->stop_task.empty()) continue;
      for (auto& s : plan_.tasks) {
        if (s.template_id != dt->stop_task ||
            s.status != Status::Unscheduled)
          continue;
        const TaskTemplate* st = net_.find_task(dt->stop_task);
        s.status = Status::Scheduled;
        s.scheduled_start = at;
        s.scheduled_end = at + (st ? st->expected_duration : 5.0);
        s.scheduled_duration = s.scheduled_end - s.scheduled_start;
        s.stop_target = d->id;
        d->scheduled_end = at;  // predicted halt
        d->scheduled_duration = at - (d->actual_start.value_or(
                                         d->scheduled_start));
        break;
      }
    }
  }
}

void Planner::replan(const ReplanTrigger& trigger, const StateSnapshot& snap,
                     SimTime now) {
  (void)trigger;
  spawn_retries();
  window_.start = now;
  Plan next = plan_priority_insertion(net_, std::move(plan_.tasks), snap,
                                      window_, ctx_);
  plan_ = std::move(next);
  planned_once_ = true;
}

TickResult Planner::tick(const StateSnapshot& snap,
                         const std::vector<msg::TaskStatusReport>& reports,
                         SimTime now) {
  if (!active_) throw std::logic_error("planner is not active");
  TickResult res;
  window_.start = now;
  plan_.window.start = now;

  for (const auto& r : reports) apply_report(r, now, res.triggers);
  detect_milestones(snap, now, res.triggers);
  presume_lost_commits(now, res.triggers);

  // A scheduled (uncommitted) start slipping into the past means its commit
  // was held back past the window; replan to find it a new slot.
  for (const auto& r : plan_.tasks)
    if (r.status == Status::Scheduled &&
        r.scheduled_start + ctx_.cfg.max_start_delay < now - kEps)
      res.triggers.push_back(
          {ReplanTrigger::Kind::CommitWindowPass, r.id, now});

  if (planned_once_) {
    auto conflicts = plan_conflicts(net_, plan_, snap, now, ctx_);
    for (const auto& c : conflicts)
      res.triggers.push_back({ReplanTrigger::Kind::ConflictDetected, c, now});
  }

  if (!planned_once_ || !res.triggers.empty()) {
    replan(res.triggers.empty()
               ? ReplanTrigger{ReplanTrigger::Kind::ConflictDetected,
                               "initial", now}
               : res.triggers.front(),
           snap, now);
    res.replanned = true;
  }

  schedule_predictive_stops(snap, now);
  res.commits = commit_due_tasks(net_, plan_, now, ctx_);
  return res;
}

}  // namespace psesim::sched
