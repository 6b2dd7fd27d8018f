#include "psesim/tasknet.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace psesim::tasknet {

namespace {

// Priority bands for the generated networks. Cycle k tasks sit 10 below
// cycle k-1 so earlier cycles are always considered first.
constexpr int kPrioritySleep = 1000;
constexpr int kPriorityStop = 900;
constexpr int kPrioritySync = 500;
constexpr int kPriorityBackup = 450;
constexpr int kPriorityPlanning = 400;
constexpr int kPriorityDrive = 300;
constexpr int kCycleStep = 10;

constexpr double kTempFloor = -100.0;

}  // namespace

const char* status_name(Status s) {
  switch (s) {
    case Status::Unscheduled: return "unscheduled";
    case Status::Scheduled: return "scheduled";
    case Status::Committed: return "committed";
    case Status::Executing: return "executing";
    case Status::Completed: return "completed";
    case Status::Failed: return "failed";
    case Status::Aborted: return "aborted";
    case Status::Dropped: return "dropped";
  }
  return "?";
}

bool status_transition_allowed(Status from, Status to) {
  switch (from) {
    case Status::Unscheduled:
      return to == Status::Scheduled;
    case Status::Scheduled:
      return to == Status::Committed || to == Status::Unscheduled;
    case Status::Committed:
      return to == Status::Executing || to == Status::Dropped ||
             to == Status::Failed;
    case Status::Executing:
      return to == Status::Completed || to == Status::Failed ||
             to == Status::Aborted;
    default:
      return false;
  }
}

const char* pred_outcome_name(PredOutcome o) {
  switch (o) {
    case PredOutcome::Completed: return "completed";
    case PredOutcome::Stopped: return "stopped";
    case PredOutcome::Failed: return "failed";
    case PredOutcome::Aborted: return "aborted";
    case PredOutcome::Dropped: return "dropped";
  }
  return "?";
}

PredOutcome TaskInstance::outcome() const {
  switch (status) {
    case Status::Completed:
      return stopped_early ? PredOutcome::Stopped : PredOutcome::Completed;
    case Status::Failed: return PredOutcome::Failed;
    case Status::Aborted: return PredOutcome::Aborted;
    default: return PredOutcome::Dropped;
  }
}

std::string Executor::str() const {
  switch (kind) {
    case ExecutorKind::Leader: return "@LEADER";
    case ExecutorKind::Survivor: return "@SURVIVOR";
    case ExecutorKind::Agent: return agent;
  }
  return "?";
}

const char* mode_name(Mode m) {
  switch (m) {
    case Mode::Idle: return "idle";
    case Mode::Sync: return "sync";
    case Mode::Planning: return "planning";
    case Mode::Driving: return "driving";
    case Mode::LowPower: return "low-power";
  }
  return "?";
}

bool modes_conflict(Mode a, Mode b) {
  if (a == Mode::Idle || b == Mode::Idle) return false;
  if ((a == Mode::Sync && b == Mode::Planning) ||
      (a == Mode::Planning && b == Mode::Sync))
    return false;
  return true;
}

const char* category_name(TaskCategory c) {
  switch (c) {
    case TaskCategory::Generic: return "generic";
    case TaskCategory::MapSync: return "map-sync";
    case TaskCategory::Backup: return "backup";
    case TaskCategory::ExplorePlanning: return "explore-planning";
    case TaskCategory::FormationPlanning: return "formation-planning";
    case TaskCategory::ExploreDrive: return "explore-drive";
    case TaskCategory::FormationParent: return "formation-parent";
    case TaskCategory::FormationDrive: return "formation-drive";
    case TaskCategory::Stop: return "stop";
    case TaskCategory::Sleep: return "sleep";
  }
  return "?";
}

std::string Constraint::str() const {
  std::ostringstream os;
  switch (scope) {
    case ConstraintScope::PreExecution: os << "pre "; break;
    case ConstraintScope::Maintenance: os << "maint "; break;
    case ConstraintScope::Precedence: os << "prec "; break;
  }
  if (scope == ConstraintScope::Precedence) {
    os << predecessor << "{";
    bool first = true;
    for (PredOutcome o : accept) {
      if (!first) os << ",";
      os << pred_outcome_name(o);
      first = false;
    }
    os << "}";
  } else {
    os << variable.str();
    if (allowed.empty()) {
      os << " in [" << lower << "," << upper << "]";
    } else {
      os << " in {";
      bool first = true;
      for (bool v : allowed) {
        if (!first) os << ",";
        os << (v ? "true" : "false");
        first = false;
      }
      os << "}";
    }
  }
  return os.str();
}

TaskId make_instance_id(const std::string& template_id, int index, int epoch) {
  return template_id + "#" + std::to_string(index) + "@e" + std::to_string(epoch);
}

const TaskTemplate* TaskNetwork::find_task(const std::string& id) const {
  for (const auto& t : tasks) {
    if (t.id == id) return &t;
    for (const auto& sub : t.decomposition)
      if (sub.id == id) return &sub;
  }
  return nullptr;
}

const StateVariable* TaskNetwork::find_variable(const VarRef& ref) const {
  for (const auto& v : variables)
    if (v.ref == ref) return &v;
  return nullptr;
}

std::vector<AgentId> TaskNetwork::rovers() const {
  std::vector<AgentId> out;
  for (const auto& a : agents)
    if (a.role == AgentRole::Rover) out.push_back(a.id);
  return out;
}

std::vector<AgentId> TaskNetwork::base_stations() const {
  std::vector<AgentId> out;
  for (const auto& a : agents)
    if (a.role == AgentRole::BaseStation) out.push_back(a.id);
  return out;
}

// ---------------------------------------------------------------------------
// Validation

namespace {

// Owner token on LEADER/SURVIVOR task refs that resolves to the executing
// agent at planning time.
bool is_executor_token(const AgentId& owner) { return owner == "@executor"; }

bool var_resolves(const TaskNetwork& net, const VarRef& ref) {
  if (is_executor_token(ref.owner)) {
    for (const auto& v : net.variables)
      if (v.ref.name == ref.name) return true;
    return false;
  }
  return net.find_variable(ref) != nullptr;
}

std::string impact_key(const Impact& im) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", im.amount);
  return im.variable.str() + "|" + std::to_string(int(im.model)) + "|" + buf +
         "|" + (im.flag_value ? "t" : "f");
}

std::string constraint_key(const Constraint& c) {
  std::ostringstream os;
  os << int(c.scope) << "|" << c.variable.str() << "|" << c.lower << "|"
     << c.upper << "|";
  for (bool v : c.allowed) os << (v ? 't' : 'f');
  return os.str();
}

bool team_flag_impacted_by(const TaskTemplate& parent, const VarRef& ref) {
  if (ref.owner != kTeamOwner) return false;
  for (const auto& im : parent.impacts)
    if (im.variable == ref) return true;
  return false;
}

}  // namespace

ValidationReport validate_network(const TaskNetwork& net) {
  ValidationReport report;
  auto add = [&](std::string kind, std::string detail) {
    report.findings.push_back({std::move(kind), std::move(detail)});
  };

  std::set<std::string> ids;
  std::vector<const TaskTemplate*> all;
  for (const auto& t : net.tasks) {
    all.push_back(&t);
    for (const auto& sub : t.decomposition) all.push_back(&sub);
  }
  for (const TaskTemplate* t : all) {
    if (!ids.insert(t->id).second) add("duplicate", "duplicate task id " + t->id);
    if (t->expected_duration <= 0)
      add("bad-count", t->id + ": duration must be > 0");
    if (t->instance_count < 1)
      add("bad-count", t->id + ": instance-count must be >= 1");
  }

  std::set<AgentId> agent_ids;
  for (const auto& a : net.agents) agent_ids.insert(a.id);

  for (const TaskTemplate* t : all) {
    for (const auto& c : t->constraints) {
      if (c.scope == ConstraintScope::Precedence) {
        if (!ids.count(c.predecessor))
          add("dangling-ref",
              t->id + ": precedence on unknown task " + c.predecessor);
        continue;
      }
      if (!var_resolves(net, c.variable))
        add("dangling-ref",
            t->id + ": constraint on unknown variable " + c.variable.str());
      // Locus consistency: multi-agent refs must be foreign or team-shared.
      bool foreign = c.variable.owner == kTeamOwner ||
                     t->executor.kind != ExecutorKind::Agent ||
                     (!is_executor_token(c.variable.owner) &&
                      c.variable.owner != t->executor.agent);
      if (c.locus == ConstraintLocus::MultiAgent && !foreign)
        add("locus", t->id + ": multi-agent constraint on own variable " +
                         c.variable.str());
      if (c.locus == ConstraintLocus::Local &&
          c.variable.owner == kTeamOwner)
        add("locus", t->id + ": local constraint on team variable " +
                         c.variable.str());
    }
    for (const auto& im : t->impacts) {
      if (!var_resolves(net, im.variable))
        add("dangling-ref",
            t->id + ": impact on unknown variable " + im.variable.str());
      if (im.model == ImpactModel::LinearRate) {
        const StateVariable* v = net.find_variable(im.variable);
        if (v && v->kind != VarKind::Continuous)
          add("bad-count", t->id + ": linear-rate impact on flag variable " +
                               im.variable.str());
      }
    }
  }

  // Precedence cycles over top-level templates.
  {
    std::map<std::string, std::vector<std::string>> succ;
    for (const auto& t : net.tasks)
      for (const auto& c : t.constraints)
        if (c.scope == ConstraintScope::Precedence)
          succ[c.predecessor].push_back(t.id);
    std::map<std::string, int> mark;  // 0 unseen, 1 on stack, 2 done
    std::vector<std::string> stack;
    std::function<void(const std::string&)> dfs = [&](const std::string& id) {
      mark[id] = 1;
      stack.push_back(id);
      for (const auto& nx : succ[id]) {
        if (mark[nx] == 1) {
          auto it = std::find(stack.begin(), stack.end(), nx);
          std::string cyc;
          for (; it != stack.end(); ++it) cyc += *it + " ";
          add("precedence-cycle", "cycle: " + cyc + nx);
        } else if (mark[nx] == 0) {
          dfs(nx);
        }
      }
      stack.pop_back();
      mark[id] = 2;
    };
    for (const auto& t : net.tasks)
      if (mark[t.id] == 0) dfs(t.id);
  }

  // Parent/subtask hierarchy: constraints superset, impacts equal, modulo
  // the team-shared flags the parent itself writes (the coordination
  // mechanism, created by the parent's own start impact).
  for (const auto& t : net.tasks) {
    if (!t.has_decomposition()) continue;
    std::multiset<std::string> parent_imp, union_imp;
    for (const auto& im : t.impacts)
      if (im.variable.owner != kTeamOwner) parent_imp.insert(impact_key(im));
    std::set<std::string> parent_cons;
    for (const auto& c : t.constraints)
      if (c.scope != ConstraintScope::Precedence)
        parent_cons.insert(constraint_key(c));
    for (const auto& sub : t.decomposition) {
      if (!sub.pinned_to_parent)
        add("hierarchy", t.id + ": subtask " + sub.id + " not pinned to parent");
      for (const auto& im : sub.impacts)
        if (im.variable.owner != kTeamOwner) union_imp.insert(impact_key(im));
      for (const auto& c : sub.constraints) {
        if (c.scope == ConstraintScope::Precedence) continue;
        if (team_flag_impacted_by(t, c.variable)) continue;
        if (!parent_cons.count(constraint_key(c)))
          add("hierarchy", t.id + ": missing subtask constraint of " + sub.id +
                               ": " + c.str());
      }
    }
    if (parent_imp != union_imp)
      add("hierarchy", t.id + ": impacts differ from union of subtask impacts");
  }

  return report;
}

// ---------------------------------------------------------------------------
// Instance expansion

std::vector<TaskInstance> expand_instances(const TaskNetwork& net, int epoch) {
  ValidationReport report = validate_network(net);
  if (!report.ok()) {
    std::string what = "network failed validation: ";
    for (const auto& f : report.findings) what += f.kind + " (" + f.detail + "); ";
    throw std::invalid_argument(what);
  }
  std::vector<TaskInstance> out;
  for (const auto& t : net.tasks) {
    for (int i = 0; i < t.instance_count; ++i) {
      TaskInstance inst;
      inst.id = make_instance_id(t.id, i, epoch);
      inst.template_id = t.id;
      inst.index = i;
      inst.epoch = epoch;
      out.push_back(std::move(inst));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Builders

std::vector<std::vector<AgentId>> participation_subsets(
    const std::vector<AgentId>& rovers) {
  if (rovers.empty())
    throw std::invalid_argument("participation_subsets: empty rover list");
  std::vector<AgentId> sorted = rovers;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::vector<AgentId>> subsets;
  const std::size_t n = sorted.size();
  for (std::size_t bits = 1; bits < (1u << n); ++bits) {
    std::vector<AgentId> s;
    for (std::size_t i = 0; i < n; ++i)
      if (bits & (1u << i)) s.push_back(sorted[i]);
    subsets.push_back(std::move(s));
  }
  std::sort(subsets.begin(), subsets.end(),
            [](const auto& a, const auto& b) {
              if (a.size() != b.size()) return a.size() > b.size();
              return a < b;
            });
  return subsets;
}

namespace {

void check_team(const std::vector<AgentDecl>& agents, int cycles) {
  int rovers = 0, bases = 0;
  for (const auto& a : agents)
    (a.role == AgentRole::Rover ? rovers : bases)++;
  if (rovers < 1) throw std::invalid_argument("need at least one rover");
  if (bases != 1) throw std::invalid_argument("need exactly one base station");
  if (cycles < 1) throw std::invalid_argument("cycles must be >= 1");
}

void add_common_variables(TaskNetwork& net, const BuilderConfig&) {
  for (const auto& a : net.agents) {
    if (a.role == AgentRole::Rover) {
      net.variables.push_back({{a.id, "soc"}, VarKind::Continuous, "percent",
                               0.0, 100.0, {}});
    }
    net.variables.push_back({{a.id, "cpu_temp"}, VarKind::Continuous, "degC",
                             kTempFloor, 150.0, {}});
    net.variables.push_back(
        {{a.id, "participating"}, VarKind::Flag, "bool", 0, 0, {true, false}});
    net.variables.push_back(
        {{a.id, "awake"}, VarKind::Flag, "bool", 0, 0, {true, false}});
  }
}

Constraint pre_flag(const VarRef& var, bool value, ConstraintLocus locus) {
  Constraint c;
  c.scope = ConstraintScope::PreExecution;
  c.locus = locus;
  c.variable = var;
  c.allowed = {value};
  return c;
}

Constraint maint_flag(const VarRef& var, bool value, ConstraintLocus locus) {
  Constraint c = pre_flag(var, value, locus);
  c.scope = ConstraintScope::Maintenance;
  return c;
}

Constraint range_constraint(ConstraintScope scope, const VarRef& var, double lo,
                            double hi, ConstraintLocus locus) {
  Constraint c;
  c.scope = scope;
  c.locus = locus;
  c.variable = var;
  c.lower = lo;
  c.upper = hi;
  return c;
}

Constraint precedence_on(const std::string& pred,
                         std::set<PredOutcome> accept = {
                             PredOutcome::Completed}) {
  Constraint c;
  c.scope = ConstraintScope::Precedence;
  c.predecessor = pred;
  c.accept = std::move(accept);
  return c;
}

Impact rate_impact(const VarRef& var, double rate) {
  Impact im;
  im.variable = var;
  im.model = ImpactModel::LinearRate;
  im.amount = rate;
  return im;
}

Impact flag_impact(const VarRef& var, bool value, ImpactModel when) {
  Impact im;
  im.variable = var;
  im.model = when;
  im.flag_value = value;
  return im;
}

std::string cyc(const std::string& base, int cycle) {
  return base + "_c" + std::to_string(cycle);
}

// Resource-envelope constraints shared by every drive on a rover.
void add_drive_envelope(TaskTemplate& t, const AgentId& rover,
                        const BuilderConfig& cfg, ConstraintLocus locus) {
  t.constraints.push_back(range_constraint(ConstraintScope::PreExecution,
                                           {rover, "soc"}, cfg.soc_floor, 100.0,
                                           locus));
  t.constraints.push_back(range_constraint(ConstraintScope::Maintenance,
                                           {rover, "soc"}, cfg.soc_floor, 100.0,
                                           locus));
  t.constraints.push_back(range_constraint(ConstraintScope::PreExecution,
                                           {rover, "cpu_temp"}, kTempFloor,
                                           cfg.temp_limit, locus));
  t.constraints.push_back(range_constraint(ConstraintScope::Maintenance,
                                           {rover, "cpu_temp"}, kTempFloor,
                                           cfg.temp_limit, locus));
}

void add_drive_impacts(TaskTemplate& t, const AgentId& rover,
                       const BuilderConfig& cfg) {
  if (cfg.drive_soc_rate != 0)
    t.impacts.push_back(rate_impact({rover, "soc"}, cfg.drive_soc_rate));
  if (cfg.drive_temp_rate != 0)
    t.impacts.push_back(rate_impact({rover, "cpu_temp"}, cfg.drive_temp_rate));
}

TaskTemplate make_sync(const AgentId& rover, int cycle,
                       const BuilderConfig& cfg) {
  TaskTemplate t;
  t.id = cyc("sync", cycle) + "_" + rover;
  t.executor = Executor::on(rover);
  t.priority = kPrioritySync - kCycleStep * (cycle - 1);
  t.expected_duration = cfg.sync_duration;
  t.command = "ssdb_map_sync";
  t.mode = Mode::Sync;
  t.category = TaskCategory::MapSync;
  t.retry_budget = 2;
  t.constraints.push_back(
      pre_flag({rover, "participating"}, true, ConstraintLocus::Local));
  if (cfg.sync_soc_rate != 0)
    t.impacts.push_back(rate_impact({rover, "soc"}, cfg.sync_soc_rate));
  if (cfg.sync_temp_rate != 0)
    t.impacts.push_back(rate_impact({rover, "cpu_temp"}, cfg.sync_temp_rate));
  return t;
}

TaskTemplate make_backup(int cycle, const std::vector<AgentId>& rovers,
                         const BuilderConfig& cfg) {
  TaskTemplate t;
  t.id = cyc("backup", cycle);
  t.executor = Executor::survivor();
  t.priority = kPriorityBackup - kCycleStep * (cycle - 1);
  t.expected_duration = cfg.backup_duration;
  t.command = "ssdb_backup";
  t.mode = Mode::Sync;
  t.category = TaskCategory::Backup;
  for (const auto& r : rovers)
    t.constraints.push_back(precedence_on(cyc("sync", cycle) + "_" + r));
  return t;
}

TaskTemplate make_planning(int cycle, const std::vector<AgentId>& rovers,
                           TaskCategory category, const std::string& command,
                           const BuilderConfig& cfg) {
  TaskTemplate t;
  t.id = cyc("plan", cycle);
  t.executor = Executor::leader();
  t.priority = kPriorityPlanning - kCycleStep * (cycle - 1);
  t.expected_duration = cfg.planning_duration;
  t.command = command;
  t.mode = Mode::Planning;
  t.category = category;
  t.retry_budget = 2;
  for (const auto& r : rovers)
    t.constraints.push_back(precedence_on(cyc("sync", cycle) + "_" + r));
  if (cfg.planning_soc_rate != 0)
    t.impacts.push_back(rate_impact({"@executor", "soc"}, cfg.planning_soc_rate));
  if (cfg.planning_temp_rate != 0)
    t.impacts.push_back(
        rate_impact({"@executor", "cpu_temp"}, cfg.planning_temp_rate));
  return t;
}

TaskTemplate make_stop(const AgentId& rover, int cycle,
                       const BuilderConfig& cfg) {
  TaskTemplate t;
  t.id = cyc("stop", cycle) + "_" + rover;
  t.executor = Executor::on(rover);
  t.priority = kPriorityStop - kCycleStep * (cycle - 1);
  t.expected_duration = cfg.stop_duration;
  t.command = "stop_drive";
  t.mode = Mode::Idle;  // command-only, co-runs with the drive it halts
  t.category = TaskCategory::Stop;
  return t;
}

TaskTemplate make_sleep(const AgentId& agent, const BuilderConfig& cfg) {
  TaskTemplate t;
  t.id = "sleep_" + agent;
  t.executor = Executor::on(agent);
  t.priority = kPrioritySleep;
  t.preferred_start = cfg.window_end - cfg.sleep_duration;
  t.expected_duration = cfg.sleep_duration;
  t.command = "shutdown_prep";
  t.mode = Mode::LowPower;
  t.category = TaskCategory::Sleep;
  t.impacts.push_back(
      flag_impact({agent, "awake"}, false, ImpactModel::DeltaAtEnd));
  return t;
}

}  // namespace

TaskNetwork build_exploration_network(const std::vector<AgentDecl>& agents,
                                      double region_size, int cycles,
                                      const BuilderConfig& cfg) {
  check_team(agents, cycles);
  TaskNetwork net;
  net.name = "exploration";
  net.agents = agents;
  add_common_variables(net, cfg);
  net.variables.push_back({{kTeamOwner, "explore_complete"}, VarKind::Flag,
                           "bool", 0, 0, {true, false}});
  std::vector<AgentId> rovers = net.rovers();
  std::sort(rovers.begin(), rovers.end());

  for (int c = 1; c <= cycles; ++c) {
    for (const auto& r : rovers) {
      TaskTemplate sync = make_sync(r, c, cfg);
      if (c > 1)
        sync.constraints.push_back(
            precedence_on(cyc("drive", c - 1) + "_" + r,
                          {PredOutcome::Completed, PredOutcome::Stopped}));
      net.tasks.push_back(std::move(sync));
    }
    net.tasks.push_back(make_backup(c, rovers, cfg));
    net.tasks.push_back(make_planning(c, rovers, TaskCategory::ExplorePlanning,
                                      "explore_nav_plan", cfg));
    for (const auto& r : rovers) {
      TaskTemplate drive;
      drive.id = cyc("drive", c) + "_" + r;
      drive.executor = Executor::on(r);
      drive.priority = kPriorityDrive - kCycleStep * (c - 1);
      drive.expected_duration = cfg.drive_duration;
      drive.command = "drive_explore";
      drive.cleanup_command = "stop_motors";
      drive.mode = Mode::Driving;
      drive.category = TaskCategory::ExploreDrive;
      drive.retry_budget = 2;
      drive.stoppable = true;
      drive.stop_task = cyc("stop", c) + "_" + r;
      drive.constraints.push_back(
          pre_flag({r, "participating"}, true, ConstraintLocus::Local));
      add_drive_envelope(drive, r, cfg, ConstraintLocus::Local);
      drive.constraints.push_back(precedence_on(cyc("plan", c)));
      if (c > 1)
        drive.constraints.push_back(
            precedence_on(cyc("drive", c - 1) + "_" + r,
                          {PredOutcome::Completed, PredOutcome::Stopped}));
      add_drive_impacts(drive, r, cfg);
      net.tasks.push_back(std::move(drive));
      net.tasks.push_back(make_stop(r, c, cfg));
    }
  }
  for (const auto& a : net.agents) net.tasks.push_back(make_sleep(a.id, cfg));
  net.metadata["region_size"] = region_size;
  net.metadata["cycles"] = cycles;
  return net;
}

TaskNetwork build_formation_network(const std::vector<AgentDecl>& agents,
                                    int cycles, const BuilderConfig& cfg) {
  check_team(agents, cycles);
  TaskNetwork net;
  net.name = "formation";
  net.agents = agents;
  add_common_variables(net, cfg);
  net.variables.push_back({{kTeamOwner, "coordinated"}, VarKind::Flag, "bool",
                           0, 0, {true, false}});
  net.variables.push_back({{kTeamOwner, "formation_complete"}, VarKind::Flag,
                           "bool", 0, 0, {true, false}});
  std::vector<AgentId> rovers = net.rovers();
  std::sort(rovers.begin(), rovers.end());

  const auto subsets = participation_subsets(rovers);

  for (int c = 1; c <= cycles; ++c) {
    for (const auto& r : rovers) net.tasks.push_back(make_sync(r, c, cfg));
    net.tasks.push_back(make_backup(c, rovers, cfg));
    net.tasks.push_back(make_planning(c, rovers,
                                      TaskCategory::FormationPlanning,
                                      "formation_nav_plan", cfg));

    // One alternate hierarchy per nonempty rover subset. Larger subsets get
    // strictly higher priority so they are tried first.
    for (const auto& subset : subsets) {
      std::string sid;
      for (const auto& r : subset) sid += "_" + r;
      TaskTemplate parent;
      parent.id = cyc("form", c) + sid;
      parent.executor = Executor::leader();
      parent.priority =
          kPriorityDrive - kCycleStep * (c - 1) + int(subset.size());
      parent.expected_duration = cfg.drive_duration;
      parent.command = "formation_drive";
      parent.detail_command = "formation_detail";
      parent.mode = Mode::Idle;  // coordination stub; load is on the rovers
      parent.category = TaskCategory::FormationParent;
      parent.retry_budget = 2;
      parent.stoppable = true;
      parent.clears_coordination = true;
      parent.constraints.push_back(precedence_on(cyc("plan", c)));
      parent.impacts.push_back(flag_impact({kTeamOwner, "coordinated"}, true,
                                           ImpactModel::DeltaAtStart));
      // The parent itself rides on the flag it raises: any member clearing
      // it takes the whole hierarchy down through the leader's watches.
      parent.constraints.push_back(maint_flag({kTeamOwner, "coordinated"},
                                              true,
                                              ConstraintLocus::MultiAgent));
      for (const auto& r : rovers) {
        bool member =
            std::find(subset.begin(), subset.end(), r) != subset.end();
        parent.constraints.push_back(pre_flag({r, "participating"}, member,
                                              ConstraintLocus::MultiAgent));
        if (!member) continue;
        add_drive_envelope(parent, r, cfg, ConstraintLocus::MultiAgent);
        add_drive_impacts(parent, r, cfg);

        TaskTemplate sub;
        sub.id = parent.id + "_" + r;
        sub.executor = Executor::on(r);
        sub.priority = parent.priority;
        sub.expected_duration = parent.expected_duration;
        sub.command = "drive_formation";
        sub.cleanup_command = "stop_motors";
        sub.mode = Mode::Driving;
        sub.category = TaskCategory::FormationDrive;
        sub.pinned_to_parent = true;
        sub.clears_coordination = true;
        sub.stop_task = cyc("stop", c) + "_" + r;
        sub.constraints.push_back(
            pre_flag({r, "participating"}, true, ConstraintLocus::Local));
        add_drive_envelope(sub, r, cfg, ConstraintLocus::Local);
        sub.constraints.push_back(maint_flag({kTeamOwner, "coordinated"}, true,
                                             ConstraintLocus::MultiAgent));
        add_drive_impacts(sub, r, cfg);
        parent.decomposition.push_back(std::move(sub));
      }
      net.tasks.push_back(std::move(parent));
    }
    for (const auto& r : rovers) net.tasks.push_back(make_stop(r, c, cfg));
  }
  for (const auto& a : net.agents) net.tasks.push_back(make_sleep(a.id, cfg));
  net.metadata["cycles"] = cycles;
  return net;
}

}  // namespace psesim::tasknet
