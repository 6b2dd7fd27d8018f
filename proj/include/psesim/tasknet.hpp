#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "psesim/core.hpp"

namespace psesim::tasknet {

// ---------------------------------------------------------------------------
// State variables

enum class VarKind { Continuous, Flag };

// A variable is identified by (owner, name). The pseudo-agent "team" owns
// shared coordination flags that any agent may write.
struct VarRef {
  AgentId owner;
  std::string name;
  auto operator<=>(const VarRef&) const = default;
  std::string str() const { return owner + "." + name; }
};

inline const AgentId kTeamOwner = "team";

struct StateVariable {
  VarRef ref;
  VarKind kind = VarKind::Continuous;
  std::string units;
  double lower = 0.0;           // continuous only
  double upper = 0.0;
  std::set<bool> allowed;       // flag only
};

// ---------------------------------------------------------------------------
// Task status lifecycle

enum class Status {
  Unscheduled,
  Scheduled,
  Committed,
  Executing,
  Completed,
  Failed,
  Aborted,
  Dropped,
};

const char* status_name(Status s);
bool status_transition_allowed(Status from, Status to);
inline bool status_terminal(Status s) {
  return s == Status::Completed || s == Status::Failed || s == Status::Aborted ||
         s == Status::Dropped;
}

// How a finished predecessor is classified by precedence constraints.
// "Stopped" is a completed drive that was halted early by a stop task.
enum class PredOutcome { Completed, Stopped, Failed, Aborted, Dropped };

const char* pred_outcome_name(PredOutcome o);

// ---------------------------------------------------------------------------
// Constraints and impacts

enum class ConstraintScope { PreExecution, Maintenance, Precedence };
enum class ConstraintLocus { Local, MultiAgent };

struct Constraint {
  ConstraintScope scope = ConstraintScope::PreExecution;
  ConstraintLocus locus = ConstraintLocus::Local;

  // State constraint (pre-execution / maintenance).
  VarRef variable;
  double lower = 0.0;   // closed interval for continuous variables
  double upper = 0.0;
  std::set<bool> allowed;  // value set for flags

  // Precedence: predecessor template plus the outcomes that satisfy the edge.
  std::string predecessor;
  std::set<PredOutcome> accept{PredOutcome::Completed};

  std::string str() const;
};

enum class ImpactModel { DeltaAtStart, DeltaAtEnd, LinearRate };

struct Impact {
  VarRef variable;
  ImpactModel model = ImpactModel::LinearRate;
  double amount = 0.0;      // delta value or rate per second (continuous)
  bool flag_value = false;  // value written for flag variables
};

// ---------------------------------------------------------------------------
// Executors and modes

enum class ExecutorKind { Agent, Leader, Survivor };

struct Executor {
  ExecutorKind kind = ExecutorKind::Agent;
  AgentId agent;  // valid when kind == Agent

  static Executor leader() { return {ExecutorKind::Leader, {}}; }
  static Executor survivor() { return {ExecutorKind::Survivor, {}}; }
  static Executor on(AgentId id) { return {ExecutorKind::Agent, std::move(id)}; }
  bool operator==(const Executor&) const = default;
  std::string str() const;
};

// Coarse activity class a task puts its agent in; drives the resource model
// and executor exclusivity.
enum class Mode { Idle, Sync, Planning, Driving, LowPower };

const char* mode_name(Mode m);

// Same-agent overlap rules: driving/planning/low-power are mutually
// exclusive, sync may co-run with planning, idle conflicts with nothing.
bool modes_conflict(Mode a, Mode b);

// What the task means to the mission layer.
enum class TaskCategory {
  Generic,
  MapSync,
  Backup,
  ExplorePlanning,
  FormationPlanning,
  ExploreDrive,
  FormationParent,
  FormationDrive,
  Stop,
  Sleep,
};

const char* category_name(TaskCategory c);

// ---------------------------------------------------------------------------
// Task templates

struct TaskTemplate {
  std::string id;
  Executor executor;
  int priority = 0;                 // larger = considered earlier
  SimTime preferred_start = 0.0;    // wake-relative
  double expected_duration = 0.0;   // seconds
  std::string command;
  std::string cleanup_command;      // empty = none
  std::string detail_command;       // empty = none
  Mode mode = Mode::Idle;
  TaskCategory category = TaskCategory::Generic;
  int instance_count = 1;
  int retry_budget = 0;             // extra instances replan may create
  bool stoppable = false;           // planner may truncate + schedule the stop task
  std::string stop_task;            // template id of the paired stop task
  bool clears_coordination = false; // failure writes coordinated=false
  std::vector<Constraint> constraints;
  std::vector<Impact> impacts;
  std::vector<TaskTemplate> decomposition;  // one level only
  bool pinned_to_parent = false;    // subtask scheduled at exact parent bounds

  bool has_decomposition() const { return !decomposition.empty(); }
};

// ---------------------------------------------------------------------------
// Task instances

struct TaskInstance {
  TaskId id;
  std::string template_id;
  int index = 0;
  int epoch = -1;  // leadership generation that created the instance
  Status status = Status::Unscheduled;
  SimTime scheduled_start = 0.0;
  SimTime scheduled_end = 0.0;
  double scheduled_duration = 0.0;  // may be shorter than template duration
  std::optional<SimTime> actual_start;
  std::optional<SimTime> actual_end;
  bool stopped_early = false;
  std::string parent;  // parent instance id for decomposition children
  TaskId stop_target;  // stop tasks: the drive instance this stop halts

  PredOutcome outcome() const;
};

TaskId make_instance_id(const std::string& template_id, int index, int epoch);

// ---------------------------------------------------------------------------
// Networks

struct AgentDecl {
  AgentId id;
  AgentRole role = AgentRole::Rover;
};

struct TaskNetwork {
  std::string name;
  std::vector<AgentDecl> agents;
  std::vector<StateVariable> variables;
  std::vector<TaskTemplate> tasks;  // top-level templates
  std::map<std::string, double> metadata;  // builder knobs (region size, cycles)

  const TaskTemplate* find_task(const std::string& id) const;
  const StateVariable* find_variable(const VarRef& ref) const;
  std::vector<AgentId> rovers() const;
  std::vector<AgentId> base_stations() const;
};

// ---------------------------------------------------------------------------
// Validation

struct ValidationFinding {
  std::string kind;  // dangling-ref | precedence-cycle | hierarchy | duplicate
                     // | bad-count | locus
  std::string detail;
};

struct ValidationReport {
  std::vector<ValidationFinding> findings;
  bool ok() const { return findings.empty(); }
};

ValidationReport validate_network(const TaskNetwork& net);

// ---------------------------------------------------------------------------
// Instance expansion

// One instance per (template, index < instance_count), all Unscheduled.
// Throws std::invalid_argument if the network fails validation.
std::vector<TaskInstance> expand_instances(const TaskNetwork& net, int epoch = 0);

// ---------------------------------------------------------------------------
// Builders

// Numeric knobs for the generated mission networks. Rates are increments
// over the idle baseline, already folded from the environment tables by the
// scenario layer.
struct BuilderConfig {
  double sync_duration = 30.0;
  double backup_duration = 20.0;
  double planning_duration = 60.0;
  double drive_duration = 300.0;
  double stop_duration = 5.0;
  double sleep_duration = 60.0;
  SimTime window_end = 1500.0;  // wake-relative shutdown time

  // Incremental resource rates (over idle) per activity, %SOC/s and degC/s.
  double sync_soc_rate = -0.002;
  double sync_temp_rate = 0.0;
  double planning_soc_rate = -0.004;
  double planning_temp_rate = 0.005;
  double drive_soc_rate = -0.01;
  double drive_temp_rate = 0.02;

  double soc_floor = 20.0;
  double temp_limit = 65.0;
};

// All nonempty subsets, descending size, ties by lexicographic member lists.
// Throws std::invalid_argument on an empty rover list.
std::vector<std::vector<AgentId>> participation_subsets(
    const std::vector<AgentId>& rovers);

TaskNetwork build_exploration_network(const std::vector<AgentDecl>& agents,
                                      double region_size, int cycles,
                                      const BuilderConfig& cfg = {});

TaskNetwork build_formation_network(const std::vector<AgentDecl>& agents,
                                    int cycles, const BuilderConfig& cfg = {});

// ---------------------------------------------------------------------------
// Line-oriented serialization (golden-file format, field order fixed; see
// docs/formats.md)

std::string serialize_network(const TaskNetwork& net);
TaskNetwork parse_network(const std::string& text);  // throws ParseError

struct ParseError : std::runtime_error {
  int line;
  ParseError(int line_, const std::string& what)
      : std::runtime_error("line " + std::to_string(line_) + ": " + what),
        line(line_) {}
};

}  // namespace psesim::tasknet
