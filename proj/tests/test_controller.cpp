#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <array>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "psesim/controller.hpp"
#include "psesim/tasknet.hpp"

using namespace psesim;
using namespace psesim::ctrl;
using tasknet::Constraint;
using tasknet::ConstraintLocus;
using tasknet::ConstraintScope;
using tasknet::Impact;
using tasknet::ImpactModel;
using tasknet::Mode;
using tasknet::Status;
using tasknet::TaskCategory;
using tasknet::TaskNetwork;
using tasknet::TaskTemplate;
using tasknet::VarKind;
using tasknet::VarRef;

namespace {

Constraint range(ConstraintScope scope, const VarRef& v, double lo, double hi) {
  Constraint c;
  c.scope = scope;
  c.variable = v;
  c.lower = lo;
  c.upper = hi;
  return c;
}

TaskNetwork make_net() {
  TaskNetwork net;
  net.name = "ctl";
  net.agents = {{"A", AgentRole::Rover}};
  net.variables.push_back({{"A", "soc"}, VarKind::Continuous, "%", 0, 100, {}});
  net.variables.push_back(
      {{"A", "cpu_temp"}, VarKind::Continuous, "degC", -100, 150, {}});
  net.variables.push_back({{tasknet::kTeamOwner, "coordinated"}, VarKind::Flag,
                           "bool", 0, 0, {true, false}});

  TaskTemplate drv;
  drv.id = "drv";
  drv.executor = tasknet::Executor::on("A");
  drv.expected_duration = 60;
  drv.command = "drive";
  drv.cleanup_command = "stop_motors";
  drv.mode = Mode::Driving;
  drv.constraints.push_back(
      range(ConstraintScope::PreExecution, {"A", "soc"}, 20, 100));
  drv.constraints.push_back(
      range(ConstraintScope::Maintenance, {"A", "cpu_temp"}, -100, 65));
  net.tasks.push_back(drv);

  TaskTemplate drv5 = drv;
  drv5.id = "drv5";
  drv5.expected_duration = 5;
  net.tasks.push_back(drv5);

  TaskTemplate sync;
  sync.id = "syncT";
  sync.executor = tasknet::Executor::on("A");
  sync.expected_duration = 10;
  sync.command = "sync";
  sync.mode = Mode::Sync;
  net.tasks.push_back(sync);

  TaskTemplate stop;
  stop.id = "stopT";
  stop.executor = tasknet::Executor::on("A");
  stop.expected_duration = 5;
  stop.command = "halt";
  stop.mode = Mode::Driving;
  stop.category = TaskCategory::Stop;
  net.tasks.push_back(stop);

  TaskTemplate sleep;
  sleep.id = "slp";
  sleep.executor = tasknet::Executor::on("A");
  sleep.expected_duration = 60;
  sleep.command = "sleep";
  sleep.mode = Mode::LowPower;
  sleep.category = TaskCategory::Sleep;
  net.tasks.push_back(sleep);

  // Formation-parent stand-in: raises the team flag at start.
  TaskTemplate par;
  par.id = "par";
  par.executor = tasknet::Executor::on("A");
  par.expected_duration = 30;
  par.command = "coordinate";
  par.mode = Mode::Idle;
  Impact raise;
  raise.variable = {tasknet::kTeamOwner, "coordinated"};
  raise.model = ImpactModel::DeltaAtStart;
  raise.flag_value = true;
  par.impacts.push_back(raise);
  net.tasks.push_back(par);

  // Formation-sub stand-in: local envelope, clears the flag on failure. The
  // multi-agent maintenance constraint must be ignored locally.
  TaskTemplate sub;
  sub.id = "subT";
  sub.executor = tasknet::Executor::on("A");
  sub.expected_duration = 30;
  sub.command = "drive_formation";
  sub.cleanup_command = "stop_motors";
  sub.mode = Mode::Driving;
  sub.clears_coordination = true;
  sub.constraints.push_back(
      range(ConstraintScope::Maintenance, {"A", "soc"}, 20, 100));
  Constraint ma;
  ma.scope = ConstraintScope::Maintenance;
  ma.locus = ConstraintLocus::MultiAgent;
  ma.variable = {tasknet::kTeamOwner, "coordinated"};
  ma.allowed = {true};
  sub.constraints.push_back(ma);
  net.tasks.push_back(sub);

  return net;
}

struct Rig {
  TaskNetwork net;
  std::map<VarRef, double> num;
  std::map<VarRef, bool> flag;
  std::vector<msg::TaskStatusReport> reports;
  std::vector<msg::ControllerReady> acks;
  // Unified ordered stream: controller trace records plus report markers, so
  // cross-stream ordering (cleanup before terminal report) is checkable.
  std::vector<std::array<std::string, 3>> events;
  std::map<std::string, ExecBehavior> behave;  // by template id
  std::unique_ptr<Controller> c;

  Rig() : net(make_net()) {
    num[{"A", "soc"}] = 50;
    num[{"A", "cpu_temp"}] = 30;
    ControllerHooks h;
    h.report = [this](const msg::TaskStatusReport& r) {
      reports.push_back(r);
      events.push_back({std::string("report-") + tasknet::status_name(r.status),
                        r.instance_id, r.detail});
    };
    h.ack = [this](const msg::ControllerReady& r) { acks.push_back(r); };
    h.trace = [this](const std::string& k, const TaskId& id,
                     const std::string& d) {
      events.push_back({k, id, d});
    };
    h.read_number = [this](const VarRef& v) -> std::optional<double> {
      auto it = num.find(v);
      if (it == num.end()) return std::nullopt;
      return it->second;
    };
    h.read_flag = [this](const VarRef& v) -> std::optional<bool> {
      auto it = flag.find(v);
      if (it == flag.end()) return std::nullopt;
      return it->second;
    };
    h.write_flag = [this](const VarRef& v, bool b) { flag[v] = b; };
    h.behavior = [this](const TaskId&, const std::string& tpl) {
      auto it = behave.find(tpl);
      return it == behave.end() ? ExecBehavior{} : it->second;
    };
    c = std::make_unique<Controller>("A", net, ControllerConfig{}, h);
    c->handle_leader_change("L", 0, 0.0);
  }

  msg::CommitTask mk(const std::string& tpl, int idx, double s, double e,
                     const TaskId& stop_target = "", int epoch = 0) {
    msg::CommitTask m;
    m.epoch = epoch;
    m.instance_id = tasknet::make_instance_id(tpl, idx, epoch);
    m.template_id = tpl;
    m.executor = "A";
    m.start = s;
    m.end = e;
    m.stop_target = stop_target;
    return m;
  }

  const msg::TaskStatusReport* report_of(const TaskId& id, Status s) const {
    for (const auto& r : reports)
      if (r.instance_id == id && r.status == s) return &r;
    return nullptr;
  }
  int report_count(const TaskId& id) const {
    int n = 0;
    for (const auto& r : reports) n += r.instance_id == id;
    return n;
  }
  int event_index(const std::string& kind, const TaskId& id) const {
    for (size_t i = 0; i < events.size(); ++i)
      if (events[i][0] == kind && events[i][1] == id) return int(i);
    return -1;
  }
};

}  // namespace

TEST_CASE("early commit waits and starts exactly on schedule") {
  Rig g;
  CHECK(g.acks.size() == 1);  // no tasks -> immediate ack for epoch 0
  CHECK(g.acks[0].epoch == 0);
  CHECK(g.c->ready());

  g.c->receive_commit(g.mk("drv", 0, 5, 65), 2.0);
  CHECK(g.c->tasks().size() == 1);
  CHECK(g.reports.empty());

  for (int t = 2; t <= 4; ++t) g.c->tick(t);
  CHECK(g.reports.empty());

  g.c->tick(5);
  const auto* ex = g.report_of("drv#0@e0", Status::Executing);
  REQUIRE(ex);
  CHECK(ex->time == doctest::Approx(5.0));
  CHECK(g.event_index("task-start", "drv#0@e0") >= 0);

  for (int t = 6; t <= 64; ++t) g.c->tick(t);
  CHECK(!g.report_of("drv#0@e0", Status::Completed));
  g.c->tick(65);
  const auto* done = g.report_of("drv#0@e0", Status::Completed);
  REQUIRE(done);
  CHECK(done->time == doctest::Approx(65.0));
  CHECK(!done->stopped_early);
  CHECK(g.c->tasks().empty());
}

TEST_CASE("late commit executes immediately when still feasible") {
  Rig g;
  g.c->receive_commit(g.mk("drv", 0, 5, 65), 9.0);
  const auto* ex = g.report_of("drv#0@e0", Status::Executing);
  REQUIRE(ex);
  CHECK(ex->time == doctest::Approx(9.0));
  for (int t = 10; t <= 69; ++t) g.c->tick(t);
  const auto* done = g.report_of("drv#0@e0", Status::Completed);
  REQUIRE(done);
  CHECK(done->time == doctest::Approx(69.0));
}

TEST_CASE("unmet pre-execution constraint burns the delay authority") {
  Rig g;
  g.num[{"A", "soc"}] = 15;  // below the 20% floor
  g.c->receive_commit(g.mk("drv", 0, 5, 65), 3.0);

  SUBCASE("never recovers: failed without execution") {
    for (int t = 3; t <= 40; ++t) g.c->tick(t);
    CHECK(!g.report_of("drv#0@e0", Status::Executing));
    const auto* f = g.report_of("drv#0@e0", Status::Failed);
    REQUIRE(f);
    CHECK(f->time == doctest::Approx(36.0));  // first tick past 5 + 30
    CHECK(f->detail == "start authority exhausted");
    CHECK(g.event_index("cleanup", "drv#0@e0") == -1);  // never started
    CHECK(g.event_index("start-held", "drv#0@e0") >= 0);
  }

  SUBCASE("recovers at +10: delayed start inside the authority") {
    for (int t = 3; t <= 14; ++t) g.c->tick(t);
    g.num[{"A", "soc"}] = 25;
    g.c->tick(15);
    const auto* ex = g.report_of("drv#0@e0", Status::Executing);
    REQUIRE(ex);
    CHECK(ex->time == doctest::Approx(15.0));
    for (int t = 16; t <= 75; ++t) g.c->tick(t);
    const auto* done = g.report_of("drv#0@e0", Status::Completed);
    REQUIRE(done);
    CHECK(done->time == doctest::Approx(75.0));
  }
}

TEST_CASE("slack to the next conflicting task caps the delay authority") {
  Rig g;
  g.num[{"A", "soc"}] = 15;
  g.c->receive_commit(g.mk("drv5", 0, 5, 10), 2.0);
  g.c->receive_commit(g.mk("drv5", 1, 12, 17), 2.0);
  // First task may delay only min(30, 12 - 10) = 2s.
  for (int t = 2; t <= 50; ++t) g.c->tick(t);
  const auto* f0 = g.report_of("drv5#0@e0", Status::Failed);
  REQUIRE(f0);
  CHECK(f0->time == doctest::Approx(8.0));  // first tick past 5 + 2
  // Second task has nothing after it: full 30s authority.
  const auto* f1 = g.report_of("drv5#1@e0", Status::Failed);
  REQUIRE(f1);
  CHECK(f1->time == doctest::Approx(43.0));  // first tick past 12 + 30
}

TEST_CASE("live maintenance violation: cleanup traced before the report") {
  Rig g;
  g.c->receive_commit(g.mk("drv", 0, 5, 65), 2.0);
  for (int t = 2; t <= 19; ++t) g.c->tick(t);
  g.num[{"A", "cpu_temp"}] = 66;  // past the 65 degC operational limit
  g.c->tick(20);
  const auto* f = g.report_of("drv#0@e0", Status::Failed);
  REQUIRE(f);
  CHECK(f->time == doctest::Approx(20.0));
  CHECK(f->detail.find("cpu_temp") != std::string::npos);
  int cleanup = g.event_index("cleanup", "drv#0@e0");
  int report = g.event_index("report-failed", "drv#0@e0");
  REQUIRE(cleanup >= 0);
  REQUIRE(report >= 0);
  CHECK(cleanup < report);
  CHECK(g.events[size_t(cleanup)][2] == "stop_motors");
}

TEST_CASE("injected fault behaviors") {
  Rig g;

  SUBCASE("runs late: completion reported past the planned end") {
    g.behave["drv"] = {0, 7, 0, std::nullopt};
    g.c->receive_commit(g.mk("drv", 0, 5, 65), 2.0);
    for (int t = 2; t <= 65; ++t) g.c->tick(t);
    CHECK(!g.report_of("drv#0@e0", Status::Completed));
    for (int t = 66; t <= 72; ++t) g.c->tick(t);
    const auto* done = g.report_of("drv#0@e0", Status::Completed);
    REQUIRE(done);
    CHECK(done->time == doctest::Approx(72.0));
  }

  SUBCASE("ends early: completion ahead of plan, not marked stopped") {
    g.behave["drv"] = {0, 0, 4, std::nullopt};
    g.c->receive_commit(g.mk("drv", 0, 5, 65), 2.0);
    for (int t = 2; t <= 61; ++t) g.c->tick(t);
    const auto* done = g.report_of("drv#0@e0", Status::Completed);
    REQUIRE(done);
    CHECK(done->time == doctest::Approx(61.0));
    CHECK(!done->stopped_early);
  }

  SUBCASE("fails mid-run: cleanup plus failed at the scripted moment") {
    g.behave["drv"] = {0, 0, 0, 3.0};
    g.c->receive_commit(g.mk("drv", 0, 5, 65), 2.0);
    for (int t = 2; t <= 8; ++t) g.c->tick(t);
    const auto* f = g.report_of("drv#0@e0", Status::Failed);
    REQUIRE(f);
    CHECK(f->time == doctest::Approx(8.0));
    CHECK(f->detail == "injected fault");
    CHECK(g.event_index("cleanup", "drv#0@e0") >= 0);
  }

  SUBCASE("starts late within authority: delay then run") {
    g.behave["drv"] = {6, 0, 0, std::nullopt};
    g.c->receive_commit(g.mk("drv", 0, 5, 65), 2.0);
    for (int t = 2; t <= 10; ++t) g.c->tick(t);
    CHECK(!g.report_of("drv#0@e0", Status::Executing));
    g.c->tick(11);
    const auto* ex = g.report_of("drv#0@e0", Status::Executing);
    REQUIRE(ex);
    CHECK(ex->time == doctest::Approx(11.0));
  }

  SUBCASE("starts late past authority: delay then fail") {
    g.behave["drv"] = {40, 0, 0, std::nullopt};
    g.c->receive_commit(g.mk("drv", 0, 5, 65), 2.0);
    for (int t = 2; t <= 40; ++t) g.c->tick(t);
    CHECK(!g.report_of("drv#0@e0", Status::Executing));
    const auto* f = g.report_of("drv#0@e0", Status::Failed);
    REQUIRE(f);
    CHECK(f->time == doctest::Approx(36.0));
  }
}

TEST_CASE("stop task halts its target and then runs itself") {
  Rig g;
  g.c->receive_commit(g.mk("drv", 0, 5, 65), 2.0);
  g.c->receive_commit(g.mk("stopT", 0, 20, 25, "drv#0@e0"), 2.0);
  for (int t = 2; t <= 19; ++t) g.c->tick(t);
  CHECK(g.report_of("drv#0@e0", Status::Executing));
  g.c->tick(20);
  const auto* halted = g.report_of("drv#0@e0", Status::Completed);
  REQUIRE(halted);
  CHECK(halted->time == doctest::Approx(20.0));
  CHECK(halted->stopped_early);
  const auto* sx = g.report_of("stopT#0@e0", Status::Executing);
  REQUIRE(sx);
  CHECK(sx->time == doctest::Approx(20.0));
  for (int t = 21; t <= 25; ++t) g.c->tick(t);
  CHECK(g.report_of("stopT#0@e0", Status::Completed));
}

TEST_CASE("abort semantics") {
  Rig g;
  g.c->receive_commit(g.mk("drv", 0, 5, 65), 2.0);
  for (int t = 2; t <= 10; ++t) g.c->tick(t);

  SUBCASE("executing task: cleanup, aborted, idempotent repeat") {
    g.c->handle_abort({"drv#0@e0"}, 30.0);
    const auto* ab = g.report_of("drv#0@e0", Status::Aborted);
    REQUIRE(ab);
    CHECK(ab->time == doctest::Approx(30.0));
    int cleanup = g.event_index("cleanup", "drv#0@e0");
    int report = g.event_index("report-aborted", "drv#0@e0");
    REQUIRE(cleanup >= 0);
    CHECK(cleanup < report);
    CHECK(g.c->tasks().empty());

    int before = int(g.reports.size());
    g.c->handle_abort({"drv#0@e0"}, 31.0);
    CHECK(int(g.reports.size()) == before + 1);
    CHECK(g.reports.back().status == Status::Aborted);
    CHECK(g.reports.back().detail == "abort ignored");
    CHECK(g.event_index("abort-noop", "drv#0@e0") >= 0);
  }

  SUBCASE("tracked but not started: dropped") {
    g.c->receive_commit(g.mk("syncT", 0, 100, 110), 10.0);
    g.c->handle_abort({"syncT#0@e0"}, 12.0);
    const auto* d = g.report_of("syncT#0@e0", Status::Dropped);
    REQUIRE(d);
    CHECK(d->detail == "aborted before start");
  }

  SUBCASE("unknown task: informational drop") {
    g.c->handle_abort({"ghost#9@e0"}, 12.0);
    const auto* d = g.report_of("ghost#9@e0", Status::Dropped);
    REQUIRE(d);
    CHECK(d->detail == "unknown task");
  }
}

TEST_CASE("leader change: purge, wind-down, single newest ack") {
  Rig g;
  g.c->receive_commit(g.mk("drv", 0, 5, 65), 2.0);
  g.c->receive_commit(g.mk("syncT", 0, 100, 110), 2.0);
  for (int t = 2; t <= 19; ++t) g.c->tick(t);
  CHECK(g.acks.size() == 1);

  g.c->handle_leader_change("L2", 1, 20.0);
  const auto* d = g.report_of("syncT#0@e0", Status::Dropped);
  REQUIRE(d);
  CHECK(d->detail == "leader change");
  CHECK(d->epoch == 0);  // reported under its own epoch
  CHECK(!g.c->ready());
  CHECK(g.acks.size() == 1);  // drive still running

  // A newer change arrives before the wind-down finishes.
  g.c->handle_leader_change("L3", 2, 30.0);
  CHECK(g.c->accepted_epoch() == 2);
  // Stale announcements are ignored outright.
  g.c->handle_leader_change("L2", 1, 31.0);
  CHECK(g.c->accepted_leader() == "L3");

  // Commits from a non-accepted epoch are refused.
  g.c->receive_commit(g.mk("drv", 1, 40, 100, "", 0), 32.0);
  const auto* stale = g.report_of("drv#1@e0", Status::Dropped);
  REQUIRE(stale);
  CHECK(stale->detail == "stale epoch");
  CHECK(g.c->tasks().size() == 1);

  for (int t = 32; t <= 64; ++t) g.c->tick(t);
  CHECK(g.acks.size() == 1);
  g.c->tick(65);
  const auto* done = g.report_of("drv#0@e0", Status::Completed);
  REQUIRE(done);
  // Wind-down completion still hands the hardware back clean.
  int cleanup = g.event_index("cleanup", "drv#0@e0");
  int report = g.event_index("report-completed", "drv#0@e0");
  REQUIRE(cleanup >= 0);
  CHECK(cleanup < report);
  REQUIRE(g.acks.size() == 2);
  CHECK(g.acks[1].epoch == 2);  // only the newest epoch is acknowledged
  CHECK(g.c->ready());
}

TEST_CASE("flag impacts and coordination clears go through truth writes") {
  Rig g;

  SUBCASE("start raises the team flag") {
    g.c->receive_commit(g.mk("par", 0, 5, 35), 2.0);
    g.c->tick(5);
    REQUIRE(g.flag.count({tasknet::kTeamOwner, "coordinated"}));
    CHECK(g.flag[{tasknet::kTeamOwner, "coordinated"}]);
  }

  SUBCASE("failure of a clearing task lowers it") {
    g.flag[{tasknet::kTeamOwner, "coordinated"}] = true;
    g.c->receive_commit(g.mk("subT", 0, 5, 35), 2.0);
    g.c->tick(5);
    for (int t = 6; t <= 9; ++t) g.c->tick(t);
    g.num[{"A", "soc"}] = 10;  // local envelope violated
    g.c->tick(10);
    CHECK(g.report_of("subT#0@e0", Status::Failed));
    CHECK(!g.flag[{tasknet::kTeamOwner, "coordinated"}]);
  }

  SUBCASE("multi-agent maintenance is not enforced locally") {
    g.flag[{tasknet::kTeamOwner, "coordinated"}] = false;  // leader's problem
    g.c->receive_commit(g.mk("subT", 0, 5, 35), 2.0);
    for (int t = 2; t <= 34; ++t) g.c->tick(t);
    CHECK(!g.report_of("subT#0@e0", Status::Failed));
    g.c->tick(35);
    CHECK(g.report_of("subT#0@e0", Status::Completed));
  }
}

TEST_CASE("forced low-power cutoff records interruptions") {
  Rig g;

  SUBCASE("running drive is interrupted, nothing is sent") {
    g.c->receive_commit(g.mk("drv", 0, 5, 65), 2.0);
    for (int t = 2; t <= 10; ++t) g.c->tick(t);
    int before = int(g.reports.size());
    g.c->interrupt_all(100.0);
    CHECK(g.c->interrupted_count() == 1);
    CHECK(g.event_index("task-interrupted", "drv#0@e0") >= 0);
    CHECK(int(g.reports.size()) == before);
    CHECK(g.c->tasks().empty());
  }

  SUBCASE("running sleep is the expected shutdown state") {
    g.c->receive_commit(g.mk("slp", 0, 5, 65), 2.0);
    for (int t = 2; t <= 10; ++t) g.c->tick(t);
    g.c->interrupt_all(30.0);
    CHECK(g.c->interrupted_count() == 0);
    CHECK(g.event_index("task-interrupted", "slp#0@e0") == -1);
  }
}

TEST_CASE("commit edge cases") {
  Rig g;

  SUBCASE("unknown template is failed outright") {
    auto m = g.mk("nope", 0, 5, 65);
    g.c->receive_commit(m, 2.0);
    const auto* f = g.report_of("nope#0@e0", Status::Failed);
    REQUIRE(f);
    CHECK(f->detail == "unknown template");
  }

  SUBCASE("re-commit refreshes the schedule in place") {
    g.c->receive_commit(g.mk("drv", 0, 5, 65), 2.0);
    g.c->receive_commit(g.mk("drv", 0, 8, 68), 3.0);
    REQUIRE(g.c->tasks().size() == 1);
    CHECK(g.c->tasks()[0].scheduled_start == doctest::Approx(8.0));
    g.c->tick(5);
    CHECK(!g.report_of("drv#0@e0", Status::Executing));
    for (int t = 6; t <= 8; ++t) g.c->tick(t);
    CHECK(g.report_of("drv#0@e0", Status::Executing));
  }

  SUBCASE("commit for a finished task reports its terminal state") {
    g.c->receive_commit(g.mk("drv", 0, 5, 65), 2.0);
    for (int t = 2; t <= 65; ++t) g.c->tick(t);
    REQUIRE(g.report_of("drv#0@e0", Status::Completed));
    int before = int(g.reports.size());
    g.c->receive_commit(g.mk("drv", 0, 5, 65), 66.0);
    CHECK(int(g.reports.size()) == before + 1);
    CHECK(g.reports.back().status == Status::Completed);
    CHECK(g.reports.back().detail == "already finished");
  }
}

TEST_CASE("randomized walks hold the executive invariants") {
  std::mt19937 rng(41);
  const std::vector<std::string> tpls{"drv", "drv5", "syncT", "subT"};
  for (int trial = 0; trial < 30; ++trial) {
    Rig g;
    g.flag[{tasknet::kTeamOwner, "coordinated"}] = true;
    std::uniform_int_distribution<int> ntask(3, 6), start(2, 50), pick(0, 3);
    std::uniform_int_distribution<int> coin(0, 9);
    int n = ntask(rng);
    std::vector<TaskId> ids;
    for (int i = 0; i < n; ++i) {
      const std::string& tpl = tpls[size_t(pick(rng))];
      if (coin(rng) < 2)
        g.behave[tpl] = {double(coin(rng)), 0, 0,
                         coin(rng) < 3 ? std::optional<double>(4.0)
                                       : std::nullopt};
      auto m = g.mk(tpl, i, start(rng), start(rng) + 40);
      ids.push_back(m.instance_id);
      g.c->receive_commit(m, 1.0);
    }
    int temp_spike = coin(rng) < 3 ? start(rng) : -1;
    int soc_drop = coin(rng) < 3 ? start(rng) : -1;
    int abort_at = coin(rng) < 4 ? start(rng) : -1;

    for (int t = 1; t <= 130; ++t) {
      if (t == temp_spike) g.num[{"A", "cpu_temp"}] = 70;
      if (t == soc_drop) g.num[{"A", "soc"}] = 5;
      if (t == abort_at)
        g.c->handle_abort({ids[size_t(pick(rng)) % ids.size()]}, t);
      g.c->tick(t);
      // One task per exclusivity class at any instant.
      const auto& rows = g.c->tasks();
      for (size_t a = 0; a < rows.size(); ++a)
        for (size_t b = a + 1; b < rows.size(); ++b) {
          if (rows[a].phase != Phase::Running ||
              rows[b].phase != Phase::Running)
            continue;
          CAPTURE(trial);
          CAPTURE(rows[a].id);
          CAPTURE(rows[b].id);
          CHECK(!tasknet::modes_conflict(rows[a].tpl->mode,
                                         rows[b].tpl->mode));
        }
    }

    // Report stream discipline per task: at most one Executing, then exactly
    // one terminal, nothing after. Informational repeats are excluded.
    for (const auto& id : ids) {
      bool started = false, ended = false;
      for (const auto& r : g.reports) {
        if (r.instance_id != id) continue;
        if (r.detail == "abort ignored" || r.detail == "already finished")
          continue;
        CAPTURE(trial);
        CAPTURE(id);
        CHECK(!ended);
        if (r.status == Status::Executing) {
          CHECK(!started);
          started = true;
        } else {
          CHECK(tasknet::status_terminal(r.status));
          ended = true;
        }
      }
    }

    // Cleanup precedes the terminal report for every started task that
    // failed or aborted and defines a cleanup command.
    for (const auto& id : ids) {
      int started_at = g.event_index("task-start", id);
      if (started_at < 0) continue;
      for (const char* kind : {"report-failed", "report-aborted"}) {
        int rep = g.event_index(kind, id);
        if (rep < 0) continue;
        const Tracked* dummy = nullptr;
        (void)dummy;
        const tasknet::TaskTemplate* tpl = nullptr;
        for (const auto& t : g.net.tasks)
          if (id.rfind(t.id + "#", 0) == 0) tpl = &t;
        REQUIRE(tpl);
        if (tpl->cleanup_command.empty()) continue;
        int cl = g.event_index("cleanup", id);
        CAPTURE(trial);
        CAPTURE(id);
        REQUIRE(cl >= 0);
        CHECK(cl < rep);
      }
    }
  }
}
