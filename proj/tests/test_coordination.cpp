#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "psesim/coordination.hpp"
#include "psesim/messages.hpp"
#include "psesim/tasknet.hpp"

using namespace psesim;
using namespace psesim::coord;
using psesim::AgentRole;
using tasknet::AgentDecl;
using tasknet::Status;
using tasknet::TaskInstance;
using tasknet::TaskNetwork;
using tasknet::VarRef;

namespace {

TaskNetwork formation_net() {
  std::vector<AgentDecl> team{{"R1", AgentRole::Rover},
                              {"R2", AgentRole::Rover},
                              {"R3", AgentRole::Rover},
                              {"B", AgentRole::BaseStation}};
  return tasknet::build_formation_network(team, 1);
}

sched::PlanContext ctx_for() {
  sched::PlanContext ctx;
  ctx.leader = "B";
  ctx.survivor = "R1";
  ctx.epoch = 0;
  return ctx;
}

TaskInstance row(const std::string& tpl, double s, double e,
                 Status st = Status::Committed) {
  TaskInstance r;
  r.id = tpl + "#0@e0";
  r.template_id = tpl;
  r.status = st;
  r.scheduled_start = s;
  r.scheduled_end = e;
  r.scheduled_duration = e - s;
  return r;
}

// Committed full-subset formation hierarchy at [90, 390].
sched::Plan formation_plan() {
  sched::Plan p;
  p.window = {0, 1500, 0};
  p.tasks.push_back(row("form_c1_R1_R2_R3", 90, 390));
  for (const char* r : {"R1", "R2", "R3"})
    p.tasks.push_back(row(std::string("form_c1_R1_R2_R3_") + r, 90, 390));
  return p;
}

struct View {
  std::map<VarRef, double> num;
  std::map<VarRef, bool> flag;

  // Healthy team: everyone participating, envelopes comfortable.
  static View healthy() {
    View v;
    for (const char* r : {"R1", "R2", "R3"}) {
      v.flag[{r, "participating"}] = true;
      v.num[{r, "soc"}] = 85;
      v.num[{r, "cpu_temp"}] = 30;
    }
    v.flag[{tasknet::kTeamOwner, "coordinated"}] = true;
    return v;
  }

  StateReader reader() const {
    StateReader s;
    s.read_number = [this](const VarRef& v) -> std::optional<double> {
      auto it = num.find(v);
      if (it == num.end()) return std::nullopt;
      return it->second;
    };
    s.read_flag = [this](const VarRef& v) -> std::optional<bool> {
      auto it = flag.find(v);
      if (it == flag.end()) return std::nullopt;
      return it->second;
    };
    return s;
  }
};

int watches_on(const Watcher& w, const std::string& task_prefix) {
  int n = 0;
  for (const auto& watch : w.watches())
    if (watch.task.rfind(task_prefix, 0) == 0) ++n;
  return n;
}

}  // namespace

TEST_CASE("exploration plans carry no multi-agent watches") {
  std::vector<AgentDecl> team{{"R1", AgentRole::Rover},
                              {"R2", AgentRole::Rover},
                              {"B", AgentRole::BaseStation}};
  TaskNetwork net = tasknet::build_exploration_network(team, 100.0, 1);
  Watcher w(net, {});
  sched::Plan p;
  p.tasks.push_back(row("sync_c1_R1", 0, 30));
  p.tasks.push_back(row("drive_c1_R1", 90, 390));
  w.register_watches(p, ctx_for());
  CHECK(w.watches().empty());
}

TEST_CASE("formation commit registers one watch per multi-agent constraint") {
  TaskNetwork net = formation_net();
  REQUIRE(net.find_task("form_c1_R1_R2_R3"));
  Watcher w(net, {});
  w.register_watches(formation_plan(), ctx_for());

  // Parent: coordinated maintenance + 3 participation pre-checks + a
  // 4-constraint envelope (soc/temp, pre+maintenance) per member.
  CHECK(watches_on(w, "form_c1_R1_R2_R3#") == 1 + 3 + 3 * 4);
  // Each sub watches only the coordinated flag; its envelope is local.
  for (const char* r : {"R1", "R2", "R3"})
    CHECK(watches_on(w, std::string("form_c1_R1_R2_R3_") + r + "#") == 1);
  CHECK(w.watches().size() == 19);

  for (const auto& watch : w.watches()) {
    CHECK(watch.phase == WatchPhase::PreCheckPending);
    CHECK(watch.grace_deadline == doctest::Approx(95.0));
    bool parent = watch.task == "form_c1_R1_R2_R3#0@e0";
    if (parent) CHECK(watch.executor == "B");
  }

  SUBCASE("scheduled rows do not register") {
    sched::Plan p = formation_plan();
    for (auto& t : p.tasks) t.status = Status::Scheduled;
    w.register_watches(p, ctx_for());
    CHECK(w.watches().empty());
  }
}

TEST_CASE("watches arm once their constraints are first seen holding") {
  TaskNetwork net = formation_net();
  Watcher w(net, {});
  w.register_watches(formation_plan(), ctx_for());
  View v = View::healthy();

  SUBCASE("nothing is evaluated before task start") {
    View bad;  // everything unreadable
    CHECK(w.evaluate(bad.reader(), 85.0).empty());
    for (const auto& watch : w.watches())
      CHECK(watch.phase == WatchPhase::PreCheckPending);
  }

  SUBCASE("healthy view arms everything at start") {
    CHECK(w.evaluate(v.reader(), 90.0).empty());
    for (const auto& watch : w.watches())
      CHECK(watch.phase == WatchPhase::Maintaining);
    CHECK(w.evaluate(v.reader(), 91.0).empty());
  }

  SUBCASE("pre-check satisfied 2s after start still passes") {
    v.flag[{tasknet::kTeamOwner, "coordinated"}] = false;
    CHECK(w.evaluate(v.reader(), 90.0).empty());
    CHECK(w.evaluate(v.reader(), 91.0).empty());
    v.flag[{tasknet::kTeamOwner, "coordinated"}] = true;
    CHECK(w.evaluate(v.reader(), 92.0).empty());
    for (const auto& watch : w.watches())
      CHECK(watch.phase == WatchPhase::Maintaining);
  }

  SUBCASE("never-satisfied pre-check aborts at the grace deadline") {
    v.flag.erase({tasknet::kTeamOwner, "coordinated"});  // never written
    for (int t = 90; t <= 94; ++t) CHECK(w.evaluate(v.reader(), t).empty());
    auto orders = w.evaluate(v.reader(), 95.0);
    REQUIRE(orders.size() == 4);  // parent + three subs ride on the flag
    std::map<AgentId, TaskId> got;
    for (const auto& o : orders) {
      got[o.to] = o.m.instance_id;
      // Abort payload byte-serializes to the task id alone.
      CHECK(msg::wire_size(msg::Message{o.m}) == 1 + o.m.instance_id.size());
    }
    CHECK(got["B"] == "form_c1_R1_R2_R3#0@e0");
    CHECK(got["R1"] == "form_c1_R1_R2_R3_R1#0@e0");
    CHECK(got["R2"] == "form_c1_R1_R2_R3_R2#0@e0");
    CHECK(got["R3"] == "form_c1_R1_R2_R3_R3#0@e0");
    // One abort per task, ever.
    CHECK(w.evaluate(v.reader(), 96.0).empty());
  }
}

TEST_CASE("cleared coordination flag cascades aborts to the siblings") {
  TaskNetwork net = formation_net();
  Watcher w(net, {});
  sched::Plan p = formation_plan();
  sched::PlanContext ctx = ctx_for();
  w.register_watches(p, ctx);
  View v = View::healthy();
  CHECK(w.evaluate(v.reader(), 90.0).empty());  // everything arms

  // Rover 2's drive fails at 150: its row goes terminal, the replan
  // re-registers watches, and the failing agent has cleared the flag.
  for (auto& t : p.tasks)
    if (t.id == "form_c1_R1_R2_R3_R2#0@e0") t.status = Status::Failed;
  w.register_watches(p, ctx);
  CHECK(w.watches().size() == 19 - 1);
  v.flag[{tasknet::kTeamOwner, "coordinated"}] = false;

  auto orders = w.evaluate(v.reader(), 150.0);
  REQUIRE(orders.size() == 3);
  std::set<AgentId> to;
  for (const auto& o : orders) {
    to.insert(o.to);
    CHECK(o.why.find("coordinated") != std::string::npos);
  }
  CHECK(to == std::set<AgentId>{"B", "R1", "R3"});
}

TEST_CASE("member envelope violations abort the parent first") {
  TaskNetwork net = formation_net();
  Watcher w(net, {});
  w.register_watches(formation_plan(), ctx_for());
  View v = View::healthy();
  CHECK(w.evaluate(v.reader(), 90.0).empty());

  v.num[{"R2", "soc"}] = 15;  // below the 20% floor
  auto first = w.evaluate(v.reader(), 120.0);
  REQUIRE(first.size() == 1);
  CHECK(first[0].to == "B");
  CHECK(first[0].m.instance_id == "form_c1_R1_R2_R3#0@e0");
  CHECK(first[0].why.find("R2.soc") != std::string::npos);

  // The aborted parent clears the flag; the subs fall on the next tick.
  v.flag[{tasknet::kTeamOwner, "coordinated"}] = false;
  auto second = w.evaluate(v.reader(), 121.0);
  REQUIRE(second.size() == 3);
  std::set<AgentId> to;
  for (const auto& o : second) to.insert(o.to);
  CHECK(to == std::set<AgentId>{"R1", "R2", "R3"});
}

TEST_CASE("participation flips take down the running parent") {
  TaskNetwork net = formation_net();
  Watcher w(net, {});
  w.register_watches(formation_plan(), ctx_for());
  View v = View::healthy();
  CHECK(w.evaluate(v.reader(), 90.0).empty());

  v.flag[{"R3", "participating"}] = false;
  auto orders = w.evaluate(v.reader(), 130.0);
  REQUIRE(orders.size() == 1);
  CHECK(orders[0].to == "B");
  CHECK(orders[0].why.find("participating") != std::string::npos);
}

TEST_CASE("phases and abort history survive re-registration") {
  TaskNetwork net = formation_net();
  Watcher w(net, {});
  sched::Plan p = formation_plan();
  sched::PlanContext ctx = ctx_for();
  w.register_watches(p, ctx);
  View v = View::healthy();

  SUBCASE("armed watches do not re-run their pre-check") {
    CHECK(w.evaluate(v.reader(), 90.0).empty());
    w.register_watches(p, ctx);
    for (const auto& watch : w.watches())
      CHECK(watch.phase == WatchPhase::Maintaining);
    // An armed watch fires immediately on violation, no fresh grace.
    v.flag[{tasknet::kTeamOwner, "coordinated"}] = false;
    CHECK(w.evaluate(v.reader(), 91.0).size() == 4);
  }

  SUBCASE("aborted tasks stay closed after re-registration") {
    v.flag.erase({tasknet::kTeamOwner, "coordinated"});
    for (int t = 90; t <= 95; ++t) w.evaluate(v.reader(), t);
    w.register_watches(p, ctx);  // rows unchanged in the stale plan
    auto again = w.evaluate(v.reader(), 96.0);
    CHECK(again.empty());
  }
}
