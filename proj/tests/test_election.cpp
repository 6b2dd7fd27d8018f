#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <deque>
#include <random>
#include <stdexcept>

#include "psesim/election.hpp"
#include "psesim/netsim.hpp"

using namespace psesim;
using namespace psesim::election;
using doctest::Approx;

TEST_CASE("edge weights: symmetric, distinct, totally ordered") {
  CHECK(edge_weight("A", "B") == edge_weight("B", "A"));
  CHECK(edge_weight("A", "B") != edge_weight("A", "C"));
  CHECK(edge_weight("A", "A") == "");  // no self edges
  CHECK(weight_less("A~B", "A~C"));
  CHECK(weight_less("A~B", ""));       // anything beats infinity
  CHECK_FALSE(weight_less("", "A~B"));
  CHECK_FALSE(weight_less("", ""));
}

TEST_CASE("margin score: min of SOC and temperature headroom") {
  MarginConfig cfg;  // floor 20, limit 65, ref -35
  // soc 60 -> (60-20)/80 = 0.5; temp 25 -> (65-25)/100 = 0.4; min = 0.4.
  CHECK(margin_score(60.0, 25.0, cfg) == Approx(0.4));
  // Cool and charged: soc-limited.
  CHECK(margin_score(60.0, -35.0, cfg) == Approx(0.5));
  // Base station (no battery): temp margin only.
  CHECK(margin_score(std::nullopt, 15.0, cfg) == Approx(0.5));
  // Clamped at the envelope edges.
  CHECK(margin_score(10.0, 25.0, cfg) == 0.0);
  CHECK(margin_score(100.0, -60.0, cfg) == 1.0);
}

TEST_CASE("leader selection: hysteresis around the incumbent") {
  double delta = 0.15;
  // Challenger at 0.6 vs incumbent 0.5: difference below delta, keep.
  CHECK(select_leader({{"A", 0.5}, {"B", 0.6}}, "A", delta) == "A");
  // Challenger at 0.7 vs incumbent 0.5: switch.
  CHECK(select_leader({{"A", 0.5}, {"B", 0.7}}, "A", delta) == "B");
  // Exactly delta counts as clearing it.
  CHECK(select_leader({{"A", 0.5}, {"B", 0.65}}, "A", delta) == "B");
  // Incumbent missing (dead): forced switch to the best.
  CHECK(select_leader({{"B", 0.3}, {"C", 0.4}}, "A", delta) == "C");
  // No incumbent at all.
  CHECK(select_leader({{"B", 0.3}, {"C", 0.4}}, "", delta) == "C");
  // Ties resolve to the smaller id.
  CHECK(select_leader({{"B", 0.4}, {"C", 0.4}}, "", delta) == "B");
}

TEST_CASE("survivor: best score excluding the leader, fresh each time") {
  CHECK(select_survivor({{"A", 0.9}, {"B", 0.6}, {"C", 0.7}}, "A") == "C");
  CHECK(select_survivor({{"A", 0.9}, {"B", 0.7}, {"C", 0.5}}, "B") == "A");
  // Ties go to the lexicographically smaller id.
  CHECK(select_survivor({{"A", 0.9}, {"B", 0.6}, {"C", 0.6}}, "A") == "B");
  // Single-agent component: nobody left to designate.
  CHECK(select_survivor({{"A", 0.9}}, "A") == "");
}

TEST_CASE("leader selection rejects an empty score map") {
  CHECK_THROWS_AS(select_leader({}, "A", 0.15), std::invalid_argument);
}

TEST_CASE("scaling all scores never moves the argmax candidate") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::map<AgentId, double> scores;
    int n = 2 + int(rng() % 5);
    for (int i = 0; i < n; ++i)
      scores[std::string(1, char('A' + i))] =
          double(rng() % 1000) / 1000.0;
    double c = 0.1 + double(rng() % 400) / 100.0;
    std::map<AgentId, double> scaled;
    for (const auto& [id, s] : scores) scaled[id] = s * c;
    // No incumbent: selection is pure argmax, so it must be scale-free.
    CHECK(select_leader(scores, "", 0.15) == select_leader(scaled, "", 0.15));
  }
}

// ---------------------------------------------------------------------------
// GHS vs a Kruskal oracle on a zero-loss loopback bus.

namespace {

struct UnionFind {
  std::map<AgentId, AgentId> parent;
  AgentId find(const AgentId& x) {
    if (parent[x].empty() || parent[x] == x) return parent[x] = x;
    return parent[x] = find(parent[x]);
  }
  bool unite(const AgentId& a, const AgentId& b) {
    AgentId ra = find(a), rb = find(b);
    if (ra == rb) return false;
    parent[ra] = rb;
    return true;
  }
};

using EdgeSet = std::set<std::pair<AgentId, AgentId>>;  // first < second

std::set<std::string> kruskal_mst(const EdgeSet& graph) {
  std::vector<std::pair<std::string, std::pair<AgentId, AgentId>>> edges;
  for (const auto& e : graph)
    edges.push_back({edge_weight(e.first, e.second), e});
  std::sort(edges.begin(), edges.end());
  UnionFind uf;
  std::set<std::string> mst;
  for (const auto& [w, e] : edges)
    if (uf.unite(e.first, e.second)) mst.insert(w);
  return mst;
}

EdgeSet complete_graph(const std::vector<AgentId>& ids) {
  EdgeSet g;
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (std::size_t j = i + 1; j < ids.size(); ++j)
      g.insert({std::min(ids[i], ids[j]), std::max(ids[i], ids[j])});
  return g;
}

struct Bus {
  std::map<AgentId, GhsNode*> nodes;
  std::deque<std::pair<AgentId, GhsNode::Out>> q;

  void flush(const AgentId& id) {
    for (auto& out : nodes[id]->take_outbox()) q.push_back({id, out});
  }
  void run() {
    int guard = 100000;
    while (!q.empty() && guard-- > 0) {
      auto [from, out] = q.front();
      q.pop_front();
      nodes[out.to]->on_message(from, out.m);
      flush(out.to);
    }
    REQUIRE(guard > 0);
  }
};

}  // namespace

namespace {

std::vector<AgentId> random_ids(std::mt19937_64& rng, int n) {
  std::set<AgentId> idset;
  while (int(idset.size()) < n) {
    std::string id;
    for (int k = 0; k < 4; ++k) id += char('a' + int(rng() % 26));
    idset.insert(id);
  }
  return {idset.begin(), idset.end()};
}

// Runs GHS over the given graph on the loopback bus and checks the result
// against the Kruskal oracle plus the structural invariants.
void check_ghs_against_kruskal(const std::vector<AgentId>& ids,
                               const EdgeSet& graph) {
  std::map<AgentId, std::vector<AgentId>> adj;
  for (const auto& e : graph) {
    adj[e.first].push_back(e.second);
    adj[e.second].push_back(e.first);
  }

  std::vector<GhsNode> nodes;
  nodes.reserve(ids.size());
  for (const auto& id : ids) nodes.emplace_back(id, adj[id], 1);
  Bus bus;
  for (std::size_t i = 0; i < ids.size(); ++i) bus.nodes[ids[i]] = &nodes[i];
  for (const auto& id : ids) {
    bus.nodes[id]->start();
    bus.flush(id);
  }
  bus.run();

  // Branch edges must be symmetric and exactly the MST.
  std::set<std::string> got;
  std::map<std::string, int> seen_count;
  for (const auto& id : ids)
    for (const auto& peer : bus.nodes[id]->tree_neighbors()) {
      got.insert(edge_weight(id, peer));
      seen_count[edge_weight(id, peer)]++;
    }
  auto want = kruskal_mst(graph);
  CHECK(got == want);
  CHECK(got.size() == ids.size() - 1);
  for (const auto& [w, c] : seen_count) CHECK(c == 2);

  // Exactly the two endpoints of the core edge observe termination, and
  // exactly one of them is the appointer.
  std::vector<AgentId> finished;
  int appointers = 0;
  for (const auto& id : ids)
    if (bus.nodes[id]->done()) {
      finished.push_back(id);
      if (bus.nodes[id]->is_appointer()) ++appointers;
    }
  REQUIRE(finished.size() == 2);
  CHECK(appointers == 1);
  CHECK(bus.nodes[finished[0]]->core_peer() == finished[1]);
  CHECK(bus.nodes[finished[1]]->core_peer() == finished[0]);
  CHECK(got.count(edge_weight(finished[0], finished[1])) == 1);
}

}  // namespace

TEST_CASE("GHS equals Kruskal on complete graphs") {
  std::mt19937_64 rng(13);
  for (int n : {2, 3, 4, 5, 6, 7}) {
    for (int trial = 0; trial < 6; ++trial) {
      auto ids = random_ids(rng, n);  // random ids vary the weights
      CAPTURE(n);
      CAPTURE(trial);
      check_ghs_against_kruskal(ids, complete_graph(ids));
    }
  }
}

TEST_CASE("GHS equals Kruskal on random connected graphs up to 8 nodes") {
  std::mt19937_64 rng(17);
  for (int n = 2; n <= 8; ++n) {
    for (int trial = 0; trial < 8; ++trial) {
      auto ids = random_ids(rng, n);
      // Random spanning tree for connectivity, then extra edges.
      EdgeSet graph;
      std::vector<AgentId> order = ids;
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t i = 1; i < order.size(); ++i) {
        const AgentId& prev = order[rng() % i];
        graph.insert({std::min(order[i], prev), std::max(order[i], prev)});
      }
      for (const auto& e : complete_graph(ids))
        if (rng() % 100 < 35) graph.insert(e);
      CAPTURE(n);
      CAPTURE(trial);
      check_ghs_against_kruskal(ids, graph);
    }
  }
}

TEST_CASE("GHS: single node finishes immediately as its own appointer") {
  GhsNode solo("only", {"only"}, 1);
  solo.start();
  CHECK(solo.done());
  CHECK(solo.core_peer() == "only");
  CHECK(solo.tree_neighbors().empty());
}

// ---------------------------------------------------------------------------
// Round driver over the simulated network.

namespace {

struct Team {
  net::EventQueue q;
  net::TraceWriter trace;
  net::Network net;
  std::map<AgentId, double> scores;
  std::map<AgentId, std::unique_ptr<ElectionDriver>> drivers;
  struct Accept {
    double t;
    AgentId leader;
    int epoch;
    bool changed;
  };
  std::map<AgentId, std::vector<Accept>> log;

  Team(std::uint64_t seed, std::map<AgentId, double> initial_scores,
       net::LinkSpec link = {0.05, 0.0, 0.0})
      : net(q, trace, seed), scores(std::move(initial_scores)) {
    std::vector<AgentId> ids;
    for (const auto& [id, s] : scores) ids.push_back(id);
    for (const auto& id : ids) {
      net.add_agent(id, [this, id](const net::Envelope& env) {
        drivers[id]->on_message(env.src, env.payload);
      });
      std::vector<AgentId> peers;
      for (const auto& p : ids)
        if (p != id) peers.push_back(p);
      ElectionHooks hooks;
      hooks.send = [this, id](const AgentId& to, msg::Message m, bool rel) {
        net.send(id, to, std::move(m),
                 rel ? net::Delivery::Reliable : net::Delivery::BestEffort);
      };
      hooks.defer = [this](double d, std::function<void()> fn) {
        q.at(q.now() + d, std::move(fn));
      };
      hooks.now = [this] { return q.now(); };
      hooks.score = [this, id] { return scores[id]; };
      hooks.on_announce = [this, id](const msg::LeaderAnnounce& a,
                                     bool changed) {
        log[id].push_back({q.now(), a.leader, a.epoch, changed});
      };
      drivers[id] = std::make_unique<ElectionDriver>(id, peers, ElectionConfig{},
                                                     std::move(hooks));
    }
    net.set_default_link(link);
    for (auto& [id, d] : drivers) d->start();
  }

  void kill(const AgentId& id) {
    net.set_down(id, true);
    drivers[id]->pause();
  }
  void revive(const AgentId& id) {
    net.set_down(id, false);
    drivers[id]->resume();
  }
};

}  // namespace

TEST_CASE("first round elects the best-margin agent everywhere") {
  Team team(21, {{"B", 0.3}, {"R1", 0.9}, {"R2", 0.7}, {"R3", 0.5}});
  team.q.run_until(12.0);
  for (const auto& id : {"B", "R1", "R2", "R3"}) {
    auto* d = team.drivers[id].get();
    CAPTURE(id);
    CHECK(d->leader() == "R1");
    CHECK(d->survivor() == "R2");
    CHECK(d->accepted_epoch() == 1);
    CHECK(d->participants().size() == 4);
  }
}

TEST_CASE("refresh rounds reuse the epoch; commits stay valid across them") {
  Team team(22, {{"B", 0.3}, {"R1", 0.9}, {"R2", 0.7}, {"R3", 0.5}});
  team.q.run_until(45.0);
  auto* d = team.drivers["R2"].get();
  CHECK(d->leader() == "R1");
  CHECK(d->accepted_epoch() == 1);  // several rounds later, same generation
  CHECK(team.drivers["R1"]->rounds_started() >= 4);
  // Acceptances were re-announced (refresh), not re-numbered.
  REQUIRE(team.log["R2"].size() >= 2);
  for (const auto& a : team.log["R2"]) CHECK(a.epoch == 1);
}

TEST_CASE("leader kill: replacement within the next round, epoch bumps") {
  Team team(23, {{"B", 0.3}, {"R1", 0.9}, {"R2", 0.7}, {"R3", 0.5}});
  team.q.run_until(12.0);
  CHECK(team.drivers["R2"]->leader() == "R1");
  const double kill_time = 12.0;
  team.kill("R1");
  team.q.run_until(40.0);
  for (const auto& id : {"B", "R2", "R3"}) {
    CAPTURE(id);
    CHECK(team.drivers[id]->leader() == "R2");
    CHECK(team.drivers[id]->accepted_epoch() == 2);
    CHECK(team.drivers[id]->participants().count("R1") == 0);
    CHECK(team.drivers[id]->survivor() == "R3");
  }
  // Found before the second post-kill round closed: kill at 12, next round
  // opens at 20, announcement lands with probe + a few hops of slack.
  for (const auto& id : {"B", "R2", "R3"}) {
    const auto& log = team.log[id];
    auto it = std::find_if(log.begin(), log.end(),
                           [](const auto& a) { return a.leader == "R2"; });
    REQUIRE(it != log.end());
    CHECK(it->t - kill_time <= 11.0);
    CHECK(it->changed);
  }
}

TEST_CASE("revived strong agent retakes leadership only past hysteresis") {
  SUBCASE("clearly better: retakes") {
    Team team(24, {{"B", 0.3}, {"R1", 0.9}, {"R2", 0.7}, {"R3", 0.5}});
    team.q.run_until(12.0);
    team.kill("R1");
    team.q.run_until(32.0);
    CHECK(team.drivers["R2"]->leader() == "R2");
    team.revive("R1");
    team.q.run_until(55.0);
    CHECK(team.drivers["R2"]->leader() == "R1");  // 0.9 - 0.7 >= 0.15
    CHECK(team.drivers["R2"]->accepted_epoch() == 3);
    CHECK(team.drivers["R1"]->leader() == "R1");
  }
  SUBCASE("marginally better: incumbent keeps the job") {
    Team team(25, {{"B", 0.3}, {"R1", 0.8}, {"R2", 0.7}, {"R3", 0.5}});
    team.q.run_until(12.0);
    team.kill("R1");
    team.q.run_until(32.0);
    CHECK(team.drivers["R2"]->leader() == "R2");
    int epoch_before = team.drivers["R2"]->accepted_epoch();
    team.revive("R1");
    team.q.run_until(55.0);
    CHECK(team.drivers["R2"]->leader() == "R2");  // 0.8 - 0.7 < 0.15
    CHECK(team.drivers["R2"]->accepted_epoch() == epoch_before);
    CHECK(team.drivers["R1"]->leader() == "R2");  // rejoined as follower
    CHECK(team.drivers["R1"]->participants().count("R1") == 1);
  }
}

TEST_CASE("partition elects one leader per component; heal reunifies") {
  Team team(27, {{"B", 0.3}, {"R1", 0.9}, {"R2", 0.7}, {"R3", 0.5}});
  team.net.add_outage({14.0, 38.0, {"B", "R1"}, {"R2", "R3"}});
  team.q.run_until(12.0);
  CHECK(team.drivers["R3"]->leader() == "R1");

  team.q.run_until(38.0);
  // Each side elected its own best; the cut-off pair bumped the epoch when
  // it lost its accepted leader.
  CHECK(team.drivers["B"]->leader() == "R1");
  CHECK(team.drivers["R1"]->leader() == "R1");
  CHECK(team.drivers["R1"]->accepted_epoch() == 1);
  CHECK(team.drivers["R2"]->leader() == "R2");
  CHECK(team.drivers["R3"]->leader() == "R2");
  CHECK(team.drivers["R2"]->accepted_epoch() == 2);
  CHECK(team.drivers["R2"]->participants().size() == 2);
  CHECK(team.drivers["R2"]->survivor() == "R3");

  // Healed: the stronger margin retakes the whole team on a fresh epoch.
  team.q.run_until(55.0);
  for (const auto& id : {"B", "R1", "R2", "R3"}) {
    CAPTURE(id);
    CHECK(team.drivers[id]->leader() == "R1");
    CHECK(team.drivers[id]->accepted_epoch() == 3);
    CHECK(team.drivers[id]->participants().size() == 4);
  }
}

TEST_CASE("election converges under 30% message loss") {
  Team team(26, {{"B", 0.3}, {"R1", 0.9}, {"R2", 0.7}, {"R3", 0.5}},
            {0.05, 0.1, 0.3});
  team.q.run_until(60.0);
  // Within six rounds every agent has accepted the same leader.
  AgentId leader = team.drivers["B"]->leader();
  CHECK_FALSE(leader.empty());
  for (const auto& id : {"B", "R1", "R2", "R3"}) {
    CAPTURE(id);
    CHECK(team.drivers[id]->leader() == leader);
    CHECK(team.drivers[id]->has_leader());
  }
  CHECK(leader == "R1");
}

TEST_CASE("deterministic: same seed gives identical announcement logs") {
  auto run = [](std::uint64_t seed) {
    Team team(seed, {{"B", 0.3}, {"R1", 0.9}, {"R2", 0.7}, {"R3", 0.5}},
              {0.05, 0.1, 0.3});
    team.q.run_until(40.0);
    std::vector<std::tuple<double, AgentId, int>> flat;
    for (const auto& [id, log] : team.log)
      for (const auto& a : log) flat.emplace_back(a.t, a.leader, a.epoch);
    return flat;
  };
  CHECK(run(31) == run(31));
  CHECK(run(31) != run(32));
}
