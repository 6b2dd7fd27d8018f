// Leader election: periodic rounds of GHS minimum-spanning-tree
// construction over the responsive peers, followed by a score convergecast
// up the tree and a leader/survivor announcement from the appointer (the
// smaller-id endpoint of the final core edge).
#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "psesim/core.hpp"
#include "psesim/messages.hpp"

namespace psesim::election {

// Deterministic distinct edge weights from the endpoint ids; compared as
// strings. Empty string means "no edge" (infinite weight).
std::string edge_weight(const AgentId& a, const AgentId& b);
bool weight_less(const std::string& a, const std::string& b);

// Health margin in [0, 1]: min of SOC margin above the floor and CPU
// headroom below the limit. Agents without a battery (base stations) get
// soc margin 1.
struct MarginConfig {
  double soc_floor = 20.0;
  double temp_limit = 65.0;
  double temp_ref = -35.0;  // margin 1 at or below this temperature
};
double margin_score(std::optional<double> soc, double cpu_temp,
                    const MarginConfig& cfg = {});

// Hysteresis keeps the incumbent unless a challenger clears it by delta.
// Throws std::invalid_argument on an empty score map.
AgentId select_leader(const std::map<AgentId, double>& scores,
                      const AgentId& current, double delta);
// Best score excluding the leader; empty for a single-agent component.
AgentId select_survivor(const std::map<AgentId, double>& scores,
                        const AgentId& leader);

// --- GHS automaton ---------------------------------------------------------

// One GHS instance per (agent, round). Message-driven; outgoing messages
// accumulate in an outbox the host flushes after each call.
class GhsNode {
 public:
  struct Out {
    AgentId to;
    msg::Message m;
  };

  GhsNode(AgentId self, std::vector<AgentId> neighbors, std::uint64_t round);

  void start();
  void on_message(const AgentId& from, const msg::Message& m);

  bool done() const { return done_; }
  const AgentId& core_peer() const { return core_peer_; }
  bool is_appointer() const { return done_ && self_ < core_peer_; }
  std::vector<AgentId> tree_neighbors() const;
  std::vector<Out> take_outbox();

 private:
  enum class EdgeState { Basic, Branch, Rejected };
  struct Edge {
    std::string weight;
    EdgeState state = EdgeState::Basic;
  };

  void process(const AgentId& from, const msg::Message& m, bool& defer);
  void drain_deferred();
  void run_test();
  void report_check();
  void change_root();
  void send(const AgentId& to, msg::Message m);
  std::optional<AgentId> min_basic_edge() const;

  AgentId self_;
  std::uint64_t round_;
  std::map<AgentId, Edge> edges_;

  int level_ = 0;
  std::string fragment_;
  bool find_phase_ = false;
  AgentId in_branch_;
  AgentId best_edge_;
  std::string best_weight_;  // empty = infinity
  AgentId test_edge_;
  bool testing_ = false;
  int find_count_ = 0;
  AgentId connect_sent_on_;
  bool reported_ = false;

  bool done_ = false;
  AgentId core_peer_;

  std::deque<std::pair<AgentId, msg::Message>> deferred_;
  std::vector<Out> outbox_;
};

// --- Round driver -----------------------------------------------------------

struct ElectionConfig {
  double period = 10.0;        // round cadence
  double probe_window = 2.0;   // hello collection before GHS starts
  double hysteresis = 0.15;
  // Enough hello copies that a 30% per-attempt loss rate almost never leaves
  // two agents with asymmetric views of who is alive (which would stall a
  // GHS round until the next retry).
  int hello_repeats = 4;
  double hello_spacing = 0.3;
};

struct ElectionHooks {
  std::function<void(const AgentId& to, msg::Message m, bool reliable)> send;
  std::function<void(double delay, std::function<void()>)> defer;
  std::function<double()> now;
  std::function<double()> score;  // this agent's current margin score
  // Called on every accepted announcement; `leader_changed` distinguishes a
  // new generation from a refresh of the current one.
  std::function<void(const msg::LeaderAnnounce&, bool leader_changed)>
      on_announce;
};

class ElectionDriver {
 public:
  ElectionDriver(AgentId self, std::vector<AgentId> peers, ElectionConfig cfg,
                 ElectionHooks hooks);

  void start();
  void pause();
  void resume();
  bool running() const { return running_; }

  // Bootstrap the accepted epoch from persisted state (wake after a shutdown
  // cycle), so epochs stay monotone across reboots.
  void seed_epoch(int epoch) { accepted_epoch_ = std::max(accepted_epoch_, epoch); }

  void on_message(const AgentId& from, const msg::Message& m);

  int accepted_epoch() const { return accepted_epoch_; }
  const AgentId& leader() const { return leader_; }
  const AgentId& survivor() const { return survivor_; }
  const std::set<AgentId>& participants() const { return participants_; }
  bool has_leader() const { return !leader_.empty(); }
  std::uint64_t rounds_started() const { return rounds_started_; }
  std::uint64_t announcements_sent() const { return announcements_sent_; }

 private:
  void round_tick();
  void begin_ghs(std::uint64_t round);
  void flush_ghs();
  void start_gather();
  void on_gather(const AgentId& from, const msg::GatherScores& m);
  void on_scores(const AgentId& from, const msg::ScoresUp& m);
  void maybe_finish_gather();
  void decide();
  msg::AgentVitals own_vitals() const;

  AgentId self_;
  std::vector<AgentId> peers_;
  ElectionConfig cfg_;
  ElectionHooks hooks_;

  bool running_ = false;
  std::uint64_t generation_ = 0;  // invalidates scheduled callbacks on pause
  std::uint64_t current_round_ = 0;
  std::uint64_t rounds_started_ = 0;
  std::uint64_t announcements_sent_ = 0;

  std::set<AgentId> heard_;
  std::optional<GhsNode> ghs_;

  bool gather_active_ = false;
  AgentId gather_parent_;
  std::set<AgentId> gather_pending_;
  std::map<AgentId, msg::AgentVitals> gathered_;

  int accepted_epoch_ = 0;
  AgentId leader_;
  AgentId survivor_;
  std::set<AgentId> participants_;
};

}  // namespace psesim::election
