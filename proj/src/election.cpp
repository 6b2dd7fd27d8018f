#include "psesim/election.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace psesim::election {

std::string edge_weight(const AgentId& a, const AgentId& b) {
  if (a == b) return "";
  return a < b ? a + "~" + b : b + "~" + a;
}

// Empty string sorts as infinity.
bool weight_less(const std::string& a, const std::string& b) {
  if (a.empty()) return false;
  if (b.empty()) return true;
  return a < b;
}

double margin_score(std::optional<double> soc, double cpu_temp,
                    const MarginConfig& cfg) {
  double soc_margin = 1.0;
  if (soc) soc_margin = (*soc - cfg.soc_floor) / (100.0 - cfg.soc_floor);
  double temp_margin =
      (cfg.temp_limit - cpu_temp) / (cfg.temp_limit - cfg.temp_ref);
  double m = std::min(soc_margin, temp_margin);
  return std::clamp(m, 0.0, 1.0);
}

namespace {

AgentId argmax_score(const std::map<AgentId, double>& scores,
                     const AgentId& exclude = {}) {
  AgentId best;
  double best_score = -1.0;
  for (const auto& [id, s] : scores) {
    if (id == exclude) continue;
    if (s > best_score) {  // ties resolve to the smaller id (map order)
      best = id;
      best_score = s;
    }
  }
  return best;
}

}  // namespace

AgentId select_leader(const std::map<AgentId, double>& scores,
                      const AgentId& current, double delta) {
  if (scores.empty()) throw std::invalid_argument("select_leader: no scores");
  AgentId best = argmax_score(scores);
  auto cur = scores.find(current);
  if (cur == scores.end()) return best;  // incumbent gone: forced switch
  if (best != current && scores.at(best) - cur->second < delta) return current;
  return best;
}

AgentId select_survivor(const std::map<AgentId, double>& scores,
                        const AgentId& leader) {
  if (scores.size() <= 1) return {};  // nobody left to survive the leader
  return argmax_score(scores, leader);
}

// --- GhsNode ----------------------------------------------------------------

GhsNode::GhsNode(AgentId self, std::vector<AgentId> neighbors,
                 std::uint64_t round)
    : self_(std::move(self)), round_(round) {
  for (auto& n : neighbors) {
    if (n == self_) continue;
    edges_[n] = Edge{edge_weight(self_, n)};
  }
  fragment_ = self_;
}

void GhsNode::send(const AgentId& to, msg::Message m) {
  outbox_.push_back({to, std::move(m)});
}

std::vector<GhsNode::Out> GhsNode::take_outbox() {
  auto out = std::move(outbox_);
  outbox_.clear();
  return out;
}

std::vector<AgentId> GhsNode::tree_neighbors() const {
  std::vector<AgentId> out;
  for (const auto& [peer, e] : edges_)
    if (e.state == EdgeState::Branch) out.push_back(peer);
  return out;
}

std::optional<AgentId> GhsNode::min_basic_edge() const {
  std::optional<AgentId> best;
  for (const auto& [peer, e] : edges_) {
    if (e.state != EdgeState::Basic) continue;
    if (!best || weight_less(e.weight, edges_.at(*best).weight)) best = peer;
  }
  return best;
}

void GhsNode::start() {
  if (edges_.empty()) {
    // Nothing to span: this node alone is the tree.
    done_ = true;
    core_peer_ = self_;
    return;
  }
  // Wake up: join across the lightest adjacent edge.
  AgentId target;
  std::string lightest;
  for (const auto& [peer, e] : edges_) {
    if (target.empty() || weight_less(e.weight, lightest)) {
      target = peer;
      lightest = e.weight;
    }
  }
  edges_[target].state = EdgeState::Branch;
  connect_sent_on_ = target;
  send(target, msg::GhsConnect{round_, 0});
}

void GhsNode::on_message(const AgentId& from, const msg::Message& m) {
  if (!edges_.count(from)) return;  // not part of this round's graph
  bool defer = false;
  process(from, m, defer);
  if (defer) {
    deferred_.emplace_back(from, m);
  } else {
    drain_deferred();
  }
}

void GhsNode::drain_deferred() {
  bool progress = true;
  while (progress && !deferred_.empty()) {
    progress = false;
    std::size_t n = deferred_.size();
    for (std::size_t i = 0; i < n; ++i) {
      auto [from, m] = deferred_.front();
      deferred_.pop_front();
      bool defer = false;
      process(from, m, defer);
      if (defer)
        deferred_.emplace_back(std::move(from), std::move(m));
      else
        progress = true;
    }
  }
}

void GhsNode::process(const AgentId& from, const msg::Message& m, bool& defer) {
  if (const auto* c = std::get_if<msg::GhsConnect>(&m)) {
    Edge& e = edges_[from];
    if (e.state == EdgeState::Branch && connect_sent_on_ == from) {
      // Both sides connected over the same edge: merge. The peer's Connect
      // carries the level both fragments had when they chose this edge, so
      // the reply is pinned to it even if our own level already moved on.
      // Each endpoint tells the other to initiate the new fragment.
      send(from, msg::GhsInitiate{round_, c->level + 1, e.weight, 0});
      return;
    }
    if (c->level < level_) {
      // Absorb the lower-level fragment.
      e.state = EdgeState::Branch;
      send(from, msg::GhsInitiate{round_, level_, fragment_,
                                  find_phase_ ? 0 : 1});
      if (find_phase_) ++find_count_;
      return;
    }
    defer = true;  // equal level but no Connect from us yet
    return;
  }
  if (const auto* i = std::get_if<msg::GhsInitiate>(&m)) {
    level_ = i->level;
    fragment_ = i->fragment;
    find_phase_ = i->state == 0;
    in_branch_ = from;
    best_edge_.clear();
    best_weight_.clear();
    reported_ = false;
    find_count_ = 0;
    for (const auto& [peer, e] : edges_) {
      if (peer == from || e.state != EdgeState::Branch) continue;
      send(peer, msg::GhsInitiate{round_, level_, fragment_, i->state});
      if (find_phase_) ++find_count_;
    }
    if (find_phase_) run_test();
    return;
  }
  if (const auto* t = std::get_if<msg::GhsTest>(&m)) {
    if (t->level > level_) {
      defer = true;
      return;
    }
    if (t->fragment == fragment_) {
      if (edges_[from].state == EdgeState::Basic)
        edges_[from].state = EdgeState::Rejected;
      send(from, msg::GhsReject{round_});
    } else {
      send(from, msg::GhsAccept{round_});
    }
    return;
  }
  if (std::get_if<msg::GhsAccept>(&m)) {
    if (!testing_ || test_edge_ != from) return;  // answer to a stale probe
    testing_ = false;
    test_edge_.clear();
    const std::string& w = edges_[from].weight;
    if (weight_less(w, best_weight_)) {
      best_weight_ = w;
      best_edge_ = from;
    }
    report_check();
    return;
  }
  if (std::get_if<msg::GhsReject>(&m)) {
    if (edges_[from].state == EdgeState::Basic)
      edges_[from].state = EdgeState::Rejected;
    if (testing_ && test_edge_ == from) {
      testing_ = false;
      test_edge_.clear();
      run_test();
    }
    return;
  }
  if (const auto* r = std::get_if<msg::GhsReport>(&m)) {
    if (from != in_branch_) {
      --find_count_;
      if (weight_less(r->best_weight, best_weight_)) {
        best_weight_ = r->best_weight;
        best_edge_ = from;
      }
      report_check();
      return;
    }
    // Report over the core edge from the other half.
    if (find_phase_) {
      defer = true;
      return;
    }
    if (r->best_weight.empty() && best_weight_.empty()) {
      done_ = true;
      core_peer_ = from;
    } else if (weight_less(best_weight_, r->best_weight)) {
      // Our half owns the minimum outgoing edge.
      change_root();
    }
    return;
  }
  if (std::get_if<msg::GhsChangeRoot>(&m)) {
    change_root();
    return;
  }
}

void GhsNode::run_test() {
  auto e = min_basic_edge();
  if (e) {
    testing_ = true;
    test_edge_ = *e;
    send(*e, msg::GhsTest{round_, level_, fragment_});
  } else {
    testing_ = false;
    test_edge_.clear();
    report_check();
  }
}

void GhsNode::report_check() {
  if (find_count_ != 0 || testing_ || reported_ || !find_phase_) return;
  find_phase_ = false;
  reported_ = true;
  if (!in_branch_.empty())
    send(in_branch_, msg::GhsReport{round_, best_weight_});
  drain_deferred();
}

void GhsNode::change_root() {
  if (best_edge_.empty()) return;
  Edge& e = edges_[best_edge_];
  if (e.state == EdgeState::Branch) {
    send(best_edge_, msg::GhsChangeRoot{round_});
  } else {
    e.state = EdgeState::Branch;
    connect_sent_on_ = best_edge_;
    send(best_edge_, msg::GhsConnect{round_, level_});
  }
}

// --- ElectionDriver ---------------------------------------------------------

ElectionDriver::ElectionDriver(AgentId self, std::vector<AgentId> peers,
                               ElectionConfig cfg, ElectionHooks hooks)
    : self_(std::move(self)),
      peers_(std::move(peers)),
      cfg_(cfg),
      hooks_(std::move(hooks)) {}

void ElectionDriver::start() {
  running_ = true;
  ++generation_;
  double now = hooks_.now();
  double next = std::ceil(now / cfg_.period) * cfg_.period;
  if (next <= now + 1e-9) next = now;  // first boundary can be immediate
  auto gen = generation_;
  hooks_.defer(next - now, [this, gen] {
    if (gen == generation_ && running_) round_tick();
  });
}

void ElectionDriver::pause() {
  running_ = false;
  ++generation_;
  ghs_.reset();
  gather_active_ = false;
}

void ElectionDriver::resume() {
  if (running_) return;
  start();
}

void ElectionDriver::round_tick() {
  double now = hooks_.now();
  current_round_ = std::uint64_t(std::llround(now / cfg_.period));
  ++rounds_started_;
  heard_.clear();
  heard_.insert(self_);
  ghs_.reset();
  gather_active_ = false;
  gather_parent_.clear();
  gather_pending_.clear();
  gathered_.clear();

  auto gen = generation_;
  for (int r = 0; r < cfg_.hello_repeats; ++r) {
    hooks_.defer(r * cfg_.hello_spacing, [this, gen] {
      if (gen != generation_ || !running_) return;
      for (const auto& p : peers_)
        hooks_.send(p, msg::Hello{current_round_}, false);
    });
  }
  std::uint64_t round = current_round_;
  hooks_.defer(cfg_.probe_window, [this, gen, round] {
    if (gen == generation_ && running_ && current_round_ == round)
      begin_ghs(round);
  });
  hooks_.defer(cfg_.period, [this, gen] {
    if (gen == generation_ && running_) round_tick();
  });
}

void ElectionDriver::begin_ghs(std::uint64_t round) {
  if (heard_.size() == 1) {
    // Nobody responded: act as a fragment of one.
    gathered_[self_] = own_vitals();
    decide();
    return;
  }
  ghs_.emplace(self_, std::vector<AgentId>(heard_.begin(), heard_.end()),
               round);
  ghs_->start();
  flush_ghs();
}

void ElectionDriver::flush_ghs() {
  if (!ghs_) return;
  for (auto& out : ghs_->take_outbox())
    hooks_.send(out.to, std::move(out.m), true);
  if (ghs_->done() && ghs_->is_appointer() && !gather_active_) start_gather();
}

msg::AgentVitals ElectionDriver::own_vitals() const {
  msg::AgentVitals v;
  v.score = hooks_.score();
  v.accepted_epoch = accepted_epoch_;
  v.accepted_leader = leader_;
  return v;
}

void ElectionDriver::start_gather() {
  gather_active_ = true;
  gather_parent_.clear();
  gathered_.clear();
  gathered_[self_] = own_vitals();
  gather_pending_.clear();
  for (const auto& peer : ghs_->tree_neighbors()) gather_pending_.insert(peer);
  if (gather_pending_.empty()) {
    decide();
    return;
  }
  for (const auto& peer : gather_pending_)
    hooks_.send(peer, msg::GatherScores{current_round_}, true);
}

void ElectionDriver::on_gather(const AgentId& from,
                               const msg::GatherScores& m) {
  // Only the core endpoints observe termination; any tree node may be asked
  // once the appointer has, so the only gates are round identity and an
  // actual tree to walk.
  if (!ghs_ || m.round != current_round_) return;
  gather_active_ = true;
  gather_parent_ = from;
  gathered_.clear();
  gathered_[self_] = own_vitals();
  gather_pending_.clear();
  for (const auto& peer : ghs_->tree_neighbors())
    if (peer != from) gather_pending_.insert(peer);
  if (gather_pending_.empty()) {
    maybe_finish_gather();
    return;
  }
  for (const auto& peer : gather_pending_)
    hooks_.send(peer, msg::GatherScores{m.round}, true);
}

void ElectionDriver::on_scores(const AgentId& from, const msg::ScoresUp& m) {
  if (!gather_active_ || m.round != current_round_) return;
  if (!gather_pending_.count(from)) return;
  gather_pending_.erase(from);
  for (const auto& [id, v] : m.vitals) gathered_[id] = v;
  maybe_finish_gather();
}

void ElectionDriver::maybe_finish_gather() {
  if (!gather_pending_.empty()) return;
  if (gather_parent_.empty()) {
    decide();
  } else {
    msg::ScoresUp up;
    up.round = current_round_;
    up.vitals = gathered_;
    hooks_.send(gather_parent_, std::move(up), true);
    gather_active_ = false;
  }
}

void ElectionDriver::decide() {
  gather_active_ = false;
  std::map<AgentId, double> scores;
  for (const auto& [id, v] : gathered_) scores[id] = v.score;

  // The incumbent is the leader most of the participants currently accept.
  // Counting (rather than trusting the highest epoch) keeps an agent that
  // elected itself while isolated from hijacking the incumbency on rejoin.
  // Ties break toward the higher backing epoch, then the smaller id.
  int max_epoch = 0;
  for (const auto& [id, v] : gathered_)
    max_epoch = std::max(max_epoch, v.accepted_epoch);
  std::map<AgentId, std::pair<int, int>> votes;  // leader -> (count, best epoch)
  for (const auto& [id, v] : gathered_) {
    auto& e = votes[v.accepted_leader];
    e.first += 1;
    e.second = std::max(e.second, v.accepted_epoch);
  }
  AgentId current;
  std::pair<int, int> best_vote{-1, -1};
  for (const auto& [leader, vote] : votes) {
    if (vote > best_vote) {
      best_vote = vote;
      current = leader;
    }
  }

  AgentId chosen = select_leader(scores, current, cfg_.hysteresis);
  AgentId survivor = select_survivor(scores, chosen);

  // A new epoch is only needed when someone at the newest epoch would refuse
  // a refresh of it, i.e. accepted a different leader. Participants behind on
  // epochs accept the announcement anyway.
  bool bump = false;
  for (const auto& [id, v] : gathered_)
    if (v.accepted_epoch == max_epoch && v.accepted_leader != chosen)
      bump = true;
  int epoch = max_epoch + (bump ? 1 : 0);
  msg::LeaderAnnounce ann;
  ann.round = current_round_;
  ann.epoch = epoch;
  ann.leader = chosen;
  ann.survivor = survivor;
  for (const auto& [id, v] : gathered_) ann.participants.insert(id);
  for (const auto& id : ann.participants) {
    hooks_.send(id, ann, true);
    ++announcements_sent_;
  }
}

void ElectionDriver::on_message(const AgentId& from, const msg::Message& m) {
  if (!running_) return;
  if (const auto* h = std::get_if<msg::Hello>(&m)) {
    if (h->round == current_round_) heard_.insert(from);
    return;
  }
  if (const auto* g = std::get_if<msg::GatherScores>(&m)) {
    on_gather(from, *g);
    return;
  }
  if (const auto* s = std::get_if<msg::ScoresUp>(&m)) {
    on_scores(from, *s);
    return;
  }
  if (const auto* a = std::get_if<msg::LeaderAnnounce>(&m)) {
    bool refresh = a->epoch == accepted_epoch_ && !leader_.empty() &&
                   a->leader == leader_;
    if (a->epoch > accepted_epoch_ || refresh) {
      bool changed = a->leader != leader_;
      accepted_epoch_ = a->epoch;
      leader_ = a->leader;
      survivor_ = a->survivor;
      participants_ = a->participants;
      if (hooks_.on_announce) hooks_.on_announce(*a, changed);
    }
    return;
  }
  // GHS traffic.
  std::uint64_t round = 0;
  if (const auto* c = std::get_if<msg::GhsConnect>(&m)) round = c->round;
  else if (const auto* i = std::get_if<msg::GhsInitiate>(&m)) round = i->round;
  else if (const auto* t = std::get_if<msg::GhsTest>(&m)) round = t->round;
  else if (const auto* ac = std::get_if<msg::GhsAccept>(&m)) round = ac->round;
  else if (const auto* rj = std::get_if<msg::GhsReject>(&m)) round = rj->round;
  else if (const auto* rp = std::get_if<msg::GhsReport>(&m)) round = rp->round;
  else if (const auto* cr = std::get_if<msg::GhsChangeRoot>(&m))
    round = cr->round;
  else
    return;
  if (!ghs_ || round != current_round_) return;
  ghs_->on_message(from, m);
  flush_ghs();
}

}  // namespace psesim::election
