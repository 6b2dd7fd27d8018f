#include "psesim/netsim.hpp"

#include <algorithm>
#include <fstream>

namespace psesim::net {

// --- EventQueue -------------------------------------------------------------

std::uint64_t EventQueue::at(double t, Fn fn) {
  if (t < now_) t = now_;
  std::uint64_t id = next_seq_++;
  items_.emplace(std::make_pair(t, id), std::move(fn));
  return id;
}

void EventQueue::cancel(std::uint64_t id) {
  for (auto it = items_.begin(); it != items_.end(); ++it) {
    if (it->first.second == id) {
      items_.erase(it);
      return;
    }
  }
}

bool EventQueue::step() {
  if (items_.empty()) return false;
  auto it = items_.begin();
  now_ = it->first.first;
  Fn fn = std::move(it->second);
  items_.erase(it);
  ++executed_;
  fn();
  return true;
}

std::optional<double> EventQueue::peek_time() const {
  if (items_.empty()) return std::nullopt;
  return items_.begin()->first.first;
}

void EventQueue::run_until(double until) {
  while (!items_.empty() && items_.begin()->first.first <= until) step();
  if (now_ < until) now_ = until;
}

// --- TraceWriter ------------------------------------------------------------

std::uint64_t fnv1a(std::uint64_t seed, std::string_view bytes) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

void TraceWriter::open(const std::string& path) { path_ = path; }

void TraceWriter::record(double t, std::string_view kind, json fields) {
  fields["t"] = t;
  fields["kind"] = std::string(kind);
  std::string line = fields.dump();
  line += '\n';
  hash_ = fnv1a(hash_, line);
  ++lines_;
  events_.push_back(std::move(fields));
  if (!path_.empty()) buffer_ += line;
}

void TraceWriter::close() {
  if (path_.empty()) return;
  std::ofstream out(path_);
  out << buffer_;
  char hex[32];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(hash_));
  out << json{{"kind", "trace-end"}, {"lines", lines_}, {"hash", hex}}.dump()
      << "\n";
  path_.clear();
}

// --- Network ----------------------------------------------------------------

Network::Network(EventQueue& q, TraceWriter& trace, std::uint64_t seed)
    : queue_(&q), trace_(&trace), rng_(seed) {}

void Network::add_agent(const AgentId& id, Handler handler) {
  handlers_[id] = std::move(handler);
}

void Network::set_link(const AgentId& a, const AgentId& b,
                       const LinkSpec& spec) {
  links_[{a, b}] = spec;
  links_[{b, a}] = spec;
}

void Network::set_drop_prob(double p) {
  default_link_.drop_prob = p;
  for (auto& [key, spec] : links_) spec.drop_prob = p;
}

void Network::set_down(const AgentId& id, bool down) {
  if (down)
    down_.insert(id);
  else
    down_.erase(id);
}

void Network::set_retransmit(double interval_s, int max_attempts) {
  rto_ = interval_s;
  max_attempts_ = max_attempts;
}

bool Network::blocked(const AgentId& a, const AgentId& b, double t) const {
  for (const auto& o : outages_) {
    if (t < o.start || t >= o.end) continue;
    if (o.group_a.empty() && o.group_b.empty()) return true;
    bool ab = o.group_a.count(a) && o.group_b.count(b);
    bool ba = o.group_b.count(a) && o.group_a.count(b);
    if (ab || ba) return true;
  }
  return false;
}

const LinkSpec& Network::link(const AgentId& a, const AgentId& b) const {
  auto it = links_.find({a, b});
  return it == links_.end() ? default_link_ : it->second;
}

void Network::send(const AgentId& src, const AgentId& dst, msg::Message m,
                   Delivery delivery) {
  std::size_t bytes = msg::wire_size(m);
  if (src == dst) {
    // Local loopback: next event-loop turn, no loss.
    Envelope env{src, dst, queue_->now(), queue_->now(), bytes, std::move(m)};
    queue_->at(queue_->now(), [this, env = std::move(env)]() {
      auto it = handlers_.find(env.dst);
      if (it != handlers_.end()) it->second(env);
    });
    return;
  }
  if (delivery == Delivery::BestEffort) {
    transmit(Wire{src, dst, std::move(m), bytes, 0, false, 0});
    return;
  }
  LinkKey lk{src, dst};
  tx_[lk].queue.push_back(
      ReliableTx{++next_rel_seq_[lk], std::move(m), bytes});
  pump(lk);
}

void Network::pump(const LinkKey& lk) {
  RelLink& rl = tx_[lk];
  if (rl.in_flight || rl.queue.empty()) return;
  rl.in_flight = true;
  rl.attempts_left = max_attempts_ - 1;
  const ReliableTx& head = rl.queue.front();
  transmit(Wire{lk.src, lk.dst, head.payload, head.bytes, head.seq, false, 0});
  arm_timer(lk);
}

void Network::arm_timer(const LinkKey& lk) {
  tx_[lk].timer = queue_->at(queue_->now() + rto_, [this, lk]() {
    RelLink& rl = tx_[lk];
    if (!rl.in_flight || rl.queue.empty()) return;
    if (rl.attempts_left <= 0) {
      trace_->record(queue_->now(), "net-give-up",
                     {{"src", lk.src},
                      {"dst", lk.dst},
                      {"msg", msg::message_kind(rl.queue.front().payload)}});
      rl.queue.pop_front();
      rl.in_flight = false;
      pump(lk);  // skip the head but keep everything behind it in order
      return;
    }
    rl.attempts_left--;
    const ReliableTx& head = rl.queue.front();
    transmit(
        Wire{lk.src, lk.dst, head.payload, head.bytes, head.seq, false, 0});
    arm_timer(lk);
  });
}

bool Network::transmit(const Wire& w) {
  ++attempts_;
  double t = queue_->now();
  const char* reason = nullptr;
  if (down_.count(w.src)) reason = "src-down";
  else if (down_.count(w.dst)) reason = "dst-down";
  else if (blocked(w.src, w.dst, t)) reason = "outage";
  const LinkSpec& ls = link(w.src, w.dst);
  if (!reason && ls.drop_prob > 0.0) {
    if (std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < ls.drop_prob)
      reason = "loss";
  }
  if (reason) {
    ++dropped_;
    if (!w.is_ack)
      trace_->record(t, "net-drop",
                     {{"src", w.src},
                      {"dst", w.dst},
                      {"msg", msg::message_kind(w.payload)},
                      {"why", reason}});
    return false;
  }
  double lat = ls.latency;
  if (ls.jitter > 0.0)
    lat += std::uniform_real_distribution<double>(0.0, ls.jitter)(rng_);
  double& last = last_arrival_[{w.src, w.dst}];
  double arrival = std::max(t + lat, last);
  last = arrival;
  Wire ww = w;
  ww.sent_at = t;
  queue_->at(arrival, [this, ww = std::move(ww), arrival]() {
    deliver(ww, arrival);
  });
  return true;
}

void Network::deliver(const Wire& w, double at) {
  if (down_.count(w.dst)) {
    ++dropped_;
    return;
  }
  if (w.is_ack) {
    // Ack travels dst->src of the original data link. Only the in-flight
    // head can be acked; stale acks (e.g. after a give-up) are ignored.
    LinkKey data_link{w.dst, w.src};
    auto lit = tx_.find(data_link);
    if (lit != tx_.end() && lit->second.in_flight &&
        lit->second.queue.front().seq == w.ack_seq) {
      queue_->cancel(lit->second.timer);
      lit->second.queue.pop_front();
      lit->second.in_flight = false;
      pump(data_link);
    }
    return;
  }
  ++delivered_;
  if (w.rel_seq > 0) {
    // Always ack, even duplicates (the previous ack may have been lost).
    transmit(Wire{w.dst, w.src, msg::Message{msg::Hello{}}, 9, 0, true,
                  w.rel_seq});
    ReliableRx& r = rx_[{w.src, w.dst}];
    bool dup = w.rel_seq <= r.contiguous || r.seen.count(w.rel_seq);
    if (dup) return;
    r.seen.insert(w.rel_seq);
    while (r.seen.count(r.contiguous + 1)) {
      r.seen.erase(r.contiguous + 1);
      ++r.contiguous;
    }
  }
  auto it = handlers_.find(w.dst);
  if (it != handlers_.end())
    it->second(Envelope{w.src, w.dst, w.sent_at, at, w.bytes, w.payload});
}

}  // namespace psesim::net
