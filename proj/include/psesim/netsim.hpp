// Deterministic discrete-event network simulation: a single event queue,
// lossy links with latency/jitter/outages, and an optional reliable channel
// layered per link. Reliable delivery is stop-and-wait: at most one un-acked
// message per (src, dst), later sends queue behind it, so arrival order always
// matches send order. A message that exhausts its retries is skipped, never
// overtaken.
#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "psesim/core.hpp"
#include "psesim/messages.hpp"

namespace psesim::net {

using json = nlohmann::json;

// Strict (time, insertion-sequence) ordering; ties execute in schedule order.
class EventQueue {
 public:
  using Fn = std::function<void()>;

  std::uint64_t at(double t, Fn fn);
  void cancel(std::uint64_t id);

  bool step();  // run the earliest pending event; false when drained
  bool empty() const { return items_.empty(); }
  double now() const { return now_; }
  std::optional<double> peek_time() const;
  std::uint64_t executed() const { return executed_; }

  // Run until the queue drains or the next event is past `until`.
  void run_until(double until);

 private:
  std::map<std::pair<double, std::uint64_t>, Fn> items_;
  double now_ = 0.0;
  std::uint64_t next_seq_ = 0;
  std::uint64_t executed_ = 0;
};

// JSON-lines event trace with a running FNV-1a 64 hash over the emitted
// bytes, so two runs can be compared by a single number.
class TraceWriter {
 public:
  void open(const std::string& path);
  void record(double t, std::string_view kind, json fields);
  void close();  // appends a footer line with the hash (not itself hashed)

  std::uint64_t hash() const { return hash_; }
  std::size_t lines() const { return lines_; }
  const std::vector<json>& events() const { return events_; }

 private:
  std::vector<json> events_;
  std::uint64_t hash_ = 14695981039346656037ull;
  std::size_t lines_ = 0;
  std::string path_;
  std::string buffer_;
};

std::uint64_t fnv1a(std::uint64_t seed, std::string_view bytes);

struct LinkSpec {
  double latency = 0.05;    // seconds, fixed component
  double jitter = 0.0;      // uniform [0, jitter) added per attempt
  double drop_prob = 0.0;   // per transmission attempt
};

// A window during which traffic between two groups is cut. Empty groups
// mean the outage applies to every link.
struct Outage {
  double start = 0;
  double end = 0;
  std::set<AgentId> group_a;
  std::set<AgentId> group_b;
};

struct Envelope {
  AgentId src;
  AgentId dst;
  double sent_at = 0;
  double arrival = 0;
  std::size_t bytes = 0;
  msg::Message payload;
};

enum class Delivery { BestEffort, Reliable };

class Network {
 public:
  Network(EventQueue& q, TraceWriter& trace, std::uint64_t seed);

  using Handler = std::function<void(const Envelope&)>;
  void add_agent(const AgentId& id, Handler handler);

  void set_default_link(const LinkSpec& spec) { default_link_ = spec; }
  void set_link(const AgentId& a, const AgentId& b, const LinkSpec& spec);
  void set_drop_prob(double p);  // all links
  void add_outage(const Outage& o) { outages_.push_back(o); }
  void set_down(const AgentId& id, bool down);
  bool is_down(const AgentId& id) const { return down_.count(id) > 0; }

  void send(const AgentId& src, const AgentId& dst, msg::Message m,
            Delivery delivery = Delivery::BestEffort);

  // Reliable-channel tuning.
  void set_retransmit(double interval_s, int max_attempts);

  std::uint64_t attempts() const { return attempts_; }
  std::uint64_t dropped() const { return dropped_; }
  std::uint64_t delivered() const { return delivered_; }

 private:
  struct Wire {  // scheduled transmission
    AgentId src, dst;
    msg::Message payload;
    std::size_t bytes;
    std::uint64_t rel_seq = 0;  // nonzero = reliable data
    bool is_ack = false;
    std::uint64_t ack_seq = 0;
    double sent_at = 0;
  };
  struct LinkKey {
    AgentId src, dst;
    auto operator<=>(const LinkKey&) const = default;
  };
  struct ReliableTx {  // one queued reliable message
    std::uint64_t seq = 0;
    msg::Message payload;
    std::size_t bytes = 0;
  };
  struct RelLink {  // sender side: stop-and-wait, head of queue is in flight
    std::deque<ReliableTx> queue;
    bool in_flight = false;
    int attempts_left = 0;  // remaining retries for the head
    std::uint64_t timer = 0;
  };
  struct ReliableRx {  // receiver-side dedup (at-least-once upstream,
                       // exactly-once after this filter)
    std::uint64_t contiguous = 0;  // all seqs <= this already delivered
    std::set<std::uint64_t> seen;  // delivered seqs above the watermark
  };

  bool blocked(const AgentId& a, const AgentId& b, double t) const;
  const LinkSpec& link(const AgentId& a, const AgentId& b) const;
  // Returns false if the attempt was dropped at send time.
  bool transmit(const Wire& w);
  void deliver(const Wire& w, double at);
  void pump(const LinkKey& lk);       // start sending the head if idle
  void arm_timer(const LinkKey& lk);  // retransmit / give-up timer for head

  EventQueue* queue_;
  TraceWriter* trace_;
  std::mt19937_64 rng_;
  std::map<AgentId, Handler> handlers_;
  std::set<AgentId> down_;
  LinkSpec default_link_;
  std::map<LinkKey, LinkSpec> links_;
  std::vector<Outage> outages_;
  std::map<LinkKey, double> last_arrival_;
  std::map<LinkKey, std::uint64_t> next_rel_seq_;
  std::map<LinkKey, RelLink> tx_;
  std::map<LinkKey, ReliableRx> rx_;
  // 0.4s comfortably exceeds one ack round-trip at default latencies, so a
  // retry means the attempt was really lost.  300 attempts keeps the overall
  // give-up horizon at two minutes.
  double rto_ = 0.4;
  int max_attempts_ = 300;
  std::uint64_t attempts_ = 0, dropped_ = 0, delivered_ = 0;
};

}  // namespace psesim::net
