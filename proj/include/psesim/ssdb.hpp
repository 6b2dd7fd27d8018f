// Availability-first shared state store: every agent keeps a full replica,
// writes locally, and reconciles by last-writer-wins timestamps.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "psesim/core.hpp"

namespace psesim::ssdb {

struct RecordKey {
  std::string owner;  // agent id or "team" for shared keys
  std::string name;
  auto operator<=>(const RecordKey&) const = default;
  std::string str() const { return owner + "." + name; }
};

struct VersionedRecord {
  RecordKey key;
  StateValue value;
  double stamp = 0.0;   // writer's clock at write time
  AgentId writer;
  // Only planning-relevant records are pushed to the leader/survivor; local
  // bookkeeping (per-instance telemetry) stays on the writing agent.
  bool planning_relevant = true;
  bool newer_than(const VersionedRecord& other) const {
    if (stamp != other.stamp) return stamp > other.stamp;
    return writer > other.writer;  // deterministic tie-break
  }
};

class Store {
 public:
  // Local write; always wins over the stored version (local clock moves
  // forward) and bumps the replication sequence.
  void put(const RecordKey& key, StateValue value, double stamp,
           const AgentId& writer, bool planning_relevant = true);

  // Remote record via sync. Applied only if strictly newer. Returns whether
  // it was applied.
  bool merge(const VersionedRecord& rec);

  std::optional<VersionedRecord> get(const RecordKey& key) const;
  std::optional<double> get_number(const RecordKey& key) const;
  std::optional<bool> get_flag(const RecordKey& key) const;

  std::vector<VersionedRecord> snapshot() const;
  void load_snapshot(const std::vector<VersionedRecord>& recs);

  // Replication bookkeeping: every accepted write gets a local sequence
  // number; destinations acknowledge watermarks and unacked records are
  // re-sent on the next sync tick.
  std::uint64_t watermark() const { return next_seq_ - 1; }
  std::vector<VersionedRecord> records_after(std::uint64_t seq) const;

  std::size_t size() const { return recs_.size(); }

 private:
  std::map<RecordKey, VersionedRecord> recs_;
  std::map<RecordKey, std::uint64_t> seq_;
  std::uint64_t next_seq_ = 1;
};

// Per-destination sync cursor management.
class Syncer {
 public:
  explicit Syncer(Store& store) : store_(&store) {}

  // Records the destination still needs, and the watermark to attach.
  std::vector<VersionedRecord> pending_for(const AgentId& dst) const;
  std::uint64_t batch_watermark() const { return store_->watermark(); }
  void on_ack(const AgentId& dst, std::uint64_t watermark);
  std::uint64_t acked(const AgentId& dst) const;

 private:
  Store* store_;
  std::map<AgentId, std::uint64_t> acked_;
};

}  // namespace psesim::ssdb
