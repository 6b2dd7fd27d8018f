#include "psesim/ssdb.hpp"

#include <algorithm>

namespace psesim::ssdb {

void Store::put(const RecordKey& key, StateValue value, double stamp,
                const AgentId& writer, bool planning_relevant) {
  auto it = recs_.find(key);
  if (it != recs_.end() && it->second.stamp > stamp) {
    // Local clock should not run backwards; keep the write but preserve
    // monotonicity so it still replicates.
    stamp = it->second.stamp;
  }
  recs_[key] =
      VersionedRecord{key, std::move(value), stamp, writer, planning_relevant};
  seq_[key] = next_seq_++;
}

bool Store::merge(const VersionedRecord& rec) {
  auto it = recs_.find(rec.key);
  if (it != recs_.end() && !rec.newer_than(it->second)) return false;
  recs_[rec.key] = rec;
  seq_[rec.key] = next_seq_++;
  return true;
}

std::optional<VersionedRecord> Store::get(const RecordKey& key) const {
  auto it = recs_.find(key);
  if (it == recs_.end()) return std::nullopt;
  return it->second;
}

std::optional<double> Store::get_number(const RecordKey& key) const {
  auto rec = get(key);
  if (!rec) return std::nullopt;
  if (auto* d = std::get_if<double>(&rec->value)) return *d;
  return std::nullopt;
}

std::optional<bool> Store::get_flag(const RecordKey& key) const {
  auto rec = get(key);
  if (!rec) return std::nullopt;
  if (auto* b = std::get_if<bool>(&rec->value)) return *b;
  return std::nullopt;
}

std::vector<VersionedRecord> Store::snapshot() const {
  std::vector<VersionedRecord> out;
  out.reserve(recs_.size());
  for (const auto& [key, rec] : recs_) out.push_back(rec);
  return out;
}

void Store::load_snapshot(const std::vector<VersionedRecord>& recs) {
  for (const auto& r : recs) merge(r);
}

std::vector<VersionedRecord> Store::records_after(std::uint64_t seq) const {
  std::vector<std::pair<std::uint64_t, const VersionedRecord*>> picked;
  for (const auto& [key, s] : seq_) {
    if (s > seq) picked.emplace_back(s, &recs_.at(key));
  }
  std::sort(picked.begin(), picked.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<VersionedRecord> out;
  out.reserve(picked.size());
  for (const auto& [s, rec] : picked) out.push_back(*rec);
  return out;
}

std::vector<VersionedRecord> Syncer::pending_for(const AgentId& dst) const {
  auto it = acked_.find(dst);
  auto recs = store_->records_after(it == acked_.end() ? 0 : it->second);
  std::erase_if(recs,
                [](const VersionedRecord& r) { return !r.planning_relevant; });
  return recs;
}

void Syncer::on_ack(const AgentId& dst, std::uint64_t watermark) {
  auto& cur = acked_[dst];
  cur = std::max(cur, watermark);
}

std::uint64_t Syncer::acked(const AgentId& dst) const {
  auto it = acked_.find(dst);
  return it == acked_.end() ? 0 : it->second;
}

}  // namespace psesim::ssdb
