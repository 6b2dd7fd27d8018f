#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>

#include "psesim/ssdb.hpp"

using namespace psesim;
using namespace psesim::ssdb;

TEST_CASE("last-writer-wins by timestamp, writer id breaks ties") {
  Store s;
  RecordKey k{"team", "coordinated"};
  CHECK(s.merge({k, true, 10.0, "R1"}));
  CHECK_FALSE(s.merge({k, false, 9.0, "R2"}));   // older loses
  CHECK(s.get_flag(k) == true);
  CHECK(s.merge({k, false, 10.0, "R2"}));        // tie: higher writer wins
  CHECK(s.get_flag(k) == false);
  CHECK_FALSE(s.merge({k, true, 10.0, "R1"}));   // tie: lower writer loses
  CHECK(s.merge({k, true, 11.0, "R1"}));
  CHECK(s.get_flag(k) == true);
}

TEST_CASE("merge is idempotent and does not bump the watermark on no-ops") {
  Store s;
  RecordKey k{"R1", "soc"};
  s.merge({k, 55.0, 1.0, "R1"});
  auto w = s.watermark();
  CHECK_FALSE(s.merge({k, 55.0, 1.0, "R1"}));
  CHECK(s.watermark() == w);
}

TEST_CASE("merge order does not matter (eventual convergence)") {
  std::mt19937_64 rng(11);
  std::vector<VersionedRecord> recs;
  std::vector<RecordKey> keys = {
      {"R1", "soc"}, {"R2", "soc"}, {"team", "coordinated"}, {"R1", "pose"}};
  std::uniform_int_distribution<int> key_pick(0, int(keys.size()) - 1);
  std::uniform_int_distribution<int> stamp(0, 20);
  std::uniform_int_distribution<int> writer(1, 3);
  for (int i = 0; i < 60; ++i) {
    recs.push_back({keys[key_pick(rng)], double(i), double(stamp(rng)),
                    "R" + std::to_string(writer(rng))});
  }
  // Oracle: winner per key = max by (stamp, writer), first occurrence wins
  // among exact duplicates (merge keeps the incumbent on ties).
  std::map<RecordKey, VersionedRecord> expect;
  for (const auto& r : recs) {
    auto it = expect.find(r.key);
    if (it == expect.end() || r.newer_than(it->second)) expect[r.key] = r;
  }

  for (int order = 0; order < 5; ++order) {
    auto shuffled = recs;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    // "First occurrence" of equal versions differs between shuffles, but
    // equal versions carry (stamp, writer) identity, so the surviving
    // version is the same even if the payload of a duplicate version pair
    // differed - build values so that never happens: payload i is unique,
    // so assert only on version identity.
    Store s;
    for (const auto& r : shuffled) s.merge(r);
    for (const auto& [k, want] : expect) {
      auto got = s.get(k);
      REQUIRE(got.has_value());
      CHECK(got->stamp == want.stamp);
      CHECK(got->writer == want.writer);
    }
  }
}

TEST_CASE("replication cursor: watermark, records_after, syncer acks") {
  Store s;
  s.put({"R1", "soc"}, 70.0, 1.0, "R1");
  s.put({"R1", "cpu_temp"}, 30.0, 1.0, "R1");
  s.put({"R1", "soc"}, 69.0, 2.0, "R1");  // re-write bumps the sequence
  CHECK(s.watermark() == 3);

  auto all = s.records_after(0);
  REQUIRE(all.size() == 2);  // two live keys
  // Order follows the replication sequence: cpu_temp (seq 2), soc (seq 3).
  CHECK(all[0].key.name == "cpu_temp");
  CHECK(all[1].key.name == "soc");

  Syncer sync(s);
  CHECK(sync.pending_for("L").size() == 2);
  sync.on_ack("L", 3);
  CHECK(sync.pending_for("L").empty());
  CHECK(sync.pending_for("S").size() == 2);  // other destination unaffected
  // Stale ack never regresses the cursor.
  sync.on_ack("L", 1);
  CHECK(sync.pending_for("L").empty());

  s.put({"R1", "soc"}, 68.0, 3.0, "R1");
  CHECK(sync.pending_for("L").size() == 1);
  CHECK(sync.pending_for("L")[0].key.name == "soc");
}

TEST_CASE("relayed records keep replicating (merge bumps the sequence)") {
  Store leader;
  Syncer leader_sync(leader);
  // A rover record arrives at the leader...
  leader.merge({{"R2", "soc"}, 44.0, 5.0, "R2"});
  // ...and is now pending for the survivor.
  auto pending = leader_sync.pending_for("S");
  REQUIRE(pending.size() == 1);
  CHECK(pending[0].key.owner == "R2");
  // Reflected copies do not ping-pong: merging it back is a no-op.
  Store rover;
  rover.merge({{"R2", "soc"}, 44.0, 5.0, "R2"});
  auto w = rover.watermark();
  CHECK_FALSE(rover.merge(pending[0]));
  CHECK(rover.watermark() == w);
}

TEST_CASE("snapshot transfer reproduces the store") {
  Store a;
  a.put({"R1", "soc"}, 70.0, 1.0, "R1");
  a.put({"team", "experiment_complete"}, true, 2.0, "R1");
  a.put({"R1", "map"}, Blob{"map-r1", 4096}, 3.0, "R1");
  Store b;
  b.put({"R2", "soc"}, 60.0, 1.5, "R2");
  b.load_snapshot(a.snapshot());
  CHECK(b.size() == 4);
  CHECK(b.get_number({"R1", "soc"}) == 70.0);
  CHECK(b.get_flag({"team", "experiment_complete"}) == true);
  auto blob = b.get({"R1", "map"});
  REQUIRE(blob.has_value());
  CHECK(std::get<Blob>(blob->value).size_bytes == 4096);
  // Local clock guard: a put with an older stamp still lands but keeps the
  // newer stamp so replication stays monotonic.
  b.put({"R1", "soc"}, 71.0, 0.5, "R1");
  CHECK(b.get_number({"R1", "soc"}) == 71.0);
  CHECK(b.get({"R1", "soc"})->stamp == 1.0);
}
