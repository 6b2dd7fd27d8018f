// Wire messages exchanged between agents. Sizes are modeled, not marshalled:
// wire_size() gives the simulated byte cost of each message.
#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "psesim/core.hpp"
#include "psesim/ssdb.hpp"
#include "psesim/tasknet.hpp"

namespace psesim::msg {

// --- liveness probe -------------------------------------------------------
struct Hello {
  std::uint64_t round = 0;
};

// --- minimum-spanning-tree election (GHS) ---------------------------------
// All GHS traffic is tagged with the round that opened it; stale-round
// messages are discarded on arrival.
struct GhsConnect {
  std::uint64_t round = 0;
  int level = 0;
};
struct GhsInitiate {
  std::uint64_t round = 0;
  int level = 0;
  std::string fragment;  // weight-name of the fragment's core edge
  int state = 0;         // 0 = Find, 1 = Found
};
struct GhsTest {
  std::uint64_t round = 0;
  int level = 0;
  std::string fragment;
};
struct GhsAccept {
  std::uint64_t round = 0;
};
struct GhsReject {
  std::uint64_t round = 0;
};
struct GhsReport {
  std::uint64_t round = 0;
  std::string best_weight;  // empty = no outgoing edge found
};
struct GhsChangeRoot {
  std::uint64_t round = 0;
};

// --- leadership convergecast ----------------------------------------------
struct AgentVitals {
  double score = 0.0;     // min(soc margin, temp margin)
  int accepted_epoch = 0;
  AgentId accepted_leader;
};
struct GatherScores {
  std::uint64_t round = 0;
};
struct ScoresUp {
  std::uint64_t round = 0;
  std::map<AgentId, AgentVitals> vitals;  // subtree aggregate
};
struct LeaderAnnounce {
  std::uint64_t round = 0;
  int epoch = 0;
  AgentId leader;
  AgentId survivor;
  std::set<AgentId> participants;
};
struct ControllerReady {
  int epoch = 0;
  AgentId agent;
};

// --- shared state sync -----------------------------------------------------
struct SsdbSync {
  std::vector<ssdb::VersionedRecord> records;
  std::uint64_t watermark = 0;
};
struct SsdbAck {
  std::uint64_t watermark = 0;
};
struct SnapshotRequest {};
struct SnapshotReply {
  std::vector<ssdb::VersionedRecord> records;
};

// --- plan distribution ------------------------------------------------------
struct CommitTask {
  int epoch = 0;
  TaskId instance_id;
  std::string template_id;
  AgentId executor;
  double start = 0;
  double end = 0;
  TaskId stop_target;  // for stop tasks: the drive instance to halt
};
struct TaskStatusReport {
  int epoch = 0;
  TaskId instance_id;
  tasknet::Status status = tasknet::Status::Unscheduled;
  bool stopped_early = false;
  double time = 0;
  std::string detail;
};
// Deliberately minimal: a task id and nothing else.
struct AbortTask {
  TaskId instance_id;
};

using Message =
    std::variant<Hello, GhsConnect, GhsInitiate, GhsTest, GhsAccept, GhsReject,
                 GhsReport, GhsChangeRoot, GatherScores, ScoresUp,
                 LeaderAnnounce, ControllerReady, SsdbSync, SsdbAck,
                 SnapshotRequest, SnapshotReply, CommitTask, TaskStatusReport,
                 AbortTask>;

const char* message_kind(const Message& m);
std::size_t wire_size(const Message& m);

}  // namespace psesim::msg
