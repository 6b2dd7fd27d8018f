#include "psesim/messages.hpp"

namespace psesim::msg {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::size_t record_size(const ssdb::VersionedRecord& r) {
  return r.key.owner.size() + r.key.name.size() + value_wire_size(r.value) +
         8 /*stamp*/ + r.writer.size();
}

}  // namespace

const char* message_kind(const Message& m) {
  return std::visit(
      overloaded{
          [](const Hello&) { return "hello"; },
          [](const GhsConnect&) { return "ghs-connect"; },
          [](const GhsInitiate&) { return "ghs-initiate"; },
          [](const GhsTest&) { return "ghs-test"; },
          [](const GhsAccept&) { return "ghs-accept"; },
          [](const GhsReject&) { return "ghs-reject"; },
          [](const GhsReport&) { return "ghs-report"; },
          [](const GhsChangeRoot&) { return "ghs-changeroot"; },
          [](const GatherScores&) { return "gather-scores"; },
          [](const ScoresUp&) { return "scores-up"; },
          [](const LeaderAnnounce&) { return "leader-announce"; },
          [](const ControllerReady&) { return "controller-ready"; },
          [](const SsdbSync&) { return "ssdb-sync"; },
          [](const SsdbAck&) { return "ssdb-ack"; },
          [](const SnapshotRequest&) { return "snapshot-request"; },
          [](const SnapshotReply&) { return "snapshot-reply"; },
          [](const CommitTask&) { return "commit-task"; },
          [](const TaskStatusReport&) { return "task-status"; },
          [](const AbortTask&) { return "abort-task"; },
      },
      m);
}

std::size_t wire_size(const Message& m) {
  return std::visit(
      overloaded{
          [](const Hello&) -> std::size_t { return 9; },
          [](const GhsConnect&) -> std::size_t { return 13; },
          [](const GhsInitiate& x) -> std::size_t {
            return 14 + x.fragment.size();
          },
          [](const GhsTest& x) -> std::size_t { return 13 + x.fragment.size(); },
          [](const GhsAccept&) -> std::size_t { return 9; },
          [](const GhsReject&) -> std::size_t { return 9; },
          [](const GhsReport& x) -> std::size_t {
            return 9 + x.best_weight.size();
          },
          [](const GhsChangeRoot&) -> std::size_t { return 9; },
          [](const GatherScores&) -> std::size_t { return 9; },
          [](const ScoresUp& x) -> std::size_t {
            std::size_t n = 9;
            for (const auto& [id, v] : x.vitals)
              n += id.size() + 8 + 4 + v.accepted_leader.size();
            return n;
          },
          [](const LeaderAnnounce& x) -> std::size_t {
            std::size_t n = 13 + x.leader.size() + x.survivor.size() + 8;
            for (const auto& p : x.participants) n += p.size();
            return n;
          },
          [](const ControllerReady& x) -> std::size_t {
            return 5 + x.agent.size();
          },
          [](const SsdbSync& x) -> std::size_t {
            std::size_t n = 9;
            for (const auto& r : x.records) n += record_size(r);
            return n;
          },
          [](const SsdbAck&) -> std::size_t { return 9; },
          [](const SnapshotRequest&) -> std::size_t { return 1; },
          [](const SnapshotReply& x) -> std::size_t {
            std::size_t n = 1;
            for (const auto& r : x.records) n += record_size(r);
            return n;
          },
          [](const CommitTask& x) -> std::size_t {
            return 5 + x.instance_id.size() + x.template_id.size() +
                   x.executor.size() + 16 + x.stop_target.size();
          },
          [](const TaskStatusReport& x) -> std::size_t {
            return 5 + x.instance_id.size() + 2 + 8 + x.detail.size();
          },
          // One tag byte plus the task id: the whole point is that an abort
          // fits in the smallest possible radio frame.
          [](const AbortTask& x) -> std::size_t {
            return 1 + x.instance_id.size();
          },
      },
      m);
}

}  // namespace psesim::msg
