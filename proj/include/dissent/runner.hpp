#pragma once

// One simulated protocol run: builds the roster, nodes and adversaries,
// drives the simulator and collects outcomes, counters and oracle data.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "dissent/fault.hpp"
#include "dissent/node.hpp"
#include "dissent/simulator.hpp"

namespace dissent {

// Deterministic credentials for ids first_id..first_id+n-1.
std::vector<Credentials> make_identities(std::size_t n, std::uint64_t seed, MemberId first_id = 1);
Credentials make_identity(MemberId id, std::uint64_t seed);
Participant participant_of(const Credentials& c);

struct SubmissionRecord {
  Bytes nonce;
  MemberId member = 0;
  Bytes datum;
  Bytes inner;
  Bytes outer;
  crypto::RandomnessTrace trace;
};

struct StepRecord {
  Bytes nonce;
  MemberId member = 0;
  std::vector<Bytes> input;
  std::vector<Bytes> output;
  std::vector<std::size_t> perm;
};

class RecordingTap : public OracleTap {
 public:
  void on_submission(const Bytes& nonce, MemberId member, const Bytes& datum, const Bytes& inner, const Bytes& outer,
                     const crypto::RandomnessTrace& trace) override;
  void on_secondary_key(const Bytes& nonce, MemberId member, const Bytes& secret) override;
  void on_shuffle_step(const Bytes& nonce, MemberId member, const std::vector<Bytes>& input,
                       const std::vector<Bytes>& output, const std::vector<std::size_t>& perm) override;

  std::vector<SubmissionRecord> submissions;
  std::vector<StepRecord> steps;
  std::map<Bytes, std::map<MemberId, Bytes>> secondary_secrets;
};

struct RoundSpec {
  ProtocolKind protocol = ProtocolKind::shuffle;
  // Roster in order; the leader defaults to the first member.
  std::vector<Credentials> members;
  std::optional<MemberId> leader;
  std::map<MemberId, Bytes> messages;
  // Shuffle datum length; 0 takes the common message length.
  std::uint64_t datum_length = 0;
  Bytes nonce;
  NetConfig net;
  FaultPlan plan;
  std::uint32_t round = 0;
  std::uint64_t seed = 0;
  std::uint64_t timeout_us = 10'000'000;
  std::uint32_t quorum = 1;
  std::uint64_t deadline_us = 3'600'000'000ull;
  bool oracle = false;
  std::vector<std::pair<MemberId, MemberId>> blocked;
  std::function<bool(MemberId, const RoundConfig&)> review;
};

struct MemberReport {
  MemberId id = 0;
  RoundStatus status = RoundStatus::waiting;
  MemberCounters counters;
  // Payload bytes of distinct protocol frames this member originated.
  PhaseCounters originated;
  // Bulk rounds: payload bytes of this member's data transmission frame.
  std::uint64_t data_payload = 0;
  std::size_t frames = 0;
  std::uint32_t protocol_depth = 0;
  std::size_t suspicions = 0;
};

struct OracleData {
  // Member -> output index of its submission.
  std::map<MemberId, std::uint32_t> permutation;
  std::set<MemberId> culprits;
  std::set<MemberId> exposable;
  RecordingTap tap;
};

struct RoundRun {
  RoundConfig config;
  RoundStatus status = RoundStatus::waiting;
  NodeOutcome outcome;  // the leader's
  std::map<MemberId, NodeOutcome> outcomes;
  std::map<MemberId, MemberReport> members;
  std::map<MemberId, std::vector<Bytes>> emitted;
  std::uint32_t protocol_rounds = 0;
  std::uint32_t transport_rounds = 0;
  crypto::Digest trace_digest{};
  std::size_t trace_events = 0;
  std::uint64_t sim_time_us = 0;
  std::optional<OracleData> oracle;

  // Messages output by the leader's view of a completed run.
  std::vector<Bytes> outputs() const;
  bool delivered(const Bytes& message) const;
};

RoundRun run_round(const RoundSpec& spec);

}  // namespace dissent
