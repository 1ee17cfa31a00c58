#pragma once

// Round lifecycle around the protocols: roster selection under a quorum,
// inclusion demands, exclusion of exposed or failed members, and re-runs
// until every intended message is delivered.

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dissent/messages.hpp"
#include "dissent/runner.hpp"

namespace dissent {

struct Membership {
  std::vector<Participant> members;  // long-term M
  std::uint32_t quorum = 1;
  std::set<MemberId> excluded;

  const Participant* find(MemberId id) const;
  std::vector<Participant> eligible() const;
  // Exclusion only grows.
  void exclude(const std::set<MemberId>& ids);
};

// hash(leader || counter || entropy); never repeats within a session.
class NonceSource {
 public:
  NonceSource(MemberId leader, crypto::Rng rng) : leader_(leader), rng_(std::move(rng)) {}
  Bytes next();
  std::uint64_t issued() const { return counter_; }

 private:
  MemberId leader_;
  crypto::Rng rng_;
  std::uint64_t counter_ = 0;
  std::set<Bytes> seen_;
};

// Throws QuorumUnmet when the roster is smaller than the quorum.
RoundConfig initiate_round(MemberId leader, const Membership& membership, const std::vector<MemberId>& roster,
                           ProtocolKind protocol, std::uint64_t datum_length, NonceSource& nonces);
// Roster = every eligible member.
RoundConfig initiate_round(MemberId leader, const Membership& membership, ProtocolKind protocol,
                           std::uint64_t datum_length, NonceSource& nonces);

enum class Review : std::uint8_t { accept, below_quorum, unknown_member, inclusion_demanded };

const char* to_string(Review r);

// An honest member's review of a proposed roster. `reachable` lists members
// this reviewer can currently reach; any of them missing from the roster
// without having been excluded triggers an inclusion demand.
Review review_proposal(const RoundConfig& proposal, const Membership& view, const std::set<MemberId>& reachable);

struct InclusionDemand {
  MemberId requester = 0;
  MemberId candidate = 0;
  Bytes nonce;
};

struct InclusionAck {
  bool included = false;
  std::optional<RoundConfig> amended;
};

class RoundLeader {
 public:
  RoundLeader(MemberId id, Membership membership, crypto::Rng rng, bool honest = true);

  // `omit` lets a dishonest leader pack the roster.
  RoundConfig propose(ProtocolKind protocol, std::uint64_t datum_length, const std::set<MemberId>& omit = {});
  InclusionAck on_inclusion_demand(const RoundConfig& proposal, const InclusionDemand& demand);

  Membership& membership() { return membership_; }
  MemberId id() const { return id_; }

 private:
  MemberId id_;
  Membership membership_;
  NonceSource nonces_;
  bool honest_;
};

// Proposal -> reviews -> at most one demand/ack exchange per candidate.
// Returns the roster every honest reviewer accepts, or nullopt if any refuses.
std::optional<RoundConfig> negotiate_roster(RoundLeader& leader, RoundConfig proposal,
                                            const std::vector<std::pair<MemberId, Membership>>& reviewers,
                                            const std::map<MemberId, std::set<MemberId>>& reachable);

struct SessionSpec {
  ProtocolKind protocol = ProtocolKind::shuffle;
  std::vector<Credentials> members;
  std::optional<MemberId> leader;
  std::uint32_t quorum = 1;
  std::uint32_t budget = 1;
  std::map<MemberId, Bytes> messages;
  // When set, only this member's message has to get through.
  std::optional<MemberId> intent;
  std::uint64_t datum_length = 0;
  NetConfig net;
  FaultPlan plan;
  std::uint64_t seed = 0;
  std::uint64_t timeout_us = 10'000'000;
  bool oracle = false;
  std::vector<std::pair<MemberId, MemberId>> blocked;
};

struct DeliveryReport {
  bool delivered = false;
  std::uint32_t rounds_used = 0;
  std::vector<RoundRun> runs;
  std::set<MemberId> excluded;
  std::set<MemberId> undelivered;
  // Exclusion set in force for each run, in order.
  std::vector<std::set<MemberId>> excluded_before;
};

class BudgetExhausted : public Error {
 public:
  explicit BudgetExhausted(DeliveryReport report)
      : Error(ErrorCode::BudgetExhausted, "rounds budget exhausted before delivery"), report_(std::move(report)) {}
  const DeliveryReport& report() const { return report_; }

 private:
  DeliveryReport report_;
};

// Members to drop after a run: exposed members, members whose evidence was
// unusable, and members the leader marked failed.
std::set<MemberId> exclusions_after(const RoundRun& run);

// Throws BudgetExhausted (carrying the partial report) or QuorumUnmet.
DeliveryReport rerun_until_delivered(const SessionSpec& spec);

struct RosterEntry {
  MemberId id = 0;
  std::string host;
  std::uint16_t port = 0;
  Bytes signing_public;
  Bytes primary_public;
};

// Key-value session file: quorum, timeout_ms, rounds_budget, protocol,
// msg_len, leader and one `member = id host:port signing_hex primary_hex`
// line per roster entry. '#' starts a comment.
struct SessionConfig {
  std::uint32_t quorum = 1;
  std::uint64_t timeout_ms = 10'000;
  std::uint32_t rounds_budget = 1;
  ProtocolKind protocol = ProtocolKind::shuffle;
  std::uint64_t msg_len = 1024;
  std::optional<MemberId> leader;
  std::vector<RosterEntry> roster;

  const RosterEntry* find(MemberId id) const;
  Membership membership() const;
};

SessionConfig parse_session_config(std::string_view text);
std::string format_session_config(const SessionConfig& c);
SessionConfig load_session_config(const std::string& path);

// Member key file: id, signing_secret, signing_public, primary_secret,
// primary_public (hex).
Credentials parse_key_file(std::string_view text);
std::string format_key_file(const Credentials& c);
Credentials load_key_file(const std::string& path);

}  // namespace dissent
