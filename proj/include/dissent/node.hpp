#pragma once

// A participant's per-round host: drives the shuffle or bulk member, relays
// broadcasts when it is the leader, and runs the suspicion protocol.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <vector>

#include "dissent/bulk.hpp"
#include "dissent/frame.hpp"
#include "dissent/messages.hpp"
#include "dissent/network.hpp"
#include "dissent/shuffle.hpp"
#include "dissent/suspicion.hpp"

namespace dissent {

enum class RoundStatus : std::uint8_t { waiting, running, completed, blamed, stalled, rejected };

const char* to_string(RoundStatus s);

struct NodeOptions {
  std::uint64_t timeout_us = 10'000'000;
  // Smallest roster this member agrees to join.
  std::uint32_t quorum = 1;
  // Extra roster review (membership inclusion); false rejects the round.
  std::function<bool(const RoundConfig&)> review;
};

struct NodeOutcome {
  RoundStatus status = RoundStatus::waiting;
  std::vector<std::optional<Bytes>> shuffle_output;
  std::map<std::uint32_t, Bytes> recovered;
  std::set<std::uint32_t> corrupted;
  std::optional<std::uint32_t> own_slot;
  BlameVerdict verdict;
  std::vector<MemberId> failed;
  std::vector<MemberId> incomplete;
  std::size_t valid_accusations = 0;
  std::size_t rejected_accusations = 0;
  bool accusation_round = false;
};

// Broadcast kinds the leader holds until every member's frame is present.
bool is_all_member_kind(const RoundConfig& config, const Frame& f);
// Protocol frames that travel through the leader's relay.
bool is_relayed_kind(const RoundConfig& config, const Frame& f);

class ParticipantNode {
 public:
  ParticipantNode(Credentials creds, Link& link, crypto::Rng rng, NodeOptions options = {},
                  Adversary* adversary = nullptr, OracleTap* tap = nullptr);

  // Payload submitted once the round is announced.
  void set_datum(Bytes datum) { datum_ = std::move(datum); }
  // Leader only: announces the roster and starts its own member.
  void lead(RoundConfig config);

  void on_envelope(const Envelope& e);
  void on_timer(std::uint64_t token);
  void on_connection_lost(MemberId peer);

  MemberId id() const { return creds_.id; }
  bool is_leader() const { return leading_; }
  bool finished() const;
  const NodeOutcome& outcome() const { return outcome_; }
  std::shared_ptr<const RoundConfig> config() const { return config_; }
  const Bytes& round_nonce() const { return round_nonce_; }

  // Protocol frames produced by this member, in emission order.
  const std::vector<Bytes>& emitted() const { return emitted_; }
  std::uint32_t protocol_depth() const { return pdepth_; }
  // Largest depth among this member's own frames.
  std::uint32_t max_emitted_depth() const { return max_emitted_depth_; }
  std::uint32_t transport_depth() const { return tdepth_; }
  // Suspicions this node raised and demands it resolved (leader).
  std::size_t suspicions_raised() const { return suspicions_raised_; }
  std::size_t suspicions_cleared() const { return suspicions_cleared_; }
  const SuspicionState& suspicion() const { return suspicion_; }

  const ShuffleMember* shuffle() const { return shuffle_.get(); }
  const BulkMember* bulk() const { return bulk_.get(); }

 private:
  struct RelayEntry {
    Bytes raw;
    std::uint32_t pdepth = 0;
    std::uint32_t tdepth = 0;
  };
  struct DemandState {
    MemberId target = 0;
    ProtocolKey key;
    std::set<MemberId> requesters;
    std::uint64_t token = 0;
    bool open = true;
  };
  enum class TimerKind : std::uint8_t { await, bundle, demand };
  struct TimerInfo {
    TimerKind kind;
    MemberId member = 0;
    ProtocolKey key;
  };

  void accept_announcement(const Frame& f, const Bytes& raw, std::uint32_t pdepth);
  void start_member(const Bytes& announce_raw, bool sent);
  void deliver_protocol(const Frame& f, const Bytes& raw, std::uint32_t pdepth, std::uint32_t tdepth);
  void handle_control(const Frame& f, const Envelope& e);
  void pump();
  void drain_outbox();
  void note_finished();
  std::vector<Awaiting> awaiting() const;
  std::optional<Bytes> sent_frame(const ProtocolKey& key) const;
  bool member_silent() const;

  Bytes control_frame(std::uint8_t sub, Bytes payload);
  void send_to(MemberId to, Bytes frame, std::vector<std::uint32_t> depths, std::uint32_t tdepth);
  void send_control(MemberId to, std::uint8_t sub, Bytes payload, std::vector<std::uint32_t> depths = {});
  std::uint64_t timer(TimerKind kind, MemberId member, ProtocolKey key);

  // Leader relay and coordinator.
  void relay_input(const Frame& f, const Bytes& raw, std::uint32_t pdepth, std::uint32_t tdepth);
  void flush_bundle(const ProtocolKey& key);
  void broadcast_bundle(const Bytes& nonce, const std::vector<RelayEntry>& entries);
  void open_demand(MemberId target, const ProtocolKey& key, MemberId requester);
  void answer_demand(const Demand& d);
  void on_demand_reply(MemberId from, const DemandReply& r, std::uint32_t pdepth);
  void abort_round(std::vector<MemberId> failed);
  void apply_abort(const Abort& a);

  Credentials creds_;
  Link& link_;
  crypto::Rng rng_;
  NodeOptions opts_;
  Adversary* adv_;
  OracleTap* tap_;
  bool leading_ = false;

  std::shared_ptr<const RoundConfig> config_;
  Bytes round_nonce_;
  std::optional<Bytes> datum_;
  std::unique_ptr<ShuffleMember> shuffle_;
  std::unique_ptr<BulkMember> bulk_;
  std::vector<Envelope> early_;
  NodeOutcome outcome_;

  std::uint32_t pdepth_ = 0;
  std::uint32_t tdepth_ = 0;
  std::vector<Bytes> emitted_;
  std::map<crypto::Digest, std::uint32_t> emitted_depth_;
  std::uint32_t max_emitted_depth_ = 0;
  std::set<std::pair<MemberId, ProtocolKey>> timed_awaits_;
  std::uint64_t next_token_ = 1;
  std::map<std::uint64_t, TimerInfo> timers_;
  std::size_t suspicions_raised_ = 0;
  std::size_t suspicions_cleared_ = 0;
  SuspicionState suspicion_;

  std::set<crypto::Digest> relayed_;
  std::map<ProtocolKey, std::map<MemberId, RelayEntry>> pending_;
  std::set<ProtocolKey> flushed_;
  std::map<ProtocolKey, std::uint64_t> bundle_timers_;
  std::map<std::pair<MemberId, ProtocolKey>, DemandState> demands_;
  bool aborted_ = false;
};

}  // namespace dissent
