#pragma once

// TCP transport: one connection per member pair, a reader thread per peer
// feeding a single ordered inbox, and a session host that runs successive
// rounds on the same connections.

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dissent/fault.hpp"
#include "dissent/node.hpp"
#include "dissent/simulator.hpp"
#include "dissent/wrapper.hpp"

namespace dissent {

// Listening socket bound to host:port (port 0 picks a free one). Returns the
// fd and stores the bound port.
int bind_listener(const std::string& host, std::uint16_t port, std::uint16_t* bound_port = nullptr);

struct TcpHostOptions {
  SessionConfig session;
  Credentials creds;
  Bytes message;
  bool lead = false;
  std::uint64_t seed = 0;
  // First round's nonce; later rounds draw fresh ones.
  std::optional<Bytes> fixed_nonce;
  std::uint64_t connect_timeout_ms = 10'000;
  // Pre-bound listener; -1 binds the roster address.
  int listen_fd = -1;
  // Leader: exclusions persisted across restarts.
  std::string state_file;
  // Member: give up after this long without hearing from anyone.
  std::uint64_t idle_timeout_ms = 120'000;
  // Misbehavior injected into this host's node, for fault drills.
  std::optional<FaultStrategy> fault;
};

struct TcpRoundRecord {
  RoundConfig config;
  NodeOutcome outcome;
  MemberCounters counters;
  std::vector<Bytes> emitted;
  std::size_t suspicions = 0;
  bool delivered = false;
};

struct TcpSessionResult {
  std::vector<TcpRoundRecord> rounds;
  bool delivered = false;
  std::set<MemberId> excluded;
  std::set<MemberId> lost;  // peers whose connection dropped
  std::optional<ErrorCode> error;
};

TcpSessionResult run_tcp_session(const TcpHostOptions& options);

// Whether a member's own message appears in its node's output.
bool own_message_delivered(const NodeOutcome& o, ProtocolKind protocol, const Bytes& message);

std::set<MemberId> load_exclusions(const std::string& path);
void save_exclusions(const std::string& path, const std::set<MemberId>& ids);

}  // namespace dissent
