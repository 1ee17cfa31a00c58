#pragma once

// Deterministic discrete-event network: per-pair FIFO, reliable unless a
// link is blocked, with latency, bandwidth and optional jitter.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include "dissent/crypto.hpp"
#include "dissent/network.hpp"

namespace dissent {

class ParticipantNode;

struct NetConfig {
  std::uint64_t latency_us = 50'000;
  std::uint64_t bandwidth_bps = 5'000'000;
  std::uint64_t jitter_us = 0;
  std::uint64_t seed = 0;
};

struct TraceEvent {
  std::uint64_t time_us = 0;
  MemberId from = 0;
  MemberId to = 0;
  std::uint8_t phase = 0;
  std::uint8_t subphase = 0;
  std::size_t bytes = 0;
  bool dropped = false;
  bool operator==(const TraceEvent&) const = default;
};

// Byte counters keyed by the outer frame's phase name.
using PhaseCounters = std::map<std::string, std::uint64_t>;

struct MemberCounters {
  PhaseCounters sent;
  PhaseCounters received;
  std::uint64_t dropped = 0;
  std::uint64_t total_sent() const;
  std::uint64_t total_received() const;
};

std::string phase_name(std::uint8_t phase);

class Simulator {
 public:
  explicit Simulator(NetConfig net = {});
  ~Simulator();
  Simulator(const Simulator&) = delete;
  Simulator& operator=(const Simulator&) = delete;

  Link& link(MemberId id);
  void attach(ParticipantNode& node);
  // Frames from `from` to `to` are dropped (counted as dropped bytes).
  void block(MemberId from, MemberId to);
  void unblock(MemberId from, MemberId to);

  // Runs until the queue is empty, stop() returns true, or the clock passes
  // deadline_us.
  void run(std::uint64_t deadline_us = UINT64_MAX, const std::function<bool()>& stop = {});

  std::uint64_t now_us() const { return now_; }
  const std::vector<TraceEvent>& trace() const { return trace_; }
  // Digest over the serialized trace; equal for equal runs.
  crypto::Digest trace_digest() const;
  const std::map<MemberId, MemberCounters>& counters() const { return counters_; }
  std::uint32_t max_transport_depth() const { return max_tdepth_; }
  std::size_t events_processed() const { return processed_; }

 private:
  class SimLink;
  struct Event {
    std::uint64_t time;
    std::uint64_t seq;
    MemberId target;
    bool is_timer;
    std::uint64_t token;
    std::shared_ptr<Envelope> envelope;
    bool operator>(const Event& o) const { return time != o.time ? time > o.time : seq > o.seq; }
  };

  void send(Envelope e);
  void schedule(MemberId id, std::uint64_t delay_us, std::uint64_t token);

  NetConfig net_;
  crypto::Rng jitter_rng_;
  std::uint64_t now_ = 0;
  std::uint64_t seq_ = 0;
  std::size_t processed_ = 0;
  std::priority_queue<Event, std::vector<Event>, std::greater<Event>> queue_;
  std::map<MemberId, std::unique_ptr<SimLink>> links_;
  std::map<MemberId, ParticipantNode*> nodes_;
  std::set<std::pair<MemberId, MemberId>> blocked_;
  std::map<std::pair<MemberId, MemberId>, std::uint64_t> busy_until_;
  std::map<std::pair<MemberId, MemberId>, std::uint64_t> last_arrival_;
  std::vector<TraceEvent> trace_;
  std::map<MemberId, MemberCounters> counters_;
  std::uint32_t max_tdepth_ = 0;
};

}  // namespace dissent
