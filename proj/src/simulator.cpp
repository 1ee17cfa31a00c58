#include "dissent/simulator.hpp"

#include <tuple>

#include "dissent/frame.hpp"
#include "dissent/node.hpp"

namespace dissent {

std::uint64_t MemberCounters::total_sent() const {
  std::uint64_t t = 0;
  for (const auto& [k, v] : sent) t += v;
  return t;
}

std::uint64_t MemberCounters::total_received() const {
  std::uint64_t t = 0;
  for (const auto& [k, v] : received) t += v;
  return t;
}

std::string phase_name(std::uint8_t p) {
  switch (p) {
    case phase::announce: return "announce";
    case phase::keys: return "keys";
    case phase::submit: return "submit";
    case phase::anonymize: return "anonymize";
    case phase::verify: return "verify";
    case phase::finish: return "finish";
    case phase::control: return "control";
    case phase::bundle: return "bundle";
  }
  return "phase_" + std::to_string(p);
}

namespace {

// Phase and subphase straight from the encoding, without copying the payload.
std::pair<std::uint8_t, std::uint8_t> peek_phase(const Bytes& frame) {
  if (frame.size() < 5) return {0xFF, 0};
  std::size_t len = (std::size_t{frame[1]} << 24) | (std::size_t{frame[2]} << 16) | (std::size_t{frame[3]} << 8) | frame[4];
  if (frame.size() < 7 + len) return {0xFF, 0};
  return {frame[5 + len], frame[6 + len]};
}

}  // namespace

class Simulator::SimLink : public Link {
 public:
  SimLink(Simulator& sim, MemberId id) : sim_(sim), id_(id) {}
  void send(Envelope e) override {
    e.from = id_;
    sim_.send(std::move(e));
  }
  void schedule(std::uint64_t delay_us, std::uint64_t token) override { sim_.schedule(id_, delay_us, token); }
  std::uint64_t now_us() const override { return sim_.now_; }

 private:
  Simulator& sim_;
  MemberId id_;
};

Simulator::Simulator(NetConfig net) : net_(net), jitter_rng_(crypto::Rng::from_u64(net.seed).fork("jitter")) {}

Simulator::~Simulator() = default;

Link& Simulator::link(MemberId id) {
  auto& l = links_[id];
  if (!l) l = std::make_unique<SimLink>(*this, id);
  return *l;
}

void Simulator::attach(ParticipantNode& node) {
  link(node.id());
  nodes_[node.id()] = &node;
  counters_[node.id()];
}

void Simulator::block(MemberId from, MemberId to) { blocked_.insert({from, to}); }
void Simulator::unblock(MemberId from, MemberId to) { blocked_.erase({from, to}); }

void Simulator::send(Envelope e) {
  TraceEvent t;
  t.time_us = now_;
  t.from = e.from;
  t.to = e.to;
  t.bytes = e.wire_size();
  std::tie(t.phase, t.subphase) = peek_phase(e.frame);
  auto& c = counters_[e.from];
  c.sent[phase_name(t.phase)] += t.bytes;
  auto pair = std::make_pair(e.from, e.to);
  if (blocked_.count(pair) || !nodes_.count(e.to)) {
    t.dropped = true;
    c.dropped += t.bytes;
    trace_.push_back(t);
    return;
  }
  trace_.push_back(t);

  std::uint64_t start = std::max(now_, busy_until_[pair]);
  std::uint64_t tx = net_.bandwidth_bps == 0 ? 0 : (t.bytes * 8 * 1'000'000 + net_.bandwidth_bps - 1) / net_.bandwidth_bps;
  busy_until_[pair] = start + tx;
  std::uint64_t arrival = start + tx + net_.latency_us;
  if (net_.jitter_us) arrival += jitter_rng_.uniform(net_.jitter_us + 1);
  auto& last = last_arrival_[pair];
  arrival = std::max(arrival, last);
  last = arrival;
  max_tdepth_ = std::max(max_tdepth_, e.transport_depth);
  queue_.push(Event{arrival, seq_++, e.to, false, 0, std::make_shared<Envelope>(std::move(e))});
}

void Simulator::schedule(MemberId id, std::uint64_t delay_us, std::uint64_t token) {
  queue_.push(Event{now_ + delay_us, seq_++, id, true, token, nullptr});
}

void Simulator::run(std::uint64_t deadline_us, const std::function<bool()>& stop) {
  while (!queue_.empty()) {
    if (stop && stop()) return;
    Event ev = queue_.top();
    if (ev.time > deadline_us) return;
    queue_.pop();
    now_ = ev.time;
    ++processed_;
    auto it = nodes_.find(ev.target);
    if (it == nodes_.end()) continue;
    if (ev.is_timer) {
      it->second->on_timer(ev.token);
    } else {
      const auto& e = *ev.envelope;
      counters_[e.to].received[phase_name(peek_phase(e.frame).first)] += e.wire_size();
      it->second->on_envelope(e);
    }
  }
}

crypto::Digest Simulator::trace_digest() const {
  ByteWriter w;
  for (const auto& t : trace_) {
    w.u64(t.time_us).u32(t.from).u32(t.to).u8(t.phase).u8(t.subphase).u64(t.bytes).u8(t.dropped ? 1 : 0);
  }
  return crypto::hash(w.bytes());
}

}  // namespace dissent
