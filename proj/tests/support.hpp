#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <vector>

#include "dissent/runner.hpp"

namespace dissent::testing {

inline std::map<MemberId, Bytes> random_messages(const std::vector<Credentials>& members, std::size_t len,
                                                 std::uint64_t seed) {
  std::map<MemberId, Bytes> out;
  auto rng = crypto::Rng::from_u64(seed).fork("test-messages");
  for (const auto& c : members) out[c.id] = rng.bytes(len);
  return out;
}

inline RoundSpec shuffle_spec(std::size_t n, std::size_t len, std::uint64_t seed) {
  RoundSpec s;
  s.protocol = ProtocolKind::shuffle;
  s.members = make_identities(n, seed);
  s.messages = random_messages(s.members, len, seed);
  s.datum_length = len;
  s.seed = seed;
  s.net.seed = seed;
  return s;
}

inline RoundSpec bulk_spec(const std::vector<std::size_t>& lengths, std::uint64_t seed) {
  RoundSpec s;
  s.protocol = ProtocolKind::bulk;
  s.members = make_identities(lengths.size(), seed);
  auto rng = crypto::Rng::from_u64(seed).fork("test-messages");
  for (std::size_t i = 0; i < lengths.size(); ++i) s.messages[s.members[i].id] = rng.bytes(lengths[i]);
  s.seed = seed;
  s.net.seed = seed;
  return s;
}

inline std::vector<Bytes> sorted(std::vector<Bytes> v) {
  std::sort(v.begin(), v.end());
  return v;
}

inline std::vector<Bytes> values(const std::map<MemberId, Bytes>& m) {
  std::vector<Bytes> out;
  for (const auto& [k, v] : m) out.push_back(v);
  return out;
}

inline std::vector<Frame> frames_of(const std::vector<Bytes>& raw, std::uint8_t phase, std::uint8_t subphase) {
  std::vector<Frame> out;
  for (const auto& r : raw) {
    Frame f = Frame::decode(r);
    if (f.phase == phase && f.subphase == subphase) out.push_back(f);
  }
  return out;
}

// Nodes on a simulator kept alive after the run, for state introspection.
struct Cluster {
  Simulator sim;
  std::vector<Credentials> creds;
  std::vector<std::unique_ptr<ParticipantNode>> nodes;
  RoundConfig config;

  Cluster(ProtocolKind protocol, const std::map<MemberId, Bytes>& messages, std::vector<Credentials> members,
          std::uint64_t seed, std::uint64_t datum_length = 0, NetConfig net = {}, OracleTap* tap = nullptr)
      : sim(net), creds(std::move(members)) {
    config.protocol = protocol;
    config.leader = creds.front().id;
    config.datum_length = datum_length;
    config.nonce = crypto::hash_bytes(to_bytes("cluster-" + std::to_string(seed)));
    for (const auto& c : creds) config.participants.push_back(participant_of(c));
    auto base = crypto::Rng::from_u64(seed).fork("round-0");
    for (const auto& c : creds) {
      nodes.push_back(std::make_unique<ParticipantNode>(c, sim.link(c.id), base.fork("node-" + std::to_string(c.id)),
                                                        NodeOptions{}, nullptr, tap));
      if (auto m = messages.find(c.id); m != messages.end()) nodes.back()->set_datum(m->second);
      sim.attach(*nodes.back());
    }
  }

  void run() {
    nodes.front()->lead(config);
    sim.run(3'600'000'000ull, [&] {
      return std::all_of(nodes.begin(), nodes.end(), [](const auto& n) { return n->finished(); });
    });
  }

  ParticipantNode& node(MemberId id) {
    for (auto& n : nodes)
      if (n->id() == id) return *n;
    throw Error(ErrorCode::Usage, "no such node");
  }
};

}  // namespace dissent::testing
