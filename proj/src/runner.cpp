#include "dissent/runner.hpp"

#include <algorithm>

namespace dissent {

Credentials make_identity(MemberId id, std::uint64_t seed) {
  crypto::Rng rng = crypto::Rng::from_u64(seed).fork("identity-" + std::to_string(id));
  Credentials c;
  c.id = id;
  c.signing = crypto::keygen_signing(rng);
  c.primary = crypto::keygen_encryption(rng, crypto::KeyRole::primary);
  return c;
}

std::vector<Credentials> make_identities(std::size_t n, std::uint64_t seed, MemberId first_id) {
  std::vector<Credentials> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(make_identity(first_id + static_cast<MemberId>(i), seed));
  return out;
}

Participant participant_of(const Credentials& c) { return Participant{c.id, c.primary.public_key, c.signing.public_key}; }

void RecordingTap::on_submission(const Bytes& nonce, MemberId member, const Bytes& datum, const Bytes& inner,
                                 const Bytes& outer, const crypto::RandomnessTrace& trace) {
  submissions.push_back(SubmissionRecord{nonce, member, datum, inner, outer, trace});
}

void RecordingTap::on_secondary_key(const Bytes& nonce, MemberId member, const Bytes& secret) {
  secondary_secrets[nonce][member] = secret;
}

void RecordingTap::on_shuffle_step(const Bytes& nonce, MemberId member, const std::vector<Bytes>& input,
                                   const std::vector<Bytes>& output, const std::vector<std::size_t>& perm) {
  steps.push_back(StepRecord{nonce, member, input, output, perm});
}

std::vector<Bytes> RoundRun::outputs() const {
  std::vector<Bytes> out;
  if (config.protocol == ProtocolKind::shuffle) {
    for (const auto& o : outcome.shuffle_output)
      if (o) out.push_back(*o);
  } else {
    for (const auto& [slot, m] : outcome.recovered) out.push_back(m);
  }
  return out;
}

bool RoundRun::delivered(const Bytes& message) const {
  auto out = outputs();
  return std::find(out.begin(), out.end(), message) != out.end();
}

namespace {

PhaseCounters originated_of(const std::vector<Bytes>& frames) {
  PhaseCounters c;
  std::set<crypto::Digest> seen;
  for (const auto& raw : frames) {
    if (!seen.insert(crypto::hash(raw)).second) continue;
    Frame f = Frame::decode(raw);
    c[phase_name(f.phase)] += f.payload.size();
  }
  return c;
}

std::uint64_t data_payload_of(const std::vector<Bytes>& frames, const Bytes& nonce) {
  std::uint64_t total = 0;
  std::set<crypto::Digest> seen;
  for (const auto& raw : frames) {
    if (!seen.insert(crypto::hash(raw)).second) continue;
    Frame f = Frame::decode(raw);
    if (f.phase == phase::anonymize && f.subphase == subphase::none && f.nonce == nonce) total += f.payload.size();
  }
  return total;
}

}  // namespace

RoundRun run_round(const RoundSpec& spec) {
  if (spec.members.empty()) throw Error(ErrorCode::Usage, "round needs at least one member");
  RoundRun run;
  RoundConfig& cfg = run.config;
  cfg.protocol = spec.protocol;
  cfg.quorum = spec.quorum;
  cfg.leader = spec.leader.value_or(spec.members.front().id);
  for (const auto& c : spec.members) cfg.participants.push_back(participant_of(c));
  if (spec.nonce.empty()) {
    ByteWriter w;
    w.raw(to_bytes("sim-round")).u64(spec.seed).u32(spec.round);
    cfg.nonce = crypto::hash_bytes(w.bytes());
  } else {
    cfg.nonce = spec.nonce;
  }
  if (spec.protocol == ProtocolKind::shuffle) {
    std::uint64_t L = spec.datum_length;
    if (L == 0 && !spec.messages.empty()) L = spec.messages.begin()->second.size();
    for (const auto& [id, m] : spec.messages)
      if (m.size() != L) throw Error(ErrorCode::Usage, "shuffle messages must all have the datum length");
    cfg.datum_length = L;
  }

  Simulator sim(spec.net);
  if (spec.oracle) {
    run.oracle.emplace();
    run.oracle->culprits = spec.plan.culprits(spec.round);
    run.oracle->exposable = spec.plan.exposable_culprits(spec.round);
  }
  OracleTap* tap = spec.oracle ? &run.oracle->tap : nullptr;

  auto board = std::make_shared<CollusionBoard>();
  board->shared_seed = crypto::Rng::from_u64(spec.seed).fork("collusion-" + std::to_string(spec.round)).seed_bytes();
  std::vector<std::unique_ptr<Adversary>> adversaries;
  std::vector<std::unique_ptr<ParticipantNode>> nodes;
  crypto::Rng base = crypto::Rng::from_u64(spec.seed).fork("round-" + std::to_string(spec.round));
  for (const auto& c : spec.members) {
    Adversary* adv = nullptr;
    if (const FaultStrategy* s = spec.plan.for_member(c.id, spec.round)) {
      adversaries.push_back(
          std::make_unique<Adversary>(*s, base.fork("adversary-" + std::to_string(c.id)), board));
      adv = adversaries.back().get();
    }
    NodeOptions opts;
    opts.timeout_us = spec.timeout_us;
    opts.quorum = spec.quorum;
    if (spec.review) {
      MemberId id = c.id;
      auto review = spec.review;
      opts.review = [review, id](const RoundConfig& rc) { return review(id, rc); };
    }
    nodes.push_back(std::make_unique<ParticipantNode>(c, sim.link(c.id), base.fork("node-" + std::to_string(c.id)),
                                                      opts, adv, tap));
    if (auto m = spec.messages.find(c.id); m != spec.messages.end()) nodes.back()->set_datum(m->second);
    sim.attach(*nodes.back());
  }
  for (const auto& [a, b] : spec.blocked) sim.block(a, b);

  ParticipantNode* leader = nullptr;
  for (auto& n : nodes)
    if (n->id() == cfg.leader) leader = n.get();
  if (!leader) throw Error(ErrorCode::Usage, "leader is not in the roster");
  leader->lead(cfg);

  auto all_done = [&] {
    return std::all_of(nodes.begin(), nodes.end(), [](const auto& n) { return n->finished(); });
  };
  sim.run(spec.deadline_us, all_done);

  run.outcome = leader->outcome();
  run.status = run.outcome.status;
  if (run.status == RoundStatus::running || run.status == RoundStatus::waiting) run.status = RoundStatus::stalled;
  run.outcome.status = run.status;
  for (auto& n : nodes) {
    run.outcomes[n->id()] = n->outcome();
    MemberReport r;
    r.id = n->id();
    r.status = n->outcome().status;
    if (auto c = sim.counters().find(n->id()); c != sim.counters().end()) r.counters = c->second;
    r.originated = originated_of(n->emitted());
    if (cfg.protocol == ProtocolKind::bulk) r.data_payload = data_payload_of(n->emitted(), cfg.nonce);
    r.frames = n->emitted().size();
    r.protocol_depth = n->max_emitted_depth();
    r.suspicions = n->suspicions_raised();
    run.protocol_rounds = std::max(run.protocol_rounds, r.protocol_depth);
    run.members[n->id()] = std::move(r);
    run.emitted[n->id()] = n->emitted();
  }
  run.transport_rounds = sim.max_transport_depth();
  run.trace_digest = sim.trace_digest();
  run.trace_events = sim.trace().size();
  run.sim_time_us = sim.now_us();

  if (run.oracle) {
    const Bytes& inst = cfg.protocol == ProtocolKind::shuffle ? cfg.nonce : descriptor_nonce(cfg.nonce);
    const StepRecord* last = nullptr;
    for (const auto& s : run.oracle->tap.steps)
      if (s.nonce == inst && s.member == cfg.participants.back().id) last = &s;
    if (last) {
      for (const auto& sub : run.oracle->tap.submissions) {
        if (sub.nonce != inst) continue;
        auto it = std::find(last->output.begin(), last->output.end(), sub.inner);
        if (it != last->output.end())
          run.oracle->permutation[sub.member] = static_cast<std::uint32_t>(it - last->output.begin());
      }
    }
  }
  return run;
}

}  // namespace dissent
