#include "dissent/node.hpp"

#include <algorithm>

namespace dissent {

const char* to_string(RoundStatus s) {
  switch (s) {
    case RoundStatus::waiting: return "waiting";
    case RoundStatus::running: return "running";
    case RoundStatus::completed: return "completed";
    case RoundStatus::blamed: return "blamed";
    case RoundStatus::stalled: return "stalled";
    case RoundStatus::rejected: return "rejected";
  }
  return "unknown";
}

bool is_all_member_kind(const RoundConfig& config, const Frame& f) {
  if (f.subphase == subphase::none && (f.phase == phase::keys || f.phase == phase::verify)) return true;
  if (f.phase == phase::finish && (f.subphase == subphase::decryption || f.subphase == subphase::blame)) return true;
  return f.phase == phase::anonymize && f.subphase == subphase::none && f.nonce == config.nonce &&
         config.protocol == ProtocolKind::bulk;
}

bool is_relayed_kind(const RoundConfig& config, const Frame& f) {
  if (is_all_member_kind(config, f)) return true;
  if (f.phase == phase::finish && f.subphase == subphase::fault_report) return true;
  return f.phase == phase::anonymize && f.subphase == subphase::none && !config.participants.empty() &&
         f.sender == config.participants.back().id;
}

ParticipantNode::ParticipantNode(Credentials creds, Link& link, crypto::Rng rng, NodeOptions options,
                                 Adversary* adversary, OracleTap* tap)
    : creds_(std::move(creds)), link_(link), rng_(std::move(rng)), opts_(std::move(options)), adv_(adversary),
      tap_(tap), suspicion_(opts_.timeout_us) {}

bool ParticipantNode::finished() const {
  auto s = outcome_.status;
  return s == RoundStatus::completed || s == RoundStatus::blamed || s == RoundStatus::stalled ||
         s == RoundStatus::rejected;
}

void ParticipantNode::lead(RoundConfig config) {
  if (config_) return;
  leading_ = true;
  config_ = std::make_shared<const RoundConfig>(std::move(config));
  round_nonce_ = config_->nonce;
  Bytes raw = make_frame(round_nonce_, phase::announce, subphase::none, creds_.id, genesis_head(round_nonce_),
                         encode(*config_), creds_.signing.secret)
                  .encode();
  emitted_.push_back(raw);
  max_emitted_depth_ = 1;
  for (const auto& p : config_->participants)
    if (p.id != creds_.id) send_to(p.id, raw, {1}, 1);
  pdepth_ = std::max<std::uint32_t>(pdepth_, 1);
  tdepth_ = std::max<std::uint32_t>(tdepth_, 1);
  start_member(raw, true);
}

void ParticipantNode::accept_announcement(const Frame& f, const Bytes& raw, std::uint32_t pdepth) {
  RoundConfig cfg;
  try {
    cfg = decode_round_config(f.payload);
  } catch (const Error&) {
    return;
  }
  if (f.nonce != cfg.nonce || f.sender != cfg.leader) return;
  const Participant* leader = cfg.find(cfg.leader);
  if (!leader || !f.verify(leader->signing_public)) return;
  config_ = std::make_shared<const RoundConfig>(std::move(cfg));
  round_nonce_ = config_->nonce;
  pdepth_ = std::max(pdepth_, pdepth);

  const Participant* self = config_->find(creds_.id);
  bool ok = self && self->signing_public == creds_.signing.public_key &&
            self->primary_public == creds_.primary.public_key && config_->size() >= opts_.quorum;
  if (ok && opts_.review) ok = opts_.review(*config_);
  if (!ok) {
    outcome_.status = RoundStatus::rejected;
    early_.clear();
    return;
  }
  start_member(raw, false);
}

void ParticipantNode::start_member(const Bytes& announce_raw, bool sent) {
  outcome_.status = RoundStatus::running;
  try {
    if (config_->protocol == ProtocolKind::shuffle) {
      const auto L = static_cast<std::size_t>(config_->datum_length);
      shuffle_ = std::make_unique<ShuffleMember>(config_, round_nonce_, L, InstanceRole::shuffle, creds_,
                                                 rng_.fork("shuffle"), adv_, tap_);
      shuffle_->record_announcement(announce_raw, sent);
      shuffle_->start(datum_ ? *datum_ : Bytes(L, 0));
    } else {
      bulk_ = std::make_unique<BulkMember>(config_, creds_, rng_.fork("bulk"), adv_, tap_);
      bulk_->record_announcement(announce_raw, sent);
      bulk_->start(datum_ ? *datum_ : Bytes{});
    }
  } catch (const Error&) {
    shuffle_.reset();
    bulk_.reset();
    outcome_.status = RoundStatus::rejected;
    return;
  }
  auto early = std::move(early_);
  early_.clear();
  for (const auto& e : early) on_envelope(e);
  pump();
}

void ParticipantNode::on_envelope(const Envelope& e) {
  if (aborted_ || outcome_.status == RoundStatus::rejected) return;
  Frame f;
  try {
    f = Frame::decode(e.frame);
  } catch (const Error&) {
    return;
  }
  tdepth_ = std::max(tdepth_, e.transport_depth);
  if (!config_) {
    if (f.phase == phase::announce) {
      accept_announcement(f, e.frame, e.protocol_depths.empty() ? 1 : e.protocol_depths[0]);
    } else if (early_.size() < 4096) {
      early_.push_back(e);
    }
    return;
  }
  if (!shuffle_ && !bulk_) return;

  if (f.phase == phase::control) {
    handle_control(f, e);
  } else if (f.phase == phase::bundle) {
    const Participant* leader = config_->find(config_->leader);
    if (f.sender != config_->leader || !leader || !f.verify(leader->signing_public)) return;
    std::vector<Bytes> inner;
    try {
      inner = decode_bundle(f.payload);
    } catch (const Error&) {
      return;
    }
    for (std::size_t i = 0; i < inner.size(); ++i) {
      Frame g;
      try {
        g = Frame::decode(inner[i]);
      } catch (const Error&) {
        continue;
      }
      deliver_protocol(g, inner[i], i < e.protocol_depths.size() ? e.protocol_depths[i] : 0, e.transport_depth);
    }
  } else if (f.is_protocol() && f.phase != phase::announce) {
    std::uint32_t pd = e.protocol_depths.empty() ? 0 : e.protocol_depths[0];
    if (leading_ && is_relayed_kind(*config_, f)) relay_input(f, e.frame, pd, e.transport_depth);
    else deliver_protocol(f, e.frame, pd, e.transport_depth);
  }
  pump();
}

void ParticipantNode::deliver_protocol(const Frame& f, const Bytes& raw, std::uint32_t pdepth, std::uint32_t tdepth) {
  pdepth_ = std::max(pdepth_, pdepth);
  tdepth_ = std::max(tdepth_, tdepth);
  if (shuffle_) shuffle_->on_frame(f, raw);
  else if (bulk_) bulk_->on_frame(f, raw);
}

void ParticipantNode::pump() {
  for (int guard = 0; guard < 64; ++guard) {
    std::size_t before = emitted_.size();
    drain_outbox();
    if (emitted_.size() == before) break;
  }
  note_finished();
  if (finished() || aborted_) return;
  for (const auto& a : awaiting()) {
    auto k = std::make_pair(a.member, a.key);
    if (timed_awaits_.insert(k).second) timer(TimerKind::await, a.member, a.key);
  }
}

void ParticipantNode::drain_outbox() {
  std::vector<Outgoing> outs = shuffle_ ? shuffle_->take_outbox() : bulk_ ? bulk_->take_outbox() : std::vector<Outgoing>{};
  for (auto& o : outs) {
    Frame f = Frame::decode(o.frame);
    emitted_.push_back(o.frame);
    std::uint32_t pd = pdepth_ + 1;
    std::uint32_t td = tdepth_ + 1;
    emitted_depth_[crypto::hash(o.frame)] = pd;
    max_emitted_depth_ = std::max(max_emitted_depth_, pd);
    if (o.route == Outgoing::Route::broadcast) {
      if (leading_) relay_input(f, o.frame, pd, td);
      else send_to(config_->leader, o.frame, {pd}, td);
    } else if (o.to != creds_.id) {
      send_to(o.to, o.frame, {pd}, td);
    }
  }
}

void ParticipantNode::note_finished() {
  if (outcome_.status != RoundStatus::running) return;
  if (shuffle_ && shuffle_->finished()) {
    const auto& r = shuffle_->result();
    if (r.status == ShuffleStatus::completed) {
      outcome_.status = RoundStatus::completed;
      outcome_.shuffle_output = r.output;
    } else {
      outcome_.status = RoundStatus::blamed;
      outcome_.verdict = r.verdict;
      outcome_.incomplete = r.incomplete;
    }
  } else if (bulk_ && bulk_->finished()) {
    const auto& r = bulk_->result();
    outcome_.recovered = r.recovered;
    outcome_.corrupted = r.corrupted;
    outcome_.own_slot = r.own_slot;
    outcome_.verdict = r.verdict;
    outcome_.incomplete = r.incomplete;
    outcome_.valid_accusations = r.valid_accusations;
    outcome_.rejected_accusations = r.rejected_accusations;
    outcome_.accusation_round = r.accusation_round;
    bool blamed = r.status == BulkStatus::blamed || !r.verdict.empty();
    outcome_.status = blamed ? RoundStatus::blamed : RoundStatus::completed;
  }
}

std::vector<Awaiting> ParticipantNode::awaiting() const {
  if (shuffle_) return shuffle_->awaiting();
  if (bulk_) return bulk_->awaiting();
  return {};
}

std::optional<Bytes> ParticipantNode::sent_frame(const ProtocolKey& key) const {
  if (shuffle_) {
    if (key.nonce != shuffle_->nonce()) return std::nullopt;
    return shuffle_->sent_frame(key.phase, key.subphase);
  }
  if (bulk_) return bulk_->sent_frame(key);
  return std::nullopt;
}

bool ParticipantNode::member_silent() const {
  if (shuffle_) return shuffle_->is_silent();
  if (bulk_) {
    const auto& d = bulk_->descriptor_shuffle();
    return d.is_silent() || (d.finished() && bulk_->is_silent());
  }
  return false;
}

Bytes ParticipantNode::control_frame(std::uint8_t sub, Bytes payload) {
  return make_frame(round_nonce_, phase::control, sub, creds_.id, LogHead{}, std::move(payload), creds_.signing.secret)
      .encode();
}

void ParticipantNode::send_to(MemberId to, Bytes frame, std::vector<std::uint32_t> depths, std::uint32_t tdepth) {
  Envelope e;
  e.from = creds_.id;
  e.to = to;
  e.frame = std::move(frame);
  e.transport_depth = tdepth;
  e.protocol_depths = std::move(depths);
  link_.send(std::move(e));
}

void ParticipantNode::send_control(MemberId to, std::uint8_t sub, Bytes payload, std::vector<std::uint32_t> depths) {
  send_to(to, control_frame(sub, std::move(payload)), std::move(depths), tdepth_ + 1);
}

std::uint64_t ParticipantNode::timer(TimerKind kind, MemberId member, ProtocolKey key) {
  std::uint64_t token = next_token_++;
  timers_.emplace(token, TimerInfo{kind, member, std::move(key)});
  link_.schedule(opts_.timeout_us, token);
  return token;
}

void ParticipantNode::on_timer(std::uint64_t token) {
  auto it = timers_.find(token);
  if (it == timers_.end() || aborted_) return;
  TimerInfo info = std::move(it->second);
  timers_.erase(it);

  switch (info.kind) {
    case TimerKind::await: {
      auto k = std::make_pair(info.member, info.key);
      if (finished()) return;
      auto aw = awaiting();
      bool still = std::any_of(aw.begin(), aw.end(),
                               [&](const Awaiting& a) { return a.member == info.member && a.key == info.key; });
      if (!still) {
        timed_awaits_.erase(k);
        suspicion_.resolve(creds_.id, info.member);
        return;
      }
      if (member_silent()) return;
      ++suspicions_raised_;
      suspicion_.suspect(creds_.id, info.member, link_.now_us());
      if (leading_) open_demand(info.member, info.key, creds_.id);
      else send_control(config_->leader, subphase::suspect, encode(Suspect{info.member, info.key}));
      timer(TimerKind::await, info.member, info.key);
      break;
    }
    case TimerKind::bundle: {
      bundle_timers_.erase(info.key);
      auto p = pending_.find(info.key);
      if (p == pending_.end() || flushed_.count(info.key)) return;
      std::vector<MemberId> missing;
      for (const auto& m : config_->participants)
        if (!p->second.count(m.id)) missing.push_back(m.id);
      for (auto id : missing) open_demand(id, info.key, creds_.id);
      break;
    }
    case TimerKind::demand: {
      auto d = demands_.find({info.member, info.key});
      if (d == demands_.end() || !d->second.open || d->second.token != token) return;
      abort_round({info.member});
      break;
    }
  }
  pump();
}

void ParticipantNode::on_connection_lost(MemberId peer) {
  if (!config_ || finished() || aborted_ || !config_->find(peer)) return;
  ++suspicions_raised_;
  if (leading_) {
    abort_round({peer});
  } else if (peer == config_->leader) {
    aborted_ = true;
    outcome_.status = RoundStatus::stalled;
    outcome_.failed = {peer};
  } else {
    send_control(config_->leader, subphase::suspect,
                 encode(Suspect{peer, ProtocolKey{round_nonce_, phase::announce, subphase::none}}));
  }
}

void ParticipantNode::handle_control(const Frame& f, const Envelope& e) {
  const Participant* sender = config_->find(f.sender);
  if (!sender || f.nonce != round_nonce_ || !f.verify(sender->signing_public)) return;
  std::uint32_t pd = e.protocol_depths.empty() ? 0 : e.protocol_depths[0];
  try {
    switch (f.subphase) {
      case subphase::suspect:
        if (leading_) {
          auto s = decode_suspect(f.payload);
          if (s.key.phase == phase::announce) abort_round({s.suspect});
          else open_demand(s.suspect, s.key, f.sender);
        }
        break;
      case subphase::demand:
        if (f.sender == config_->leader) answer_demand(decode_demand(f.payload));
        break;
      case subphase::demand_reply:
        if (leading_) on_demand_reply(f.sender, decode_demand_reply(f.payload), pd);
        break;
      case subphase::forward:
        if (f.sender == config_->leader) {
          Frame g = Frame::decode(f.payload);
          if (g.is_protocol()) deliver_protocol(g, f.payload, pd, e.transport_depth);
        }
        break;
      case subphase::abort:
        if (f.sender == config_->leader) apply_abort(decode_abort(f.payload));
        break;
      default: break;
    }
  } catch (const Error&) {
  }
}

void ParticipantNode::relay_input(const Frame& f, const Bytes& raw, std::uint32_t pdepth, std::uint32_t tdepth) {
  if (aborted_) return;
  auto digest = crypto::hash(raw);
  if (relayed_.count(digest)) return;
  const Participant* sender = config_->find(f.sender);
  if (!sender || !f.verify(sender->signing_public)) return;
  relayed_.insert(digest);
  RelayEntry entry{raw, pdepth, tdepth};

  if (f.phase == phase::finish && f.subphase == subphase::blame) {
    std::vector<ProtocolKey> stale;
    for (const auto& [k, v] : pending_)
      if (k.nonce == f.nonce && !(k.phase == phase::finish && k.subphase == subphase::blame)) stale.push_back(k);
    for (const auto& k : stale) flush_bundle(k);
  }

  if (!is_all_member_kind(*config_, f)) {
    broadcast_bundle(f.nonce, {entry});
    return;
  }
  ProtocolKey key{f.nonce, f.phase, f.subphase};
  if (flushed_.count(key)) {
    broadcast_bundle(f.nonce, {entry});
    return;
  }
  auto& slot = pending_[key];
  if (slot.count(f.sender)) {
    broadcast_bundle(f.nonce, {entry});
    return;
  }
  slot.emplace(f.sender, std::move(entry));
  if (slot.size() == 1) bundle_timers_[key] = timer(TimerKind::bundle, 0, key);
  if (slot.size() == config_->size()) flush_bundle(key);
}

void ParticipantNode::flush_bundle(const ProtocolKey& key) {
  auto it = pending_.find(key);
  if (it == pending_.end()) return;
  std::vector<RelayEntry> entries;
  for (const auto& p : config_->participants) {
    auto e = it->second.find(p.id);
    if (e != it->second.end()) entries.push_back(std::move(e->second));
  }
  pending_.erase(it);
  flushed_.insert(key);
  if (auto t = bundle_timers_.find(key); t != bundle_timers_.end()) {
    timers_.erase(t->second);
    bundle_timers_.erase(t);
  }
  broadcast_bundle(key.nonce, entries);
}

void ParticipantNode::broadcast_bundle(const Bytes& nonce, const std::vector<RelayEntry>& entries) {
  if (entries.empty()) return;
  std::vector<Bytes> raws;
  std::vector<std::uint32_t> depths;
  std::uint32_t td = 0;
  for (const auto& e : entries) {
    raws.push_back(e.raw);
    depths.push_back(e.pdepth);
    td = std::max(td, e.tdepth);
  }
  ++td;
  Bytes frame = make_frame(nonce, phase::bundle, subphase::none, creds_.id, LogHead{}, encode_bundle(raws),
                           creds_.signing.secret)
                    .encode();
  for (const auto& p : config_->participants)
    if (p.id != creds_.id) send_to(p.id, frame, depths, td);
  for (const auto& e : entries) deliver_protocol(Frame::decode(e.raw), e.raw, e.pdepth, td);
}

void ParticipantNode::open_demand(MemberId target, const ProtocolKey& key, MemberId requester) {
  auto& d = demands_[{target, key}];
  if (d.open && d.token != 0) {
    d.requesters.insert(requester);
    suspicion_.suspect(requester, target, link_.now_us());
    return;
  }
  suspicion_.suspect(requester, target, link_.now_us());
  d.target = target;
  d.key = key;
  d.open = true;
  d.requesters = {requester};
  d.token = timer(TimerKind::demand, target, key);
  if (target == creds_.id) answer_demand(Demand{requester, key});
  else send_control(target, subphase::demand, encode(Demand{requester, key}));
}

void ParticipantNode::answer_demand(const Demand& d) {
  if (member_silent()) return;
  DemandReply r;
  r.key = d.key;
  std::uint32_t pd = 0;
  if (auto f = sent_frame(d.key)) {
    r.frame = *f;
    auto it = emitted_depth_.find(crypto::hash(*f));
    if (it != emitted_depth_.end()) pd = it->second;
  } else {
    auto aw = awaiting();
    if (!aw.empty()) {
      r.waiting_on = aw.front().member;
      r.waiting_key = aw.front().key;
    } else {
      r.waiting_on = creds_.id;
      r.waiting_key = d.key;
    }
  }
  if (leading_) on_demand_reply(creds_.id, r, pd);
  else send_control(config_->leader, subphase::demand_reply, encode(r), {pd});
}

void ParticipantNode::on_demand_reply(MemberId from, const DemandReply& r, std::uint32_t pdepth) {
  auto it = demands_.find({from, r.key});
  if (it == demands_.end() || !it->second.open) return;
  DemandState& d = it->second;
  if (r.frame) {
    Frame f;
    try {
      f = Frame::decode(*r.frame);
    } catch (const Error&) {
      return;
    }
    const Participant* sender = config_->find(from);
    if (f.sender != from || f.nonce != r.key.nonce || f.phase != r.key.phase || f.subphase != r.key.subphase ||
        !sender || !f.verify(sender->signing_public))
      return;
    d.open = false;
    timers_.erase(d.token);
    ++suspicions_cleared_;
    suspicion_.resolve(from);
    auto requesters = d.requesters;
    if (is_relayed_kind(*config_, f)) relay_input(f, *r.frame, pdepth, tdepth_);
    for (auto req : requesters) {
      if (req == creds_.id) deliver_protocol(f, *r.frame, pdepth, tdepth_);
      else send_control(req, subphase::forward, *r.frame, {pdepth});
    }
    return;
  }
  d.open = false;
  timers_.erase(d.token);
  if (r.waiting_on != from) open_demand(r.waiting_on, r.waiting_key, from);
}

void ParticipantNode::abort_round(std::vector<MemberId> failed) {
  if (aborted_) return;
  Abort a{std::move(failed)};
  for (const auto& p : config_->participants)
    if (p.id != creds_.id) send_control(p.id, subphase::abort, encode(a));
  apply_abort(a);
}

void ParticipantNode::apply_abort(const Abort& a) {
  aborted_ = true;
  outcome_.failed = a.failed;
  for (auto id : a.failed) suspicion_.fail(id);
  if (!finished()) outcome_.status = RoundStatus::stalled;
}

}  // namespace dissent
