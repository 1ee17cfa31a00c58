#include "dissent/bulk.hpp"

#include <algorithm>
#include <cstring>

#include "dissent/simd/xor.hpp"

namespace dissent {

std::size_t descriptor_size(std::size_t n) {
  return 8 + crypto::kDigestSize + n * (crypto::kDigestSize + kEncryptedSeedSize);
}

Bytes encode(const MessageDescriptor& d) {
  ByteWriter w;
  w.u64(d.length).raw(d.message_hash);
  for (const auto& h : d.stream_hashes) w.raw(h);
  for (const auto& s : d.encrypted_seeds) {
    if (s.size() != kEncryptedSeedSize) throw Error(ErrorCode::MalformedMessage, "encrypted seed has wrong width");
    w.raw(s);
  }
  return std::move(w).take();
}

MessageDescriptor decode_descriptor(ByteView bytes, std::size_t n) {
  if (bytes.size() != descriptor_size(n)) throw Error(ErrorCode::MalformedMessage, "descriptor has wrong width");
  ByteReader r(bytes);
  MessageDescriptor d;
  d.length = r.u64();
  auto mh = r.raw(crypto::kDigestSize);
  std::memcpy(d.message_hash.data(), mh.data(), mh.size());
  d.stream_hashes.resize(n);
  for (auto& h : d.stream_hashes) {
    auto v = r.raw(crypto::kDigestSize);
    std::memcpy(h.data(), v.data(), v.size());
  }
  for (std::size_t j = 0; j < n; ++j) {
    auto v = r.raw(kEncryptedSeedSize);
    d.encrypted_seeds.emplace_back(v.begin(), v.end());
  }
  r.expect_done();
  return d;
}

GeneratedDescriptor generate_descriptor(const RoundConfig& config, std::size_t self_pos, ByteView message,
                                        crypto::Rng& rng, std::optional<std::size_t> sabotage_peer) {
  const std::size_t n = config.size();
  if (message.size() > kMaxSlotLength) throw Error(ErrorCode::PlaintextTooLong, "bulk message exceeds slot bound");
  GeneratedDescriptor g;
  auto& d = g.descriptor;
  auto& s = g.secrets;
  d.length = message.size();
  d.message_hash = crypto::hash(message);
  s.message.assign(message.begin(), message.end());
  s.own_ciphertext = s.message;
  d.stream_hashes.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    auto seed = rng.seed_bytes();
    s.seeds.push_back(seed);
    if (j == self_pos) continue;
    auto stream = crypto::prng_bytes(seed, message.size());
    simd::xor_into(s.own_ciphertext, stream);
    d.stream_hashes[j] = crypto::hash(stream);
  }
  d.stream_hashes[self_pos] = crypto::hash(s.own_ciphertext);
  for (std::size_t j = 0; j < n; ++j) {
    const auto& y = config.participants[j].primary_public;
    if (sabotage_peer && *sabotage_peer == j && j != self_pos) {
      s.sabotaged_peer = j;
      if (message.empty()) {
        // An empty stream hashes identically under every seed, so spoil the
        // ciphertext itself.
        d.encrypted_seeds.push_back(rng.bytes(kEncryptedSeedSize));
        s.seed_randomness.push_back(rng.bytes(crypto::kRandomnessSize));
        s.sabotage_randomness = s.seed_randomness.back();
      } else {
        auto wrong = rng.seed_bytes();
        auto e = crypto::encrypt(y, wrong, rng);
        d.encrypted_seeds.push_back(std::move(e.ciphertext));
        s.sabotage_randomness = e.randomness;
        s.seed_randomness.push_back(std::move(e.randomness));
      }
      continue;
    }
    auto e = crypto::encrypt(y, s.seeds[j], rng);
    d.encrypted_seeds.push_back(std::move(e.ciphertext));
    s.seed_randomness.push_back(std::move(e.randomness));
  }
  return g;
}

Bytes encode_slots(const std::vector<SlotCiphertext>& slots) {
  ByteWriter w;
  for (const auto& s : slots) {
    w.u32(s.slot);
    if (s.bits) {
      w.u64(s.bits->size()).raw(*s.bits);
    } else {
      w.u64(kEmptySlot);
    }
  }
  return std::move(w).take();
}

std::vector<SlotCiphertext> decode_slots(ByteView payload, std::size_t n) {
  ByteReader r(payload);
  std::vector<SlotCiphertext> out;
  for (std::size_t t = 0; t < n; ++t) {
    SlotCiphertext s;
    s.slot = r.u32();
    if (s.slot != t) throw Error(ErrorCode::MalformedMessage, "slot index out of order");
    auto len = r.u64();
    if (len != kEmptySlot) {
      if (len > kMaxSlotLength) throw Error(ErrorCode::MalformedMessage, "slot length too large");
      auto v = r.raw(static_cast<std::size_t>(len));
      s.bits = Bytes(v.begin(), v.end());
    }
    out.push_back(std::move(s));
  }
  r.expect_done();
  return out;
}

std::optional<Bytes> peer_contribution(const MessageDescriptor& d, std::size_t self_pos, ByteView primary_secret) {
  if (d.length > kMaxSlotLength || self_pos >= d.encrypted_seeds.size()) return std::nullopt;
  Bytes seed;
  try {
    seed = crypto::decrypt(primary_secret, d.encrypted_seeds[self_pos]);
  } catch (const Error&) {
    return std::nullopt;
  }
  if (seed.size() != crypto::kSeedSize) return std::nullopt;
  crypto::Seed s;
  std::copy(seed.begin(), seed.end(), s.begin());
  auto stream = crypto::prng_bytes(s, static_cast<std::size_t>(d.length));
  if (crypto::hash(stream) != d.stream_hashes[self_pos]) return std::nullopt;
  return stream;
}

namespace {

const SlotCiphertext* contribution_of(const std::vector<std::optional<std::vector<SlotCiphertext>>>& contributions,
                                      std::size_t j, std::uint32_t t) {
  if (j >= contributions.size() || !contributions[j] || t >= contributions[j]->size()) return nullptr;
  return &(*contributions[j])[t];
}

bool deviates(const MessageDescriptor& d, const SlotCiphertext* c, std::size_t j) {
  if (!c || !c->bits) return true;
  if (c->bits->size() != d.length) return true;
  return crypto::hash(*c->bits) != d.stream_hashes[j];
}

}  // namespace

std::vector<std::size_t> deviating_members(const MessageDescriptor& d, std::uint32_t t,
                                           const std::vector<std::optional<std::vector<SlotCiphertext>>>& contributions) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < contributions.size(); ++j)
    if (deviates(d, contribution_of(contributions, j, t), j)) out.push_back(j);
  return out;
}

Recovery recover(const std::vector<std::optional<MessageDescriptor>>& descriptors,
                 const std::vector<std::optional<std::vector<SlotCiphertext>>>& contributions) {
  Recovery rec;
  for (std::uint32_t t = 0; t < descriptors.size(); ++t) {
    const auto& d = descriptors[t];
    if (!d || d->length > kMaxSlotLength || d->stream_hashes.size() != contributions.size() ||
        !deviating_members(*d, t, contributions).empty()) {
      rec.corrupted.insert(t);
      continue;
    }
    std::vector<std::span<const std::uint8_t>> parts;
    for (std::size_t j = 0; j < contributions.size(); ++j) parts.emplace_back(*contribution_of(contributions, j, t)->bits);
    Bytes m(static_cast<std::size_t>(d->length));
    simd::xor_fold(m, parts);
    if (crypto::hash(m) != d->message_hash) {
      rec.corrupted.insert(t);
      continue;
    }
    rec.recovered.emplace(t, std::move(m));
  }
  return rec;
}

Bytes encode(const Accusation& a) {
  if (a.encrypted_seed.size() != kEncryptedSeedSize || a.randomness.size() != crypto::kRandomnessSize)
    throw Error(ErrorCode::MalformedMessage, "accusation field has wrong width");
  ByteWriter w;
  w.u32(a.accused).raw(a.encrypted_seed).raw(a.seed).raw(a.randomness);
  return std::move(w).take();
}

Bytes accusation_filler() { return Bytes(kAccusationSize, 0); }

std::optional<Accusation> decode_accusation(ByteView bytes) {
  if (bytes.size() != kAccusationSize) throw Error(ErrorCode::MalformedMessage, "accusation has wrong width");
  if (std::all_of(bytes.begin(), bytes.end(), [](std::uint8_t b) { return b == 0; })) return std::nullopt;
  ByteReader r(bytes);
  Accusation a;
  a.accused = r.u32();
  auto s = r.raw(kEncryptedSeedSize);
  a.encrypted_seed.assign(s.begin(), s.end());
  auto seed = r.raw(crypto::kSeedSize);
  std::copy(seed.begin(), seed.end(), a.seed.begin());
  auto rnd = r.raw(crypto::kRandomnessSize);
  a.randomness.assign(rnd.begin(), rnd.end());
  return a;
}

std::optional<std::uint32_t> verify_accusation(const RoundConfig& config,
                                               const std::vector<std::optional<MessageDescriptor>>& descriptors,
                                               const std::vector<std::optional<std::vector<SlotCiphertext>>>& contributions,
                                               const Accusation& a) {
  auto pos = config.position(a.accused);
  if (!pos) return std::nullopt;
  for (std::uint32_t t = 0; t < descriptors.size(); ++t) {
    const auto& d = descriptors[t];
    if (!d || d->encrypted_seeds.size() <= *pos || d->encrypted_seeds[*pos] != a.encrypted_seed) continue;
    if (d->length > kMaxSlotLength) return std::nullopt;
    Bytes replay;
    try {
      replay = crypto::encrypt_with(config.participants[*pos].primary_public, a.seed, a.randomness);
    } catch (const Error&) {
      return std::nullopt;
    }
    if (replay != a.encrypted_seed) return std::nullopt;
    if (crypto::hash(crypto::prng_bytes(a.seed, static_cast<std::size_t>(d->length))) != d->stream_hashes[*pos])
      return std::nullopt;
    if (!deviates(*d, contribution_of(contributions, *pos, t), *pos)) return std::nullopt;
    return t;
  }
  return std::nullopt;
}

Bytes descriptor_nonce(ByteView round_nonce) {
  ByteWriter w;
  w.raw(round_nonce).raw(to_bytes("descriptor"));
  return crypto::hash_bytes(w.bytes());
}

Bytes accusation_nonce(ByteView round_nonce) {
  ByteWriter w;
  w.raw(round_nonce).raw(to_bytes("accusation"));
  return crypto::hash_bytes(w.bytes());
}

BulkMember::BulkMember(std::shared_ptr<const RoundConfig> config, const Credentials& creds, crypto::Rng rng,
                       Adversary* adversary, OracleTap* tap)
    : config_(std::move(config)),
      creds_(creds),
      rng_(std::move(rng)),
      adv_(adversary),
      tap_(tap),
      nonce_d_(descriptor_nonce(config_->nonce)),
      nonce_a_(accusation_nonce(config_->nonce)),
      log_(config_->nonce) {
  auto p = config_->position(creds_.id);
  if (!p) throw Error(ErrorCode::MalformedMessage, "member is not in the roster");
  pos_ = *p;
  descriptors_ = std::make_unique<ShuffleMember>(config_, nonce_d_, descriptor_size(config_->size()),
                                                 InstanceRole::descriptor, creds_, rng_.fork("descriptor-shuffle"),
                                                 adv_, tap_);
}

void BulkMember::record_announcement(const Bytes& frame, bool sent) {
  log_.append(sent ? Direction::sent : Direction::received, phase::announce, frame);
}

bool BulkMember::is_silent() const { return adv_ && adv_->silent(InstanceRole::bulk_data, phase::anonymize); }

void BulkMember::start(Bytes message) {
  if (result_.status != BulkStatus::idle) return;
  result_.status = BulkStatus::running;
  std::optional<std::size_t> sabotage;
  if (adv_ && adv_->sabotage_own_descriptor() && config_->size() > 1) sabotage = (pos_ + 1) % config_->size();
  auto gen_rng = rng_.fork("descriptor");
  own_ = generate_descriptor(*config_, pos_, message, gen_rng, sabotage);
  descriptors_->start(encode(own_.descriptor));
  pump();
}

void BulkMember::on_frame(const Frame& f, const Bytes& raw) {
  if (f.nonce == nonce_d_) {
    descriptors_->on_frame(f, raw);
  } else if (f.nonce == nonce_a_) {
    if (accusations_) accusations_->on_frame(f, raw);
    else early_accusation_frames_.emplace_back(f, raw);
  } else if (f.nonce == config_->nonce && f.phase == phase::anonymize) {
    auto p = config_->position(f.sender);
    if (!p || f.sender == creds_.id || data_frames_.count(f.sender)) return;
    if (!f.verify(config_->participants[*p].signing_public)) return;
    data_frames_.emplace(f.sender, std::make_pair(f, raw));
  }
  pump();
}

void BulkMember::pump() {
  for (auto& o : descriptors_->take_outbox()) outbox_.push_back(std::move(o));
  if (accusations_)
    for (auto& o : accusations_->take_outbox()) outbox_.push_back(std::move(o));
  if (finished()) return;

  if (descriptors_->status() == ShuffleStatus::blamed) {
    result_.verdict = descriptors_->result().verdict;
    result_.incomplete = descriptors_->result().incomplete;
    result_.status = BulkStatus::blamed;
    return;
  }
  if (descriptors_->status() == ShuffleStatus::completed && !data_started_) begin_data_phase();
  if (data_started_ && !contributions_.size()) try_recover();
  if (accusations_) {
    for (auto& o : accusations_->take_outbox()) outbox_.push_back(std::move(o));
    if (accusations_->finished()) finish_accusations();
  }
}

void BulkMember::begin_data_phase() {
  data_started_ = true;
  const std::size_t n = config_->size();
  const auto& out = descriptors_->result().output;
  const Bytes own_enc = encode(own_.descriptor);
  slots_.clear();
  for (std::size_t t = 0; t < out.size(); ++t) {
    std::optional<MessageDescriptor> d;
    if (out[t]) {
      try {
        d = decode_descriptor(*out[t], n);
      } catch (const Error&) {
      }
      if (*out[t] == own_enc && !result_.own_slot) result_.own_slot = static_cast<std::uint32_t>(t);
    }
    slots_.push_back(std::move(d));
  }

  std::optional<std::uint32_t> victim;
  if (adv_ && adv_->corrupts_other_slots()) {
    std::vector<std::uint32_t> others;
    for (std::uint32_t t = 0; t < slots_.size(); ++t)
      if (slots_[t] && (!result_.own_slot || t != *result_.own_slot)) others.push_back(t);
    if (!others.empty()) victim = others[adv_->rng().uniform(others.size())];
  }

  std::vector<SlotCiphertext> mine;
  for (std::uint32_t t = 0; t < slots_.size(); ++t) {
    SlotCiphertext c{t, std::nullopt};
    if (result_.own_slot && t == *result_.own_slot) c.bits = own_.secrets.own_ciphertext;
    else if (slots_[t]) c.bits = peer_contribution(*slots_[t], pos_, creds_.primary.secret);
    if (victim && t == *victim) {
      if (!c.bits) c.bits = Bytes{};
      adv_->tamper_slot_bits(*c.bits);
    }
    mine.push_back(std::move(c));
  }
  if (is_silent()) return;
  Bytes raw = make_frame(config_->nonce, phase::anonymize, subphase::none, creds_.id, log_.head(), encode_slots(mine),
                         creds_.signing.secret)
                  .encode();
  log_.append(Direction::sent, phase::anonymize, raw);
  data_sent_ = raw;
  data_frames_.emplace(creds_.id, std::make_pair(Frame::decode(raw), raw));
  outbox_.push_back(Outgoing{Outgoing::Route::broadcast, 0, raw, phase::anonymize, subphase::none});
}

void BulkMember::try_recover() {
  const std::size_t n = config_->size();
  for (const auto& p : config_->participants)
    if (!data_frames_.count(p.id)) return;
  contributions_.clear();
  for (const auto& p : config_->participants) {
    const auto& [f, raw] = data_frames_.at(p.id);
    if (p.id != creds_.id) log_.append(Direction::received, phase::anonymize, raw);
    try {
      contributions_.push_back(decode_slots(f.payload, n));
    } catch (const Error&) {
      contributions_.push_back(std::nullopt);
    }
  }
  auto rec = recover(slots_, contributions_);
  result_.recovered = std::move(rec.recovered);
  result_.corrupted = std::move(rec.corrupted);
  if (result_.corrupted.empty()) {
    result_.status = BulkStatus::completed;
    return;
  }

  Bytes datum = accusation_filler();
  bool own_corrupted = result_.own_slot && result_.corrupted.count(*result_.own_slot);
  if (own_corrupted && adv_ && adv_->fabricates_accusation() && own_.secrets.sabotaged_peer) {
    std::size_t j = *own_.secrets.sabotaged_peer;
    Accusation a{config_->participants[j].id, own_.descriptor.encrypted_seeds[j], own_.secrets.seeds[j],
                 own_.secrets.sabotage_randomness};
    datum = encode(a);
  } else if (own_corrupted && !(adv_ && adv_->sabotage_own_descriptor())) {
    const auto& d = own_.descriptor;
    for (std::size_t j : deviating_members(d, *result_.own_slot, contributions_)) {
      if (j == pos_) continue;
      Accusation a{config_->participants[j].id, d.encrypted_seeds[j], own_.secrets.seeds[j],
                   own_.secrets.seed_randomness[j]};
      datum = encode(a);
      break;
    }
  }
  result_.accusation_round = true;
  accusations_ = std::make_unique<ShuffleMember>(config_, nonce_a_, kAccusationSize, InstanceRole::accusation, creds_,
                                                 rng_.fork("accusation-shuffle"), adv_, tap_);
  accusations_->start(std::move(datum));
  for (auto& [f, raw] : early_accusation_frames_) accusations_->on_frame(f, raw);
  early_accusation_frames_.clear();
}

void BulkMember::finish_accusations() {
  if (accusations_->status() == ShuffleStatus::blamed) {
    result_.verdict = accusations_->result().verdict;
    result_.incomplete = accusations_->result().incomplete;
    result_.status = BulkStatus::blamed;
    return;
  }
  for (const auto& item : accusations_->result().output) {
    if (!item) continue;
    std::optional<Accusation> a;
    try {
      a = decode_accusation(*item);
    } catch (const Error&) {
      ++result_.rejected_accusations;
      continue;
    }
    if (!a) continue;
    auto slot = verify_accusation(*config_, slots_, contributions_, *a);
    if (!slot) {
      ++result_.rejected_accusations;
      continue;
    }
    ++result_.valid_accusations;
    Finding f{a->accused, FaultCategory::corrupt_slot, "corrupted slot " + std::to_string(*slot), {}};
    f.proof.push_back(data_frames_.at(a->accused).second);
    f.proof.push_back(*item);
    result_.verdict.add(std::move(f));
  }
  result_.status = BulkStatus::completed;
}

std::vector<Outgoing> BulkMember::take_outbox() {
  std::vector<Outgoing> out;
  out.swap(outbox_);
  return out;
}

std::vector<Awaiting> BulkMember::awaiting() const {
  if (finished()) return {};
  if (accusations_) return accusations_->awaiting();
  if (!data_started_) return descriptors_->awaiting();
  return {};
}

std::optional<Bytes> BulkMember::sent_frame(const ProtocolKey& key) const {
  if (key.nonce == nonce_d_) return descriptors_->sent_frame(key.phase, key.subphase);
  if (key.nonce == nonce_a_) return accusations_ ? accusations_->sent_frame(key.phase, key.subphase) : std::nullopt;
  if (key.nonce == config_->nonce && key.phase == phase::anonymize) return data_sent_;
  return std::nullopt;
}

}  // namespace dissent
