#include "dissent/shuffle.hpp"

#include <algorithm>

namespace dissent {

namespace {

bool contains(const std::vector<Bytes>& items, const Bytes& x) {
  return std::find(items.begin(), items.end(), x) != items.end();
}

std::optional<std::pair<std::size_t, std::size_t>> find_duplicate(const std::vector<Bytes>& items) {
  std::map<Bytes, std::size_t> seen;
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto [it, fresh] = seen.emplace(items[i], i);
    if (!fresh) return std::make_pair(it->second, i);
  }
  return std::nullopt;
}

}  // namespace

ShuffleMember::ShuffleMember(std::shared_ptr<const RoundConfig> config, Bytes instance_nonce,
                             std::size_t datum_length, InstanceRole role, const Credentials& creds,
                             crypto::Rng rng, Adversary* adversary, OracleTap* tap)
    : config_(std::move(config)),
      nonce_(std::move(instance_nonce)),
      L_(datum_length),
      role_(role),
      creds_(creds),
      rng_(std::move(rng)),
      adv_(adversary),
      tap_(tap),
      log_(nonce_) {
  auto p = config_->position(creds_.id);
  if (!p) throw Error(ErrorCode::MalformedMessage, "member is not in the roster");
  pos_ = *p;
}

void ShuffleMember::record_announcement(const Bytes& frame, bool sent) {
  log_.append(sent ? Direction::sent : Direction::received, phase::announce, frame);
}

void ShuffleMember::start(Bytes datum) {
  if (result_.status != ShuffleStatus::idle) return;
  if (datum.size() != L_) throw Error(ErrorCode::MalformedMessage, "datum length differs from the round's L");
  result_.status = ShuffleStatus::running;
  datum_ = std::move(datum);
  phase_ = phase::keys;
  secondary_ = crypto::keygen_encryption(rng_, crypto::KeyRole::secondary);
  if (tap_) tap_->on_secondary_key(nonce_, creds_.id, secondary_.secret);

  Bytes z = secondary_.public_key;
  if (adv_) adv_->tamper_secondary_public(role_, z);
  send(Outgoing::Route::broadcast, 0, phase::keys, subphase::none, z, true);
  if (adv_ && n() > 1) {
    if (auto alt = adv_->equivocal_secondary_public(role_))
      send(Outgoing::Route::unicast, member_at((pos_ + 1) % n()), phase::keys, subphase::none, *alt, false);
  }
  progress();
}

bool ShuffleMember::silent() const { return adv_ && adv_->silent(role_, phase_); }

Bytes ShuffleMember::make(std::uint8_t ph, std::uint8_t sub, Bytes payload) {
  return make_frame(nonce_, ph, sub, creds_.id, log_.head(), std::move(payload), creds_.signing.secret).encode();
}

void ShuffleMember::send(Outgoing::Route route, MemberId to, std::uint8_t ph, std::uint8_t sub, Bytes payload,
                         bool record) {
  if (silent()) return;
  Bytes raw = make(ph, sub, std::move(payload));
  if (record) {
    log_sent(raw);
    sent_[{ph, sub}] = raw;
    if (route == Outgoing::Route::broadcast || to == creds_.id)
      store_.emplace(Key{creds_.id, ph, sub}, Stored{Frame::decode(raw), raw, true});
  }
  if (route == Outgoing::Route::unicast && to == creds_.id) return;
  outbox_.push_back(Outgoing{route, to, std::move(raw), ph, sub});
}

void ShuffleMember::emit_broadcast(std::uint8_t ph, std::uint8_t sub, Bytes payload) {
  send(Outgoing::Route::broadcast, 0, ph, sub, std::move(payload), true);
}

void ShuffleMember::emit_unicast(MemberId to, std::uint8_t ph, std::uint8_t sub, Bytes payload) {
  send(Outgoing::Route::unicast, to, ph, sub, std::move(payload), true);
}

void ShuffleMember::log_sent(const Bytes& raw) { log_.append(Direction::sent, phase_, raw); }

const ShuffleMember::Stored* ShuffleMember::find(MemberId sender, std::uint8_t ph, std::uint8_t sub) const {
  auto it = store_.find(Key{sender, ph, sub});
  return it == store_.end() ? nullptr : &it->second;
}

void ShuffleMember::log_received(MemberId sender, std::uint8_t ph, std::uint8_t sub) {
  auto it = store_.find(Key{sender, ph, sub});
  if (it == store_.end() || it->second.logged) return;
  log_.append(Direction::received, phase_, it->second.raw);
  it->second.logged = true;
}

std::vector<Outgoing> ShuffleMember::take_outbox() {
  std::vector<Outgoing> out;
  out.swap(outbox_);
  return out;
}

void ShuffleMember::on_frame(const Frame& f, const Bytes& raw) {
  if (f.nonce != nonce_ || !f.is_protocol() || f.phase == phase::announce) return;
  auto p = config_->position(f.sender);
  if (!p || f.sender == creds_.id) return;
  if (!f.verify(config_->participants[*p].signing_public)) return;

  Key k{f.sender, f.phase, f.subphase};
  auto it = store_.find(k);
  if (it != store_.end()) {
    if (it->second.raw == raw || in_blame_ || finished()) return;
    if (!it->second.logged) {
      log_.append(Direction::received, phase_, it->second.raw);
      it->second.logged = true;
    }
    log_.append(Direction::received, phase_, raw);
    FaultReport rep;
    rep.kind = ReportKind::equivocation;
    rep.accused = f.sender;
    rep.proof_a = it->second.raw;
    rep.proof_b = raw;
    report(std::move(rep));
    progress();
    return;
  }
  store_.emplace(k, Stored{f, raw, false});
  progress();
}

void ShuffleMember::progress() {
  if (finished() || result_.status == ShuffleStatus::idle) return;
  for (auto& [key, st] : store_) {
    auto [sender, ph, sub] = key;
    if (ph == phase::finish && (sub == subphase::fault_report || sub == subphase::blame) && !st.logged &&
        !in_blame_) {
      phase_ = phase::finish;
      if (sub == subphase::fault_report) {
        log_.append(Direction::received, phase_, st.raw);
        st.logged = true;
      }
      enter_blame();
    }
  }
  bool advanced = true;
  while (advanced && !in_blame_ && !finished()) {
    switch (step_) {
      case Step::keys: advanced = step_keys(); break;
      case Step::submissions: advanced = step_submissions(); break;
      case Step::input: advanced = step_input(); break;
      case Step::final_vector: advanced = step_final(); break;
      case Step::go: advanced = step_go(); break;
      case Step::keys_release: advanced = step_release(); break;
      case Step::done: advanced = false; break;
    }
  }
  if (in_blame_) try_verdict();
}

bool ShuffleMember::step_keys() {
  for (std::size_t i = 0; i < n(); ++i)
    if (!find(member_at(i), phase::keys, subphase::none)) return false;
  secondary_publics_.clear();
  bool all_valid = true;
  for (std::size_t i = 0; i < n(); ++i) {
    log_received(member_at(i), phase::keys, subphase::none);
    const auto& z = find(member_at(i), phase::keys, subphase::none)->frame.payload;
    if (!crypto::is_valid_public_key(z)) all_valid = false;
    secondary_publics_.push_back(z);
  }
  if (!all_valid) {
    enter_blame();
    return false;
  }

  phase_ = phase::submit;
  Bytes datum = datum_;
  crypto::RandomnessTrace inner_trace;
  if (adv_ && adv_->collusive_inner(role_, L_, datum, inner_trace, n())) {
    inner_ = crypto::onion_encrypt_with(secondary_publics_, datum, inner_trace);
  } else {
    auto inner = crypto::onion_encrypt(secondary_publics_, datum, rng_);
    inner_ = std::move(inner.ciphertext);
    inner_trace = std::move(inner.trace);
  }
  for (auto& l : inner_trace.layers) crypto::wipe(l);
  auto outer = crypto::onion_encrypt(config_->primary_publics(), inner_, rng_);
  trace_ = std::move(outer.trace);
  if (tap_) tap_->on_submission(nonce_, creds_.id, datum, inner_, outer.ciphertext, trace_);
  emit_unicast(member_at(0), phase::submit, subphase::none, std::move(outer.ciphertext));
  step_ = pos_ == 0 ? Step::submissions : Step::input;
  return true;
}

bool ShuffleMember::step_submissions() {
  for (std::size_t i = 0; i < n(); ++i)
    if (!find(member_at(i), phase::submit, subphase::none)) return false;
  std::vector<Bytes> input;
  for (std::size_t i = 0; i < n(); ++i) {
    log_received(member_at(i), phase::submit, subphase::none);
    input.push_back(find(member_at(i), phase::submit, subphase::none)->frame.payload);
  }
  phase_ = phase::anonymize;
  run_shuffle_step(input);
  return true;
}

bool ShuffleMember::step_input() {
  MemberId prev = member_at(pos_ - 1);
  const Stored* st = find(prev, phase::anonymize, subphase::none);
  if (!st) return false;
  phase_ = phase::anonymize;
  log_received(prev, phase::anonymize, subphase::none);
  std::vector<Bytes> input;
  try {
    input = decode_vector(st->frame.payload);
  } catch (const Error&) {
    FaultReport rep;
    rep.kind = ReportKind::malformed_vector;
    rep.accused = prev;
    report(std::move(rep));
    return false;
  }
  run_shuffle_step(input);
  return true;
}

void ShuffleMember::run_shuffle_step(const std::vector<Bytes>& input) {
  MemberId prev = pos_ == 0 ? 0 : member_at(pos_ - 1);
  const std::size_t width = shuffle_item_size(L_, n(), pos_);
  FaultReport rep;
  rep.accused = prev;
  if (input.size() != n()) {
    rep.kind = ReportKind::malformed_vector;
    report(std::move(rep));
    return;
  }
  for (std::size_t i = 0; i < input.size(); ++i) {
    if (input[i].size() != width) {
      rep.kind = ReportKind::malformed_vector;
      rep.index_a = static_cast<std::uint32_t>(i);
      report(std::move(rep));
      return;
    }
  }
  if (auto dup = find_duplicate(input)) {
    rep.kind = ReportKind::duplicate;
    rep.index_a = static_cast<std::uint32_t>(dup->first);
    rep.index_b = static_cast<std::uint32_t>(dup->second);
    report(std::move(rep));
    return;
  }
  std::vector<Bytes> peeled;
  peeled.reserve(input.size());
  for (std::size_t i = 0; i < input.size(); ++i) {
    try {
      peeled.push_back(crypto::decrypt(creds_.primary.secret, input[i]));
    } catch (const Error&) {
      rep.kind = ReportKind::invalid_ciphertext;
      rep.index_a = static_cast<std::uint32_t>(i);
      report(std::move(rep));
      return;
    }
  }

  std::vector<std::size_t> perm(peeled.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng_.uniform(i)]);
  std::vector<Bytes> output(peeled.size());
  for (std::size_t i = 0; i < perm.size(); ++i) output[i] = std::move(peeled[perm[i]]);
  if (tap_) tap_->on_shuffle_step(nonce_, creds_.id, input, output, perm);

  std::optional<std::vector<Bytes>> alt;
  if (adv_) {
    adv_->tamper_shuffle_output(role_, output);
    alt = adv_->equivocal_shuffle_output(role_, output);
  }
  if (pos_ + 1 == n()) {
    emit_broadcast(phase::anonymize, subphase::none, encode_vector(output));
    if (alt && n() > 1)
      send(Outgoing::Route::unicast, member_at(0), phase::anonymize, subphase::none, encode_vector(*alt), false);
  } else {
    MemberId next = member_at(pos_ + 1);
    emit_unicast(next, phase::anonymize, subphase::none, encode_vector(output));
    if (alt) send(Outgoing::Route::unicast, next, phase::anonymize, subphase::none, encode_vector(*alt), false);
  }
  step_ = Step::final_vector;
}

bool ShuffleMember::step_final() {
  MemberId last = member_at(n() - 1);
  const Stored* st = find(last, phase::anonymize, subphase::none);
  if (!st) return false;
  log_received(last, phase::anonymize, subphase::none);
  std::vector<Bytes> items;
  try {
    items = decode_vector(st->frame.payload);
  } catch (const Error&) {
    enter_blame();
    return false;
  }
  const std::size_t width = shuffle_item_size(L_, n(), n());
  bool ok = items.size() == n() && !find_duplicate(items);
  for (const auto& it : items) ok = ok && it.size() == width;
  if (!ok) {
    enter_blame();
    return false;
  }
  final_ = std::move(items);
  bool go = contains(final_, inner_);
  auto digest = crypto::hash(encode_vector(final_));
  if (adv_) adv_->tamper_go(role_, go, digest);
  phase_ = phase::verify;
  emit_broadcast(phase::verify, subphase::none, encode(GoNoGo{go, digest}));
  step_ = Step::go;
  return true;
}

bool ShuffleMember::step_go() {
  for (std::size_t i = 0; i < n(); ++i)
    if (!find(member_at(i), phase::verify, subphase::none)) return false;
  const auto expect = crypto::hash(encode_vector(final_));
  bool all_go = true;
  for (std::size_t i = 0; i < n(); ++i) {
    log_received(member_at(i), phase::verify, subphase::none);
    try {
      auto g = decode_go(find(member_at(i), phase::verify, subphase::none)->frame.payload);
      all_go = all_go && g.go && g.digest == expect;
    } catch (const Error&) {
      all_go = false;
    }
  }
  if (!all_go) {
    enter_blame();
    return false;
  }
  phase_ = phase::finish;
  wipe_submission_secrets();
  Bytes w = secondary_.secret;
  if (adv_) adv_->tamper_released_key(role_, w);
  released_w_ = true;
  emit_broadcast(phase::finish, subphase::decryption, std::move(w));
  step_ = Step::keys_release;
  return true;
}

bool ShuffleMember::step_release() {
  for (std::size_t i = 0; i < n(); ++i)
    if (!find(member_at(i), phase::finish, subphase::decryption)) return false;
  std::vector<Bytes> keys;
  bool ok = true;
  for (std::size_t i = 0; i < n(); ++i) {
    log_received(member_at(i), phase::finish, subphase::decryption);
    const auto& w = find(member_at(i), phase::finish, subphase::decryption)->frame.payload;
    ok = ok && crypto::matches(w, secondary_publics_[i]);
    keys.push_back(w);
  }
  if (!ok) {
    enter_blame();
    return false;
  }
  result_.output.clear();
  for (const auto& item : final_) {
    try {
      result_.output.push_back(crypto::onion_decrypt(keys, item));
    } catch (const Error&) {
      result_.output.push_back(std::nullopt);
    }
  }
  crypto::wipe(secondary_.secret);
  result_.status = ShuffleStatus::completed;
  step_ = Step::done;
  return true;
}

void ShuffleMember::report(FaultReport rep) {
  if (reported_ || in_blame_) return;
  reported_ = true;
  phase_ = phase::finish;
  emit_broadcast(phase::finish, subphase::fault_report, encode(rep));
  enter_blame();
}

void ShuffleMember::wipe_submission_secrets() {
  crypto::wipe(inner_);
  for (auto& l : trace_.layers) crypto::wipe(l);
  trace_.layers.clear();
}

void ShuffleMember::enter_blame() {
  if (in_blame_) return;
  in_blame_ = true;
  phase_ = phase::finish;
  if (!released_w_) crypto::wipe(secondary_.secret);
  EvidencePayload ev;
  ev.transcript = encode_transcript(log_.entries());
  if (!inner_.empty()) ev.inner = inner_;
  if (!trace_.layers.empty()) ev.trace = trace_;
  emit_broadcast(phase::finish, subphase::blame, encode(ev));
}

void ShuffleMember::try_verdict() {
  if (finished()) return;
  std::vector<Frame> frames;
  for (std::size_t i = 0; i < n(); ++i) {
    const Stored* st = find(member_at(i), phase::finish, subphase::blame);
    if (!st) return;
    frames.push_back(st->frame);
  }
  for (std::size_t i = 0; i < n(); ++i) log_received(member_at(i), phase::finish, subphase::blame);
  try {
    result_.verdict = verify_blame(*config_, nonce_, L_, frames);
  } catch (const IncompleteEvidence& e) {
    result_.incomplete = e.missing();
  }
  result_.status = ShuffleStatus::blamed;
  step_ = Step::done;
}

std::vector<Awaiting> ShuffleMember::awaiting() const {
  std::vector<Awaiting> out;
  if (finished() || in_blame_ || result_.status == ShuffleStatus::idle) return out;
  auto key = [&](std::uint8_t ph) { return ProtocolKey{nonce_, ph, subphase::none}; };
  switch (step_) {
    case Step::submissions:
      for (std::size_t i = 0; i < n(); ++i)
        if (!find(member_at(i), phase::submit, subphase::none)) out.push_back({member_at(i), key(phase::submit)});
      break;
    case Step::input: out.push_back({member_at(pos_ - 1), key(phase::anonymize)}); break;
    case Step::final_vector:
      if (pos_ + 1 != n()) out.push_back({member_at(n() - 1), key(phase::anonymize)});
      break;
    default: break;
  }
  return out;
}

std::optional<Bytes> ShuffleMember::sent_frame(std::uint8_t ph, std::uint8_t sub) const {
  auto it = sent_.find({ph, sub});
  if (it == sent_.end()) return std::nullopt;
  return it->second;
}

}  // namespace dissent
