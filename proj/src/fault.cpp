#include "dissent/fault.hpp"

#include <algorithm>
#include <charconv>

namespace dissent {

namespace {

struct ActionName {
  FaultAction action;
  const char* name;
};

constexpr ActionName kNames[] = {
    {FaultAction::duplicate_entry, "duplicate_entry"},
    {FaultAction::replace_entry, "replace_entry"},
    {FaultAction::drop_entry, "drop_entry"},
    {FaultAction::false_flag, "false_flag"},
    {FaultAction::wrong_digest, "wrong_digest"},
    {FaultAction::bad_secondary_key, "bad_secondary_key"},
    {FaultAction::corrupt_slot_bits, "corrupt_slot_bits"},
    {FaultAction::invalid_accusation, "invalid_accusation"},
    {FaultAction::equivocate, "equivocate"},
    {FaultAction::go_silent, "go_silent"},
    {FaultAction::bad_key, "bad_key"},
    {FaultAction::duplicate_submission, "duplicate_submission"},
};

bool shuffle_level(InstanceRole role) { return role == InstanceRole::shuffle || role == InstanceRole::descriptor; }

}  // namespace

const char* to_string(FaultAction a) {
  for (const auto& n : kNames)
    if (n.action == a) return n.name;
  return "unknown";
}

std::optional<FaultAction> parse_fault_action(std::string_view name) {
  for (const auto& n : kNames)
    if (name == n.name) return n.action;
  return std::nullopt;
}

const std::vector<FaultAction>& catalog_actions() {
  static const std::vector<FaultAction> kCatalog{
      FaultAction::duplicate_entry,   FaultAction::replace_entry,     FaultAction::drop_entry,
      FaultAction::false_flag,        FaultAction::wrong_digest,      FaultAction::bad_secondary_key,
      FaultAction::corrupt_slot_bits, FaultAction::invalid_accusation, FaultAction::equivocate,
      FaultAction::go_silent,
  };
  return kCatalog;
}

std::uint8_t FaultStrategy::effective_phase() const {
  if (trigger_phase != 0) return trigger_phase;
  switch (action) {
    case FaultAction::bad_key:
    case FaultAction::equivocate: return 1;
    case FaultAction::duplicate_submission: return 2;
    case FaultAction::duplicate_entry:
    case FaultAction::replace_entry:
    case FaultAction::drop_entry:
    case FaultAction::corrupt_slot_bits:
    case FaultAction::go_silent: return 3;
    case FaultAction::false_flag:
    case FaultAction::wrong_digest: return 4;
    case FaultAction::bad_secondary_key:
    case FaultAction::invalid_accusation: return 5;
  }
  return 3;
}

bool FaultStrategy::exposable() const {
  if (action == FaultAction::invalid_accusation) return false;
  if (action == FaultAction::corrupt_slot_bits && own_slot) return false;
  return true;
}

std::string FaultStrategy::describe() const {
  std::string s = (action == FaultAction::corrupt_slot_bits && own_slot) ? "corrupt_own_slot" : to_string(action);
  if (trigger_phase != 0) s += ":" + std::to_string(trigger_phase);
  s += "@" + std::to_string(target);
  return s;
}

FaultStrategy parse_fault(std::string_view spec) {
  auto at = spec.find('@');
  if (at == std::string_view::npos) throw Error(ErrorCode::Usage, "fault must look like STRATEGY@MEMBER");
  auto head = spec.substr(0, at);
  auto member = spec.substr(at + 1);
  FaultStrategy f;
  auto colon = head.find(':');
  auto name = head.substr(0, colon);
  if (colon != std::string_view::npos) {
    auto ph = head.substr(colon + 1);
    unsigned v = 0;
    auto res = std::from_chars(ph.data(), ph.data() + ph.size(), v);
    if (res.ec != std::errc{} || res.ptr != ph.data() + ph.size() || v < 1 || v > 5)
      throw Error(ErrorCode::Usage, "fault phase must be 1..5");
    f.trigger_phase = static_cast<std::uint8_t>(v);
  }
  if (name == "corrupt_own_slot") {
    f.action = FaultAction::corrupt_slot_bits;
    f.own_slot = true;
  } else {
    auto a = parse_fault_action(name);
    if (!a) throw Error(ErrorCode::Usage, "unknown fault strategy '" + std::string(name) + "'");
    f.action = *a;
  }
  unsigned id = 0;
  auto res = std::from_chars(member.data(), member.data() + member.size(), id);
  if (res.ec != std::errc{} || res.ptr != member.data() + member.size() || id == 0)
    throw Error(ErrorCode::Usage, "fault member must be a positive id");
  f.target = id;
  return f;
}

const FaultStrategy* FaultPlan::for_member(MemberId id, std::uint32_t round) const {
  for (const auto& s : strategies)
    if (s.target == id && (!s.round || *s.round == round)) return &s;
  return nullptr;
}

std::set<MemberId> FaultPlan::culprits(std::uint32_t round) const {
  std::set<MemberId> out;
  for (const auto& s : strategies)
    if (!s.round || *s.round == round) out.insert(s.target);
  return out;
}

std::set<MemberId> FaultPlan::exposable_culprits(std::uint32_t round) const {
  std::set<MemberId> out;
  for (const auto& s : strategies)
    if ((!s.round || *s.round == round) && s.exposable()) out.insert(s.target);
  return out;
}

Adversary::Adversary(FaultStrategy strategy, crypto::Rng rng, std::shared_ptr<CollusionBoard> board)
    : strategy_(strategy), rng_(std::move(rng)), board_(std::move(board)) {}

bool Adversary::targets(InstanceRole role) const {
  switch (strategy_.action) {
    case FaultAction::corrupt_slot_bits:
    case FaultAction::invalid_accusation: return role == InstanceRole::bulk_data;
    case FaultAction::go_silent: return true;
    default: return shuffle_level(role);
  }
}

bool Adversary::silent(InstanceRole role, std::uint8_t phase) const {
  if (!is(FaultAction::go_silent)) return false;
  if (shuffle_level(role)) return phase >= strategy_.effective_phase();
  return true;
}

void Adversary::tamper_secondary_public(InstanceRole role, Bytes& z) {
  if (is(FaultAction::bad_key) && targets(role)) z.assign(crypto::kPublicKeySize, 0);
}

std::optional<Bytes> Adversary::equivocal_secondary_public(InstanceRole role) {
  if (!is(FaultAction::equivocate) || !targets(role) || strategy_.effective_phase() != 1) return std::nullopt;
  return crypto::keygen_encryption(rng_, crypto::KeyRole::secondary).public_key;
}

bool Adversary::collusive_inner(InstanceRole role, std::size_t datum_length, Bytes& datum,
                                crypto::RandomnessTrace& inner_trace, std::size_t layers) {
  if (!is(FaultAction::duplicate_submission) || !targets(role) || !board_) return false;
  crypto::Rng shared(board_->shared_seed);
  datum = shared.bytes(datum_length);
  inner_trace.layers.clear();
  for (std::size_t i = 0; i < layers; ++i) inner_trace.layers.push_back(shared.bytes(crypto::kRandomnessSize));
  return true;
}

void Adversary::tamper_shuffle_output(InstanceRole role, std::vector<Bytes>& items) {
  if (!targets(role) || items.empty()) return;
  switch (strategy_.action) {
    case FaultAction::duplicate_entry: {
      if (items.size() < 2) return;
      auto a = rng_.uniform(items.size());
      auto b = (a + 1 + rng_.uniform(items.size() - 1)) % items.size();
      items[b] = items[a];
      break;
    }
    case FaultAction::replace_entry: {
      auto a = rng_.uniform(items.size());
      items[a] = rng_.bytes(items[a].size());
      break;
    }
    case FaultAction::drop_entry:
      items.erase(items.begin() + static_cast<std::ptrdiff_t>(rng_.uniform(items.size())));
      break;
    default: break;
  }
}

std::optional<std::vector<Bytes>> Adversary::equivocal_shuffle_output(InstanceRole role,
                                                                      const std::vector<Bytes>& items) {
  if (!is(FaultAction::equivocate) || !targets(role) || strategy_.effective_phase() != 3 || items.size() < 2)
    return std::nullopt;
  auto alt = items;
  std::swap(alt[0], alt[1]);
  return alt;
}

void Adversary::tamper_go(InstanceRole role, bool& go, crypto::Digest& digest) {
  if (!targets(role)) return;
  if (is(FaultAction::false_flag)) go = false;
  if (is(FaultAction::wrong_digest)) digest[0] ^= 0x01;
}

void Adversary::tamper_released_key(InstanceRole role, Bytes& w) {
  if (is(FaultAction::bad_secondary_key) && targets(role))
    w = crypto::keygen_encryption(rng_, crypto::KeyRole::secondary).secret;
}

bool Adversary::sabotage_own_descriptor() const {
  return (is(FaultAction::corrupt_slot_bits) && strategy_.own_slot) || is(FaultAction::invalid_accusation);
}

bool Adversary::corrupts_other_slots() const { return is(FaultAction::corrupt_slot_bits) && !strategy_.own_slot; }

void Adversary::tamper_slot_bits(Bytes& bits) {
  if (bits.empty()) {
    bits.push_back(0x01);
    return;
  }
  bits[rng_.uniform(bits.size())] ^= static_cast<std::uint8_t>(1u << rng_.uniform(8));
}

}  // namespace dissent
