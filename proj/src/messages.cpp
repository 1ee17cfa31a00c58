#include "dissent/messages.hpp"

#include <algorithm>

#include "dissent/frame.hpp"

namespace dissent {

std::optional<std::size_t> RoundConfig::position(MemberId id) const {
  for (std::size_t i = 0; i < participants.size(); ++i)
    if (participants[i].id == id) return i;
  return std::nullopt;
}

const Participant* RoundConfig::find(MemberId id) const {
  auto p = position(id);
  return p ? &participants[*p] : nullptr;
}

const Participant& RoundConfig::at(MemberId id) const {
  auto p = position(id);
  if (!p) throw Error(ErrorCode::MalformedMessage, "member not in roster");
  return participants[*p];
}

std::vector<Bytes> RoundConfig::primary_publics() const {
  std::vector<Bytes> out;
  out.reserve(participants.size());
  for (const auto& p : participants) out.push_back(p.primary_public);
  return out;
}

Bytes encode(const RoundConfig& c) {
  ByteWriter w;
  w.blob(c.nonce).u8(static_cast<std::uint8_t>(c.protocol)).u64(c.datum_length).u32(c.quorum).u32(c.leader);
  w.u32(static_cast<std::uint32_t>(c.participants.size()));
  for (const auto& p : c.participants) w.u32(p.id).blob(p.primary_public).blob(p.signing_public);
  return std::move(w).take();
}

RoundConfig decode_round_config(ByteView payload) {
  ByteReader r(payload);
  RoundConfig c;
  c.nonce = r.blob_copy(kMaxNonceSize);
  auto kind = r.u8();
  if (kind != 1 && kind != 2) throw Error(ErrorCode::MalformedMessage, "unknown protocol kind");
  c.protocol = static_cast<ProtocolKind>(kind);
  c.datum_length = r.u64();
  if (c.datum_length > crypto::kMaxPlaintextSize) throw Error(ErrorCode::MalformedMessage, "datum length too large");
  c.quorum = r.u32();
  c.leader = r.u32();
  auto n = r.u32();
  if (n == 0 || n > 1024) throw Error(ErrorCode::MalformedMessage, "roster size out of range");
  for (std::uint32_t i = 0; i < n; ++i) {
    Participant p;
    p.id = r.u32();
    p.primary_public = r.blob_copy(crypto::kPublicKeySize);
    p.signing_public = r.blob_copy(crypto::kPublicKeySize);
    c.participants.push_back(std::move(p));
  }
  r.expect_done();
  for (std::size_t i = 0; i < c.participants.size(); ++i)
    for (std::size_t j = i + 1; j < c.participants.size(); ++j)
      if (c.participants[i].id == c.participants[j].id)
        throw Error(ErrorCode::MalformedMessage, "duplicate roster id");
  if (!c.position(c.leader)) throw Error(ErrorCode::MalformedMessage, "leader not in roster");
  return c;
}

Bytes encode_vector(const std::vector<Bytes>& items) {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(items.size()));
  for (const auto& it : items) w.blob(it);
  return std::move(w).take();
}

std::vector<Bytes> decode_vector(ByteView payload, std::size_t max_items) {
  ByteReader r(payload);
  auto n = r.u32();
  if (n > max_items) throw Error(ErrorCode::MalformedMessage, "vector too long");
  std::vector<Bytes> out;
  out.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) out.push_back(r.blob_copy());
  r.expect_done();
  return out;
}

Bytes encode(const GoNoGo& g) {
  ByteWriter w;
  w.u8(g.go ? 1 : 0).raw(g.digest);
  return std::move(w).take();
}

GoNoGo decode_go(ByteView payload) {
  ByteReader r(payload);
  GoNoGo g;
  auto flag = r.u8();
  if (flag > 1) throw Error(ErrorCode::MalformedMessage, "bad go flag");
  g.go = flag == 1;
  auto d = r.raw(g.digest.size());
  std::copy(d.begin(), d.end(), g.digest.begin());
  r.expect_done();
  return g;
}

const char* to_string(ReportKind k) {
  switch (k) {
    case ReportKind::duplicate: return "duplicate";
    case ReportKind::invalid_ciphertext: return "invalid_ciphertext";
    case ReportKind::malformed_vector: return "malformed_vector";
    case ReportKind::equivocation: return "equivocation";
  }
  return "unknown";
}

Bytes encode(const FaultReport& rep) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(rep.kind)).u32(rep.accused).u32(rep.index_a).u32(rep.index_b);
  w.blob(rep.proof_a).blob(rep.proof_b);
  return std::move(w).take();
}

FaultReport decode_fault_report(ByteView payload) {
  ByteReader r(payload);
  FaultReport rep;
  auto kind = r.u8();
  if (kind < 1 || kind > 4) throw Error(ErrorCode::MalformedMessage, "unknown report kind");
  rep.kind = static_cast<ReportKind>(kind);
  rep.accused = r.u32();
  rep.index_a = r.u32();
  rep.index_b = r.u32();
  rep.proof_a = r.blob_copy(kMaxFramePayload);
  rep.proof_b = r.blob_copy(kMaxFramePayload);
  r.expect_done();
  return rep;
}

Bytes encode(const EvidencePayload& e) {
  ByteWriter w;
  w.blob(e.transcript);
  w.u8(e.inner ? 1 : 0);
  if (e.inner) w.blob(*e.inner);
  w.u8(e.trace ? 1 : 0);
  if (e.trace) {
    w.u32(static_cast<std::uint32_t>(e.trace->layers.size()));
    for (const auto& l : e.trace->layers) w.blob(l);
  }
  return std::move(w).take();
}

EvidencePayload decode_evidence(ByteView payload) {
  ByteReader r(payload);
  EvidencePayload e;
  e.transcript = r.blob_copy();
  if (r.u8()) e.inner = r.blob_copy();
  if (r.u8()) {
    crypto::RandomnessTrace t;
    auto n = r.u32();
    if (n > 1024) throw Error(ErrorCode::MalformedMessage, "trace too long");
    for (std::uint32_t i = 0; i < n; ++i) t.layers.push_back(r.blob_copy(crypto::kRandomnessSize));
    e.trace = std::move(t);
  }
  r.expect_done();
  return e;
}

}  // namespace dissent
