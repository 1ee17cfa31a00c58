#pragma once

// Canonical payload encodings for the protocol frames. Everything here is
// hashed or signed somewhere, so field order and widths are fixed.

#include <cstdint>
#include <optional>
#include <vector>

#include "dissent/common.hpp"
#include "dissent/crypto.hpp"

namespace dissent {

enum class ProtocolKind : std::uint8_t { shuffle = 1, bulk = 2 };

struct Participant {
  MemberId id = 0;
  Bytes primary_public;  // y_i
  Bytes signing_public;  // v_i
  bool operator==(const Participant&) const = default;
};

struct RoundConfig {
  Bytes nonce;
  ProtocolKind protocol = ProtocolKind::shuffle;
  // Fixed datum length for a standalone shuffle; unused for bulk rounds.
  std::uint64_t datum_length = 0;
  std::uint32_t quorum = 1;
  MemberId leader = 0;
  std::vector<Participant> participants;

  std::size_t size() const { return participants.size(); }
  // Position 0..N-1 of a member, or nullopt if absent.
  std::optional<std::size_t> position(MemberId id) const;
  const Participant& at(MemberId id) const;
  const Participant* find(MemberId id) const;
  std::vector<Bytes> primary_publics() const;

  bool operator==(const RoundConfig&) const = default;
};

Bytes encode(const RoundConfig& c);
RoundConfig decode_round_config(ByteView payload);

// Ordered ciphertext vector: count then length-prefixed items.
Bytes encode_vector(const std::vector<Bytes>& items);
std::vector<Bytes> decode_vector(ByteView payload, std::size_t max_items = 4096);

struct GoNoGo {
  bool go = false;
  crypto::Digest digest{};
};

Bytes encode(const GoNoGo& g);
GoNoGo decode_go(ByteView payload);

enum class ReportKind : std::uint8_t {
  duplicate = 1,           // items a and b of the input are byte-equal
  invalid_ciphertext = 2,  // item a failed to decrypt
  malformed_vector = 3,    // wrong count or item width
  equivocation = 4,        // proof_a and proof_b are conflicting frames
};

const char* to_string(ReportKind k);

struct FaultReport {
  ReportKind kind = ReportKind::duplicate;
  MemberId accused = 0;
  std::uint32_t index_a = 0;
  std::uint32_t index_b = 0;
  Bytes proof_a;
  Bytes proof_b;
};

Bytes encode(const FaultReport& r);
FaultReport decode_fault_report(ByteView payload);

struct EvidencePayload {
  Bytes transcript;
  std::optional<Bytes> inner;               // C'_i, absent once destroyed
  std::optional<crypto::RandomnessTrace> trace;
};

Bytes encode(const EvidencePayload& e);
EvidencePayload decode_evidence(ByteView payload);

}  // namespace dissent
