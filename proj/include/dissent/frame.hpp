#pragma once

// Signed wire frame shared by every protocol message, plus the leader's
// relay bundles and the suspicion control messages that ride in frames.

#include <cstdint>
#include <optional>
#include <vector>

#include "dissent/common.hpp"
#include "dissent/crypto.hpp"
#include "dissent/tamper_log.hpp"

namespace dissent {

inline constexpr std::uint8_t kWireVersion = 0x01;
inline constexpr std::size_t kMaxNonceSize = 64;
inline constexpr std::size_t kMaxFramePayload = std::size_t{1} << 26;

namespace phase {
inline constexpr std::uint8_t announce = 0;
inline constexpr std::uint8_t keys = 1;
inline constexpr std::uint8_t submit = 2;
inline constexpr std::uint8_t anonymize = 3;  // bulk protocol: data transmission
inline constexpr std::uint8_t verify = 4;
inline constexpr std::uint8_t finish = 5;
inline constexpr std::uint8_t control = 0xE0;
inline constexpr std::uint8_t bundle = 0xF0;
}  // namespace phase

namespace subphase {
inline constexpr std::uint8_t none = 0x00;
inline constexpr std::uint8_t decryption = 0x0A;
inline constexpr std::uint8_t blame = 0x0B;
inline constexpr std::uint8_t fault_report = 0x0C;
// control subphases
inline constexpr std::uint8_t suspect = 0x01;
inline constexpr std::uint8_t demand = 0x02;
inline constexpr std::uint8_t demand_reply = 0x03;
inline constexpr std::uint8_t forward = 0x04;
inline constexpr std::uint8_t abort = 0x05;
inline constexpr std::uint8_t hello = 0x06;
inline constexpr std::uint8_t end_session = 0x07;
}  // namespace subphase

struct Frame {
  std::uint8_t version = kWireVersion;
  Bytes nonce;
  std::uint8_t phase = 0;
  std::uint8_t subphase = 0;
  MemberId sender = 0;
  LogHead log_head{};
  Bytes payload;
  Bytes signature;

  // Encoding of every field before the signature.
  Bytes signed_portion() const;
  Bytes encode() const;
  // Throws Error(MalformedFrame) on truncation, bad version or bad bounds.
  static Frame decode(ByteView bytes);

  bool verify(ByteView signing_public) const;
  bool is_protocol() const { return phase <= phase::finish; }

  bool operator==(const Frame&) const = default;
};

Frame make_frame(ByteView nonce, std::uint8_t phase, std::uint8_t subphase, MemberId sender,
                 const LogHead& head, Bytes payload, ByteView signing_secret);

// 4-byte big-endian length prefix followed by the frame bytes.
Bytes wire_encode(ByteView frame_bytes);

// Incremental splitter for a byte stream of length-prefixed frames.
class WireDecoder {
 public:
  void feed(ByteView data);
  // Next complete frame's bytes, if buffered. Throws MalformedFrame on an
  // oversized length prefix.
  std::optional<Bytes> next();

 private:
  Bytes buf_;
  std::size_t pos_ = 0;
};

// Relay bundle payload: count followed by length-prefixed frames.
Bytes encode_bundle(const std::vector<Bytes>& frames);
std::vector<Bytes> decode_bundle(ByteView payload);

// Suspicion and liveness control payloads.
struct ProtocolKey {
  Bytes nonce;
  std::uint8_t phase = 0;
  std::uint8_t subphase = 0;
  auto operator<=>(const ProtocolKey&) const = default;
};

struct Suspect {
  MemberId suspect = 0;
  ProtocolKey key;
};

struct Demand {
  MemberId requester = 0;
  ProtocolKey key;
};

// Either the demanded frame, or the member the demanded party is itself
// blocked on.
struct DemandReply {
  ProtocolKey key;
  std::optional<Bytes> frame;
  MemberId waiting_on = 0;
  ProtocolKey waiting_key;
};

struct Abort {
  std::vector<MemberId> failed;
};

Bytes encode(const Suspect& s);
Bytes encode(const Demand& d);
Bytes encode(const DemandReply& r);
Bytes encode(const Abort& a);
Suspect decode_suspect(ByteView payload);
Demand decode_demand(ByteView payload);
DemandReply decode_demand_reply(ByteView payload);
Abort decode_abort(ByteView payload);

}  // namespace dissent
