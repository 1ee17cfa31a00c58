#include "dissent/frame.hpp"

#include <cstring>

namespace dissent {

Bytes Frame::signed_portion() const {
  ByteWriter w;
  w.u8(version).blob(nonce).u8(phase).u8(subphase).u32(sender).raw(log_head).blob(payload);
  return std::move(w).take();
}

Bytes Frame::encode() const {
  ByteWriter w;
  w.raw(signed_portion()).blob(signature);
  return std::move(w).take();
}

Frame Frame::decode(ByteView bytes) {
  ByteReader r(bytes, ErrorCode::MalformedFrame);
  Frame f;
  f.version = r.u8();
  if (f.version != kWireVersion) throw Error(ErrorCode::MalformedFrame, "unsupported wire version");
  f.nonce = r.blob_copy(kMaxNonceSize);
  f.phase = r.u8();
  f.subphase = r.u8();
  f.sender = r.u32();
  auto head = r.raw(f.log_head.size());
  std::memcpy(f.log_head.data(), head.data(), head.size());
  f.payload = r.blob_copy(kMaxFramePayload);
  f.signature = r.blob_copy(crypto::kSignatureSize);
  if (f.signature.size() != crypto::kSignatureSize) throw Error(ErrorCode::MalformedFrame, "bad signature width");
  r.expect_done();
  return f;
}

bool Frame::verify(ByteView signing_public) const {
  return crypto::verify(signing_public, signed_portion(), signature);
}

Frame make_frame(ByteView nonce, std::uint8_t phase, std::uint8_t subphase, MemberId sender,
                 const LogHead& head, Bytes payload, ByteView signing_secret) {
  Frame f;
  f.nonce.assign(nonce.begin(), nonce.end());
  f.phase = phase;
  f.subphase = subphase;
  f.sender = sender;
  f.log_head = head;
  f.payload = std::move(payload);
  f.signature = crypto::sign(signing_secret, f.signed_portion());
  return f;
}

Bytes wire_encode(ByteView frame_bytes) {
  ByteWriter w;
  w.blob(frame_bytes);
  return std::move(w).take();
}

void WireDecoder::feed(ByteView data) {
  if (pos_ > 0 && pos_ == buf_.size()) {
    buf_.clear();
    pos_ = 0;
  }
  buf_.insert(buf_.end(), data.begin(), data.end());
}

std::optional<Bytes> WireDecoder::next() {
  if (buf_.size() - pos_ < 4) return std::nullopt;
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len = (len << 8) | buf_[pos_ + i];
  if (len > kMaxFramePayload + 1024) throw Error(ErrorCode::MalformedFrame, "frame length prefix too large");
  if (buf_.size() - pos_ - 4 < len) return std::nullopt;
  Bytes out(buf_.begin() + static_cast<std::ptrdiff_t>(pos_ + 4),
            buf_.begin() + static_cast<std::ptrdiff_t>(pos_ + 4 + len));
  pos_ += 4 + len;
  if (pos_ > (1u << 20) && pos_ * 2 > buf_.size()) {
    buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(pos_));
    pos_ = 0;
  }
  return out;
}

Bytes encode_bundle(const std::vector<Bytes>& frames) {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(frames.size()));
  for (const auto& f : frames) w.blob(f);
  return std::move(w).take();
}

std::vector<Bytes> decode_bundle(ByteView payload) {
  ByteReader r(payload, ErrorCode::MalformedFrame);
  auto n = r.u32();
  if (n > 4096) throw Error(ErrorCode::MalformedFrame, "bundle too large");
  std::vector<Bytes> out;
  out.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) out.push_back(r.blob_copy(kMaxFramePayload));
  r.expect_done();
  return out;
}

namespace {

void put_key(ByteWriter& w, const ProtocolKey& k) { w.blob(k.nonce).u8(k.phase).u8(k.subphase); }

ProtocolKey get_key(ByteReader& r) {
  ProtocolKey k;
  k.nonce = r.blob_copy(kMaxNonceSize);
  k.phase = r.u8();
  k.subphase = r.u8();
  return k;
}

}  // namespace

Bytes encode(const Suspect& s) {
  ByteWriter w;
  w.u32(s.suspect);
  put_key(w, s.key);
  return std::move(w).take();
}

Bytes encode(const Demand& d) {
  ByteWriter w;
  w.u32(d.requester);
  put_key(w, d.key);
  return std::move(w).take();
}

Bytes encode(const DemandReply& r) {
  ByteWriter w;
  put_key(w, r.key);
  w.u8(r.frame ? 1 : 0);
  if (r.frame) w.blob(*r.frame);
  else {
    w.u32(r.waiting_on);
    put_key(w, r.waiting_key);
  }
  return std::move(w).take();
}

Bytes encode(const Abort& a) {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(a.failed.size()));
  for (auto id : a.failed) w.u32(id);
  return std::move(w).take();
}

Suspect decode_suspect(ByteView payload) {
  ByteReader r(payload);
  Suspect s;
  s.suspect = r.u32();
  s.key = get_key(r);
  r.expect_done();
  return s;
}

Demand decode_demand(ByteView payload) {
  ByteReader r(payload);
  Demand d;
  d.requester = r.u32();
  d.key = get_key(r);
  r.expect_done();
  return d;
}

DemandReply decode_demand_reply(ByteView payload) {
  ByteReader r(payload);
  DemandReply d;
  d.key = get_key(r);
  if (r.u8() != 0) d.frame = r.blob_copy(kMaxFramePayload);
  else {
    d.waiting_on = r.u32();
    d.waiting_key = get_key(r);
  }
  r.expect_done();
  return d;
}

Abort decode_abort(ByteView payload) {
  ByteReader r(payload);
  Abort a;
  auto n = r.u32();
  if (n > 4096) throw Error(ErrorCode::MalformedMessage, "abort list too long");
  for (std::uint32_t i = 0; i < n; ++i) a.failed.push_back(r.u32());
  r.expect_done();
  return a;
}

}  // namespace dissent
