#include "dissent/common.hpp"

namespace dissent {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::PlaintextTooLong: return "PlaintextTooLong";
    case ErrorCode::BadRandomnessWidth: return "BadRandomnessWidth";
    case ErrorCode::BadKey: return "BadKey";
    case ErrorCode::DecryptionFailed: return "DecryptionFailed";
    case ErrorCode::PhaseRegression: return "PhaseRegression";
    case ErrorCode::MalformedFrame: return "MalformedFrame";
    case ErrorCode::MalformedMessage: return "MalformedMessage";
    case ErrorCode::QuorumUnmet: return "QuorumUnmet";
    case ErrorCode::BudgetExhausted: return "BudgetExhausted";
    case ErrorCode::ConnectionLost: return "ConnectionLost";
    case ErrorCode::IncompleteEvidence: return "IncompleteEvidence";
    case ErrorCode::Config: return "Config";
    case ErrorCode::Usage: return "Usage";
  }
  return "Unknown";
}

std::string to_hex(ByteView data) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(data.size() * 2);
  for (auto b : data) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0x0f]);
  }
  return out;
}

namespace {
int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}
}  // namespace

Bytes from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw Error(ErrorCode::Config, "hex string has odd length");
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = hex_value(hex[2 * i]);
    int lo = hex_value(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw Error(ErrorCode::Config, "invalid hex digit");
    out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return out;
}

ByteWriter& ByteWriter::u8(std::uint8_t v) {
  out_.push_back(v);
  return *this;
}

ByteWriter& ByteWriter::u32(std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out_.push_back(static_cast<std::uint8_t>(v >> shift));
  return *this;
}

ByteWriter& ByteWriter::u64(std::uint64_t v) {
  for (int shift = 56; shift >= 0; shift -= 8) out_.push_back(static_cast<std::uint8_t>(v >> shift));
  return *this;
}

ByteWriter& ByteWriter::raw(ByteView data) {
  out_.insert(out_.end(), data.begin(), data.end());
  return *this;
}

ByteWriter& ByteWriter::blob(ByteView data) {
  if (data.size() > UINT32_MAX) throw Error(ErrorCode::MalformedMessage, "blob exceeds 4 GiB");
  u32(static_cast<std::uint32_t>(data.size()));
  return raw(data);
}

void ByteReader::fail(const char* what) const { throw Error(on_error_, what); }

std::uint8_t ByteReader::u8() {
  if (remaining() < 1) fail("truncated u8");
  return data_[pos_++];
}

std::uint32_t ByteReader::u32() {
  if (remaining() < 4) fail("truncated u32");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v = (v << 8) | data_[pos_++];
  return v;
}

std::uint64_t ByteReader::u64() {
  if (remaining() < 8) fail("truncated u64");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | data_[pos_++];
  return v;
}

ByteView ByteReader::raw(std::size_t n) {
  if (remaining() < n) fail("truncated field");
  auto v = data_.subspan(pos_, n);
  pos_ += n;
  return v;
}

ByteView ByteReader::blob(std::size_t max_len) {
  auto n = u32();
  if (n > max_len) fail("length field exceeds bound");
  return raw(n);
}

void ByteReader::expect_done() const {
  if (!done()) fail("trailing bytes");
}

}  // namespace dissent
