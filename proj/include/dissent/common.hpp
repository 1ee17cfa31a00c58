#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dissent {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;
using MemberId = std::uint32_t;

enum class ErrorCode {
  PlaintextTooLong,
  BadRandomnessWidth,
  BadKey,
  DecryptionFailed,
  PhaseRegression,
  MalformedFrame,
  MalformedMessage,
  QuorumUnmet,
  BudgetExhausted,
  ConnectionLost,
  IncompleteEvidence,
  Config,
  Usage,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline Bytes to_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }

std::string to_hex(ByteView data);
Bytes from_hex(std::string_view hex);

// Big-endian serializer used by every wire and canonical encoding.
class ByteWriter {
 public:
  ByteWriter& u8(std::uint8_t v);
  ByteWriter& u32(std::uint32_t v);
  ByteWriter& u64(std::uint64_t v);
  // Raw bytes, no length prefix.
  ByteWriter& raw(ByteView data);
  // 4-byte big-endian length followed by the bytes.
  ByteWriter& blob(ByteView data);

  const Bytes& bytes() const& { return out_; }
  Bytes take() && { return std::move(out_); }
  std::size_t size() const { return out_.size(); }

 private:
  Bytes out_;
};

// Bounds-checked reader. Every failure throws Error with the code given at
// construction so frame and message decoders report distinct errors.
class ByteReader {
 public:
  explicit ByteReader(ByteView data, ErrorCode on_error = ErrorCode::MalformedMessage)
      : data_(data), on_error_(on_error) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  ByteView raw(std::size_t n);
  ByteView blob(std::size_t max_len = SIZE_MAX);
  Bytes blob_copy(std::size_t max_len = SIZE_MAX) {
    auto v = blob(max_len);
    return Bytes(v.begin(), v.end());
  }

  std::size_t remaining() const { return data_.size() - pos_; }
  bool done() const { return pos_ == data_.size(); }
  // Throws unless every byte was consumed.
  void expect_done() const;

 private:
  [[noreturn]] void fail(const char* what) const;

  ByteView data_;
  std::size_t pos_ = 0;
  ErrorCode on_error_;
};

}  // namespace dissent
