#pragma once

#include <cstdint>
#include <vector>

#include "dissent/common.hpp"
#include "dissent/crypto.hpp"

namespace dissent {

using LogHead = crypto::Digest;

enum class Direction : std::uint8_t { sent = 0, received = 1 };

struct LogEntry {
  Direction direction = Direction::sent;
  // Phase of the logging member when the entry was appended.
  std::uint8_t phase = 0;
  // Serialized, signed frame exactly as sent or received.
  Bytes message;
  LogHead prev_head{};

  bool operator==(const LogEntry&) const = default;
};

// Head of an empty log: hash of the session nonce.
LogHead genesis_head(ByteView session_nonce);
// hash(prev_head || direction || phase || len || message)
LogHead chain_head(const LogHead& prev, Direction direction, std::uint8_t phase, ByteView message);

// Append-only, single-writer message log whose head commits to every entry.
class TamperLog {
 public:
  explicit TamperLog(ByteView session_nonce);

  // Throws Error(PhaseRegression) if phase is below the last entry's phase.
  LogHead append(Direction direction, std::uint8_t phase, Bytes message);

  const LogHead& head() const { return head_; }
  const LogHead& genesis() const { return genesis_; }
  const std::vector<LogEntry>& entries() const { return entries_; }

 private:
  LogHead genesis_;
  LogHead head_;
  std::vector<LogEntry> entries_;
};

// True iff the entries chain from the nonce's genesis head to claimed_head,
// with each stored prev_head consistent and phases nondecreasing.
bool verify_transcript(ByteView session_nonce, const std::vector<LogEntry>& entries,
                       const LogHead& claimed_head);

// Export format: per entry, direction byte, phase byte, 4-byte big-endian
// length and the frame bytes, concatenated in log order.
Bytes encode_transcript(const std::vector<LogEntry>& entries);
// Rebuilds prev_head links from the nonce's genesis.
std::vector<LogEntry> decode_transcript(ByteView session_nonce, ByteView encoded);

}  // namespace dissent
