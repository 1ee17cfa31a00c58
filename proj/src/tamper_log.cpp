#include "dissent/tamper_log.hpp"

namespace dissent {

LogHead genesis_head(ByteView session_nonce) { return crypto::hash(session_nonce); }

LogHead chain_head(const LogHead& prev, Direction direction, std::uint8_t phase, ByteView message) {
  ByteWriter w;
  w.raw(prev).u8(static_cast<std::uint8_t>(direction)).u8(phase).blob(message);
  return crypto::hash(w.bytes());
}

TamperLog::TamperLog(ByteView session_nonce)
    : genesis_(genesis_head(session_nonce)), head_(genesis_) {}

LogHead TamperLog::append(Direction direction, std::uint8_t phase, Bytes message) {
  if (!entries_.empty() && phase < entries_.back().phase)
    throw Error(ErrorCode::PhaseRegression, "log entry phase decreased");
  LogEntry e{direction, phase, std::move(message), head_};
  head_ = chain_head(head_, e.direction, e.phase, e.message);
  entries_.push_back(std::move(e));
  return head_;
}

bool verify_transcript(ByteView session_nonce, const std::vector<LogEntry>& entries,
                       const LogHead& claimed_head) {
  LogHead cur = genesis_head(session_nonce);
  std::uint8_t last_phase = 0;
  for (const auto& e : entries) {
    if (e.prev_head != cur || e.phase < last_phase) return false;
    cur = chain_head(cur, e.direction, e.phase, e.message);
    last_phase = e.phase;
  }
  return cur == claimed_head;
}

Bytes encode_transcript(const std::vector<LogEntry>& entries) {
  ByteWriter w;
  for (const auto& e : entries) w.u8(static_cast<std::uint8_t>(e.direction)).u8(e.phase).blob(e.message);
  return std::move(w).take();
}

std::vector<LogEntry> decode_transcript(ByteView session_nonce, ByteView encoded) {
  std::vector<LogEntry> out;
  ByteReader r(encoded);
  LogHead cur = genesis_head(session_nonce);
  while (!r.done()) {
    LogEntry e;
    auto dir = r.u8();
    if (dir > 1) throw Error(ErrorCode::MalformedMessage, "bad transcript direction");
    e.direction = static_cast<Direction>(dir);
    e.phase = r.u8();
    e.message = r.blob_copy();
    e.prev_head = cur;
    cur = chain_head(cur, e.direction, e.phase, e.message);
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace dissent
