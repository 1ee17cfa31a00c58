#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dissent/tamper_log.hpp"

using namespace dissent;

namespace {

// Independent recomputation of the chain rule.
LogHead oracle_chain(const LogHead& prev, Direction d, std::uint8_t phase, const Bytes& m) {
  Bytes buf(prev.begin(), prev.end());
  buf.push_back(static_cast<std::uint8_t>(d));
  buf.push_back(phase);
  std::uint32_t n = static_cast<std::uint32_t>(m.size());
  for (int s = 24; s >= 0; s -= 8) buf.push_back(static_cast<std::uint8_t>(n >> s));
  buf.insert(buf.end(), m.begin(), m.end());
  return crypto::hash(buf);
}

const Bytes kNonce = to_bytes("round-nonce");

}  // namespace

TEST_CASE("empty head is hash of nonce") {
  TamperLog log(kNonce);
  CHECK(log.head() == crypto::hash(kNonce));
  CHECK(log.entries().empty());
}

TEST_CASE("append follows the chain rule and is deterministic") {
  TamperLog a(kNonce), b(kNonce);
  Bytes m = to_bytes("frame-1");
  auto h = a.append(Direction::sent, 1, m);
  CHECK(h == oracle_chain(crypto::hash(kNonce), Direction::sent, 1, m));
  CHECK(b.append(Direction::sent, 1, m) == h);
  CHECK(a.entries().front().prev_head == a.genesis());
}

TEST_CASE("order and direction matter") {
  TamperLog a(kNonce), b(kNonce), c(kNonce);
  a.append(Direction::sent, 1, to_bytes("x"));
  a.append(Direction::received, 1, to_bytes("y"));
  b.append(Direction::received, 1, to_bytes("y"));
  b.append(Direction::sent, 1, to_bytes("x"));
  CHECK(a.head() != b.head());
  c.append(Direction::received, 1, to_bytes("x"));
  c.append(Direction::received, 1, to_bytes("y"));
  CHECK(a.head() != c.head());
}

TEST_CASE("phase regression throws") {
  TamperLog log(kNonce);
  log.append(Direction::sent, 3, to_bytes("a"));
  log.append(Direction::sent, 3, to_bytes("b"));
  try {
    log.append(Direction::sent, 2, to_bytes("c"));
    FAIL("expected PhaseRegression");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::PhaseRegression);
  }
  CHECK(log.entries().size() == 2);
}

TEST_CASE("verify_transcript detects deletion and tampering") {
  TamperLog log(kNonce);
  for (int i = 0; i < 5; ++i) log.append(i % 2 ? Direction::received : Direction::sent, static_cast<std::uint8_t>(i), Bytes(10, static_cast<std::uint8_t>(i)));
  auto entries = log.entries();
  CHECK(verify_transcript(kNonce, entries, log.head()));
  CHECK_FALSE(verify_transcript(to_bytes("other"), entries, log.head()));

  auto deleted = entries;
  deleted.erase(deleted.begin() + 2);
  CHECK_FALSE(verify_transcript(kNonce, deleted, log.head()));
  // even with links rebuilt the head no longer matches
  auto rebuilt = decode_transcript(kNonce, encode_transcript(deleted));
  CHECK_FALSE(verify_transcript(kNonce, rebuilt, log.head()));

  auto flipped = entries;
  flipped[3].message[4] ^= 0x01;
  CHECK_FALSE(verify_transcript(kNonce, flipped, log.head()));
  CHECK_FALSE(verify_transcript(kNonce, decode_transcript(kNonce, encode_transcript(flipped)), log.head()));
}

TEST_CASE("transcript export round trip") {
  TamperLog log(kNonce);
  log.append(Direction::sent, 1, to_bytes("k"));
  log.append(Direction::received, 2, Bytes{});
  log.append(Direction::received, 4, to_bytes("vvv"));
  auto decoded = decode_transcript(kNonce, encode_transcript(log.entries()));
  CHECK(decoded == log.entries());
  CHECK(verify_transcript(kNonce, decoded, log.head()));
  CHECK_THROWS_AS(decode_transcript(kNonce, Bytes{7, 1}), Error);
}
