#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "dissent/common.hpp"

namespace dissent {

enum class SuspicionStatus : std::uint8_t { clear, suspected, resolved, failed };

const char* to_string(SuspicionStatus s);

struct SuspicionEntry {
  SuspicionStatus status = SuspicionStatus::clear;
  std::uint64_t since_us = 0;
};

// (suspector, suspect) -> state. A suspect that produces the demanded frame
// resolves every suspicion held against it.
class SuspicionState {
 public:
  explicit SuspicionState(std::uint64_t timeout_us = 10'000'000) : timeout_us_(timeout_us) {}

  void suspect(MemberId suspector, MemberId suspect, std::uint64_t now_us);
  void resolve(MemberId suspect);
  void resolve(MemberId suspector, MemberId suspect);
  void fail(MemberId suspect);

  SuspicionStatus status(MemberId suspector, MemberId suspect) const;
  // Suspected for at least the timeout without resolution.
  bool expired(MemberId suspector, MemberId suspect, std::uint64_t now_us) const;
  std::vector<MemberId> failed() const;
  std::uint64_t timeout_us() const { return timeout_us_; }
  const std::map<std::pair<MemberId, MemberId>, SuspicionEntry>& entries() const { return entries_; }

 private:
  std::uint64_t timeout_us_;
  std::map<std::pair<MemberId, MemberId>, SuspicionEntry> entries_;
};

}  // namespace dissent
