#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "dissent/common.hpp"
#include "dissent/frame.hpp"
#include "dissent/messages.hpp"

namespace dissent {

enum class FaultCategory : std::uint8_t {
  bad_key,
  bad_submission,
  bad_shuffle_step,
  false_nogo,
  wrong_hash,
  bad_secondary_key,
  equivocation,
  corrupt_slot,
};

const char* to_string(FaultCategory c);

struct Finding {
  MemberId member = 0;
  FaultCategory category = FaultCategory::bad_key;
  std::string detail;
  // Signed frames that demonstrate the fault.
  std::vector<Bytes> proof;
};

struct BlameVerdict {
  std::set<MemberId> exposed;
  std::vector<Finding> findings;

  bool empty() const { return exposed.empty(); }
  std::set<FaultCategory> categories_of(MemberId m) const;
  void add(Finding f);
  void merge(const BlameVerdict& other);
};

class IncompleteEvidence : public Error {
 public:
  explicit IncompleteEvidence(std::vector<MemberId> missing);
  const std::vector<MemberId>& missing() const { return missing_; }

 private:
  std::vector<MemberId> missing_;
};

// Replays every transcript and recorded randomness in the evidence frames of
// one shuffle instance and returns every provable fault. Frames are the
// per-member evidence frames (phase 5, blame subphase); at most one per
// member is used. Throws IncompleteEvidence when nothing can be proven and
// some member's evidence is missing or unusable.
BlameVerdict verify_blame(const RoundConfig& config, ByteView instance_nonce, std::size_t datum_length,
                          const std::vector<Frame>& evidence_frames);

// Expected item width at the input of shuffle step `position` (0-based).
std::size_t shuffle_item_size(std::size_t datum_length, std::size_t n, std::size_t position);

}  // namespace dissent
