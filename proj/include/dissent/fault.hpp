#pragma once

// Adversarial behaviors injected into otherwise honest members. Each hook is
// called at the point where an honest member would produce the value, so a
// faulty member differs from an honest one only in the tampered field.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dissent/common.hpp"
#include "dissent/crypto.hpp"
#include "dissent/messages.hpp"

namespace dissent {

enum class FaultAction : std::uint8_t {
  duplicate_entry,
  replace_entry,
  drop_entry,
  false_flag,
  wrong_digest,
  bad_secondary_key,
  corrupt_slot_bits,
  invalid_accusation,
  equivocate,
  go_silent,
  bad_key,
  duplicate_submission,
};

const char* to_string(FaultAction a);
std::optional<FaultAction> parse_fault_action(std::string_view name);

// The ten catalog actions exercised by the accountability matrix.
const std::vector<FaultAction>& catalog_actions();

enum class InstanceRole : std::uint8_t { shuffle, descriptor, accusation, bulk_data };

struct FaultStrategy {
  MemberId target = 0;
  FaultAction action = FaultAction::go_silent;
  // Phase at which the behavior fires; 0 selects the action's default.
  std::uint8_t trigger_phase = 0;
  // corrupt_slot_bits: sabotage the member's own slot instead of another's.
  bool own_slot = false;
  // Restricts the strategy to one wrapper round (0-based); nullopt = every round.
  std::optional<std::uint32_t> round;

  std::uint8_t effective_phase() const;
  // Whether a correct run must expose the target. Self-sabotage and ignored
  // accusations only cost the culprit its own slot.
  bool exposable() const;
  std::string describe() const;
};

// Parses "action[:phase]@member", with "corrupt_own_slot" as an alias for the
// own-slot variant of corrupt_slot_bits.
FaultStrategy parse_fault(std::string_view spec);

struct FaultPlan {
  std::vector<FaultStrategy> strategies;

  const FaultStrategy* for_member(MemberId id, std::uint32_t round = 0) const;
  std::set<MemberId> culprits(std::uint32_t round = 0) const;
  std::set<MemberId> exposable_culprits(std::uint32_t round = 0) const;
  bool empty() const { return strategies.empty(); }
};

// Shared secret material letting colluders coordinate without messages.
struct CollusionBoard {
  crypto::Seed shared_seed{};
};

class Adversary {
 public:
  Adversary(FaultStrategy strategy, crypto::Rng rng, std::shared_ptr<CollusionBoard> board = nullptr);

  const FaultStrategy& strategy() const { return strategy_; }
  bool is(FaultAction a) const { return strategy_.action == a; }
  bool targets(InstanceRole role) const;

  bool silent(InstanceRole role, std::uint8_t phase) const;

  // Shuffle hooks.
  void tamper_secondary_public(InstanceRole role, Bytes& z);
  std::optional<Bytes> equivocal_secondary_public(InstanceRole role);
  // Colluders replace their datum and inner randomness with shared values.
  bool collusive_inner(InstanceRole role, std::size_t datum_length, Bytes& datum,
                       crypto::RandomnessTrace& inner_trace, std::size_t layers);
  void tamper_shuffle_output(InstanceRole role, std::vector<Bytes>& items);
  std::optional<std::vector<Bytes>> equivocal_shuffle_output(InstanceRole role, const std::vector<Bytes>& items);
  void tamper_go(InstanceRole role, bool& go, crypto::Digest& digest);
  void tamper_released_key(InstanceRole role, Bytes& w);

  // Bulk hooks.
  bool sabotage_own_descriptor() const;
  bool corrupts_other_slots() const;
  void tamper_slot_bits(Bytes& bits);
  bool fabricates_accusation() const { return is(FaultAction::invalid_accusation); }

  crypto::Rng& rng() { return rng_; }

 private:
  FaultStrategy strategy_;
  crypto::Rng rng_;
  std::shared_ptr<CollusionBoard> board_;
};

}  // namespace dissent
