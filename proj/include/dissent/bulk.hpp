#pragma once

// DC-net bulk transfer scheduled by a descriptor shuffle, with an accusation
// shuffle when slots come out corrupted.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <vector>

#include "dissent/blame.hpp"
#include "dissent/crypto.hpp"
#include "dissent/fault.hpp"
#include "dissent/messages.hpp"
#include "dissent/shuffle.hpp"
#include "dissent/tamper_log.hpp"

namespace dissent {

inline constexpr std::size_t kSlotFraming = 4 + 8;
inline constexpr std::uint64_t kEmptySlot = 0xFFFFFFFFFFFFFFFFull;
inline constexpr std::size_t kMaxSlotLength = std::size_t{1} << 24;
inline constexpr std::size_t kEncryptedSeedSize = crypto::kSeedSize + crypto::kCiphertextOverhead;
inline constexpr std::size_t kAccusationSize = 4 + kEncryptedSeedSize + crypto::kSeedSize + crypto::kRandomnessSize;

struct MessageDescriptor {
  std::uint64_t length = 0;
  crypto::Digest message_hash{};
  std::vector<crypto::Digest> stream_hashes;  // H_i1..H_iN
  std::vector<Bytes> encrypted_seeds;         // S_i1..S_iN
  bool operator==(const MessageDescriptor&) const = default;
};

std::size_t descriptor_size(std::size_t n);
Bytes encode(const MessageDescriptor& d);
// Throws MalformedMessage unless the encoding has exactly descriptor_size(n) bytes.
MessageDescriptor decode_descriptor(ByteView bytes, std::size_t n);

struct DescriptorSecrets {
  Bytes message;
  std::vector<crypto::Seed> seeds;           // s_i1..s_iN (s_ii is junk)
  std::vector<Bytes> seed_randomness;        // R_i1..R_iN
  Bytes own_ciphertext;                      // C_ii
  // Self-sabotage bookkeeping (faulty authors only).
  std::optional<std::size_t> sabotaged_peer;
  Bytes sabotage_randomness;
};

struct GeneratedDescriptor {
  MessageDescriptor descriptor;
  DescriptorSecrets secrets;
};

// sabotage_peer makes S_{i,peer} unusable by the peer so its slot contribution
// comes out Empty.
GeneratedDescriptor generate_descriptor(const RoundConfig& config, std::size_t self_pos, ByteView message,
                                        crypto::Rng& rng, std::optional<std::size_t> sabotage_peer = {});

struct SlotCiphertext {
  std::uint32_t slot = 0;
  std::optional<Bytes> bits;  // nullopt = Empty
  bool operator==(const SlotCiphertext&) const = default;
};

Bytes encode_slots(const std::vector<SlotCiphertext>& slots);
// Exactly n entries with slot indices 0..n-1.
std::vector<SlotCiphertext> decode_slots(ByteView payload, std::size_t n);

// Member at self_pos's contribution to a slot whose descriptor it did not
// write: the expanded seed, or Empty when the seed or its hash check fails.
std::optional<Bytes> peer_contribution(const MessageDescriptor& d, std::size_t self_pos, ByteView primary_secret);

struct Recovery {
  std::map<std::uint32_t, Bytes> recovered;
  std::set<std::uint32_t> corrupted;
};

// descriptors[t] is nullopt for a slot whose descriptor did not parse;
// contributions[j] is nullopt for a member whose slot vector did not parse.
Recovery recover(const std::vector<std::optional<MessageDescriptor>>& descriptors,
                 const std::vector<std::optional<std::vector<SlotCiphertext>>>& contributions);

// Members whose contribution to slot t deviates from the descriptor
// (Empty, wrong width or stream-hash mismatch).
std::vector<std::size_t> deviating_members(const MessageDescriptor& d, std::uint32_t t,
                                           const std::vector<std::optional<std::vector<SlotCiphertext>>>& contributions);

struct Accusation {
  MemberId accused = 0;
  Bytes encrypted_seed;  // S_ij
  crypto::Seed seed{};   // s_ij
  Bytes randomness;      // R_ij
};

Bytes encode(const Accusation& a);
Bytes accusation_filler();
// nullopt for the all-zero filler; throws MalformedMessage on a bad width.
std::optional<Accusation> decode_accusation(ByteView bytes);

// Slot index the accusation proves was corrupted by a.accused, or nullopt if
// the accusation is invalid.
std::optional<std::uint32_t> verify_accusation(const RoundConfig& config,
                                               const std::vector<std::optional<MessageDescriptor>>& descriptors,
                                               const std::vector<std::optional<std::vector<SlotCiphertext>>>& contributions,
                                               const Accusation& a);

Bytes descriptor_nonce(ByteView round_nonce);
Bytes accusation_nonce(ByteView round_nonce);

enum class BulkStatus : std::uint8_t { idle, running, completed, blamed };

struct BulkResult {
  BulkStatus status = BulkStatus::idle;
  std::map<std::uint32_t, Bytes> recovered;
  std::set<std::uint32_t> corrupted;
  std::optional<std::uint32_t> own_slot;
  BlameVerdict verdict;
  std::size_t valid_accusations = 0;
  std::size_t rejected_accusations = 0;
  bool accusation_round = false;
  std::vector<MemberId> incomplete;
};

class BulkMember {
 public:
  BulkMember(std::shared_ptr<const RoundConfig> config, const Credentials& creds, crypto::Rng rng,
             Adversary* adversary = nullptr, OracleTap* tap = nullptr);

  void record_announcement(const Bytes& frame, bool sent);
  void start(Bytes message);
  void on_frame(const Frame& frame, const Bytes& raw);

  std::vector<Outgoing> take_outbox();
  const BulkResult& result() const { return result_; }
  bool finished() const { return result_.status == BulkStatus::completed || result_.status == BulkStatus::blamed; }
  std::vector<Awaiting> awaiting() const;
  std::optional<Bytes> sent_frame(const ProtocolKey& key) const;
  bool is_silent() const;

  const ShuffleMember& descriptor_shuffle() const { return *descriptors_; }
  const ShuffleMember* accusation_shuffle() const { return accusations_.get(); }
  const TamperLog& data_log() const { return log_; }
  const Bytes& round_nonce() const { return config_->nonce; }

 private:
  void pump();
  void begin_data_phase();
  void try_recover();
  void finish_accusations();

  std::shared_ptr<const RoundConfig> config_;
  Credentials creds_;
  crypto::Rng rng_;
  Adversary* adv_;
  OracleTap* tap_;
  std::size_t pos_ = 0;
  Bytes nonce_d_;
  Bytes nonce_a_;
  TamperLog log_;

  GeneratedDescriptor own_;
  std::unique_ptr<ShuffleMember> descriptors_;
  std::unique_ptr<ShuffleMember> accusations_;
  std::vector<std::pair<Frame, Bytes>> early_accusation_frames_;

  bool data_started_ = false;
  std::vector<std::optional<MessageDescriptor>> slots_;
  std::map<MemberId, std::pair<Frame, Bytes>> data_frames_;
  std::optional<Bytes> data_sent_;
  std::vector<std::optional<std::vector<SlotCiphertext>>> contributions_;
  std::vector<Outgoing> outbox_;
  BulkResult result_;
};

}  // namespace dissent
