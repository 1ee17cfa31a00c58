#pragma once

// One member's state machine for a single shuffle instance. The member never
// touches the network: every input is a verified frame and every output is an
// Outgoing action the hosting node routes.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "dissent/blame.hpp"
#include "dissent/crypto.hpp"
#include "dissent/fault.hpp"
#include "dissent/frame.hpp"
#include "dissent/messages.hpp"
#include "dissent/tamper_log.hpp"

namespace dissent {

struct Credentials {
  MemberId id = 0;
  crypto::SigningKeyPair signing;
  crypto::EncryptionKeyPair primary;
};

struct Outgoing {
  enum class Route : std::uint8_t { broadcast, unicast };
  Route route = Route::broadcast;
  MemberId to = 0;
  Bytes frame;
  std::uint8_t phase = 0;
  std::uint8_t subphase = 0;
};

struct Awaiting {
  MemberId member = 0;
  ProtocolKey key;
};

// Ground-truth hooks for the simulator's oracle mode. Secrets passed here are
// copies; the member still destroys its own.
class OracleTap {
 public:
  virtual ~OracleTap() = default;
  virtual void on_submission(const Bytes& /*nonce*/, MemberId, const Bytes& /*datum*/, const Bytes& /*inner*/,
                             const Bytes& /*outer*/, const crypto::RandomnessTrace&) {}
  virtual void on_secondary_key(const Bytes& /*nonce*/, MemberId, const Bytes& /*secret*/) {}
  virtual void on_shuffle_step(const Bytes& /*nonce*/, MemberId, const std::vector<Bytes>& /*input*/,
                               const std::vector<Bytes>& /*output*/, const std::vector<std::size_t>& /*perm*/) {}
};

enum class ShuffleStatus : std::uint8_t { idle, running, completed, blamed };

struct ShuffleResult {
  ShuffleStatus status = ShuffleStatus::idle;
  // Completed: the permuted data; nullopt marks an undecryptable slot.
  std::vector<std::optional<Bytes>> output;
  BlameVerdict verdict;
  // Blamed without a provable fault and with unusable evidence from these.
  std::vector<MemberId> incomplete;
};

class ShuffleMember {
 public:
  ShuffleMember(std::shared_ptr<const RoundConfig> config, Bytes instance_nonce, std::size_t datum_length,
                InstanceRole role, const Credentials& creds, crypto::Rng rng, Adversary* adversary = nullptr,
                OracleTap* tap = nullptr);

  // Records the round announcement as the log's first entry.
  void record_announcement(const Bytes& frame, bool sent);
  // Phase 1. Throws MalformedMessage if the datum has the wrong length.
  void start(Bytes datum);
  // Accepts any frame of this instance; bad signatures, foreign nonces and
  // non-members are dropped silently.
  void on_frame(const Frame& frame, const Bytes& raw);

  std::vector<Outgoing> take_outbox();
  ShuffleStatus status() const { return result_.status; }
  const ShuffleResult& result() const { return result_; }
  bool finished() const { return status() == ShuffleStatus::completed || status() == ShuffleStatus::blamed; }
  bool in_blame() const { return in_blame_; }
  // A go_silent adversary that has stopped producing frames.
  bool is_silent() const { return silent(); }

  // Unicast dependencies the member is currently blocked on.
  std::vector<Awaiting> awaiting() const;
  // The member's own frame for (phase, subphase), if already sent.
  std::optional<Bytes> sent_frame(std::uint8_t phase, std::uint8_t subphase) const;

  const TamperLog& log() const { return log_; }
  const Bytes& nonce() const { return nonce_; }
  std::size_t position() const { return pos_; }
  bool released_secondary_key() const { return released_w_; }
  // Test introspection: whether C'_i and the phase-2 trace are still held.
  bool holds_submission_secrets() const { return !inner_.empty() || !trace_.layers.empty(); }

 private:
  using Key = std::tuple<MemberId, std::uint8_t, std::uint8_t>;
  struct Stored {
    Frame frame;
    Bytes raw;
    bool logged = false;
  };

  enum class Step : std::uint8_t { keys, submissions, input, final_vector, go, keys_release, done };

  std::size_t n() const { return config_->size(); }
  MemberId member_at(std::size_t pos) const { return config_->participants[pos].id; }
  const Stored* find(MemberId sender, std::uint8_t phase, std::uint8_t sub) const;
  void log_received(MemberId sender, std::uint8_t phase, std::uint8_t sub);
  void log_sent(const Bytes& raw);
  Bytes make(std::uint8_t phase, std::uint8_t sub, Bytes payload);
  void emit_broadcast(std::uint8_t phase, std::uint8_t sub, Bytes payload);
  void emit_unicast(MemberId to, std::uint8_t phase, std::uint8_t sub, Bytes payload);
  bool silent() const;
  void send(Outgoing::Route route, MemberId to, std::uint8_t phase, std::uint8_t sub, Bytes payload, bool record);

  void progress();
  bool step_keys();
  bool step_submissions();
  bool step_input();
  bool step_final();
  bool step_go();
  bool step_release();
  void run_shuffle_step(const std::vector<Bytes>& input);
  void report(FaultReport rep);
  void enter_blame();
  void try_verdict();
  void wipe_submission_secrets();

  std::shared_ptr<const RoundConfig> config_;
  Bytes nonce_;
  std::size_t L_;
  InstanceRole role_;
  Credentials creds_;
  crypto::Rng rng_;
  Adversary* adv_;
  OracleTap* tap_;
  std::size_t pos_ = 0;

  TamperLog log_;
  std::uint8_t phase_ = 0;
  Step step_ = Step::keys;
  std::map<Key, Stored> store_;
  std::map<std::pair<std::uint8_t, std::uint8_t>, Bytes> sent_;
  std::vector<Outgoing> outbox_;

  Bytes datum_;
  crypto::EncryptionKeyPair secondary_;
  std::vector<Bytes> secondary_publics_;
  Bytes inner_;
  crypto::RandomnessTrace trace_;
  std::vector<Bytes> final_;
  bool released_w_ = false;
  bool in_blame_ = false;
  bool reported_ = false;
  ShuffleResult result_;
};

}  // namespace dissent
