#pragma once

// Cryptographic primitives consumed by the protocol modules: Ed25519
// signatures, a replayable hybrid public-key encryption (X25519 + ChaCha20-
// Poly1305), SHA-256 and a ChaCha20 pseudo-random bit generator.
//
// Every randomized operation takes an explicit Rng so simulated runs are a
// pure function of their seeds.

#include <array>
#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "dissent/common.hpp"

namespace dissent::crypto {

inline constexpr std::size_t kDigestSize = 32;
inline constexpr std::size_t kSeedSize = 32;
inline constexpr std::size_t kPublicKeySize = 32;
inline constexpr std::size_t kSecretKeySize = 32;
inline constexpr std::size_t kSigningSecretSize = 64;
inline constexpr std::size_t kSignatureSize = 64;
// Randomness recorded per encryption: the ephemeral X25519 scalar.
inline constexpr std::size_t kRandomnessSize = 32;
// Ciphertext = ephemeral public key || AEAD body || tag.
inline constexpr std::size_t kCiphertextOverhead = 32 + 16;
inline constexpr std::size_t kMaxPlaintextSize = std::size_t{1} << 24;

using Digest = std::array<std::uint8_t, kDigestSize>;
using Seed = std::array<std::uint8_t, kSeedSize>;

// Deterministic entropy source (ChaCha20 keystream under a 32-byte seed).
class Rng {
 public:
  explicit Rng(const Seed& seed);
  static Rng from_os();
  // Seed derived by hashing an integer; convenient for tests and the simulator.
  static Rng from_u64(std::uint64_t seed);

  void fill(std::span<std::uint8_t> out);
  Bytes bytes(std::size_t n);
  Seed seed_bytes();
  std::uint64_t next_u64();
  // Unbiased integer in [0, bound). bound must be nonzero.
  std::uint64_t uniform(std::uint64_t bound);

  // Independent child stream, keyed by a label, that does not consume this
  // stream.
  Rng fork(std::string_view label) const;

 private:
  void refill();

  Seed key_;
  std::uint64_t block_ = 0;
  std::array<std::uint8_t, 64> buf_{};
  std::size_t buf_pos_ = 64;
};

struct SigningKeyPair {
  Bytes secret;      // 64 bytes (libsodium expanded form)
  Bytes public_key;  // 32 bytes
};

enum class KeyRole : std::uint8_t { primary = 0, secondary = 1 };

struct EncryptionKeyPair {
  Bytes secret;      // 32 bytes
  Bytes public_key;  // 32 bytes
  KeyRole role = KeyRole::primary;
};

SigningKeyPair keygen_signing(Rng& rng);
Bytes sign(ByteView secret, ByteView message);
bool verify(ByteView public_key, ByteView message, ByteView signature);

EncryptionKeyPair keygen_encryption(Rng& rng, KeyRole role);
// True iff public_key is the X25519 image of secret.
bool matches(ByteView secret, ByteView public_key);
// Rejects wrong widths and small-order points.
bool is_valid_public_key(ByteView public_key);

struct Encryption {
  Bytes ciphertext;
  Bytes randomness;
};

std::size_t ciphertext_size(std::size_t plaintext_size);

Encryption encrypt(ByteView public_key, ByteView plaintext, Rng& rng);
// Deterministic replay of encrypt given its recorded randomness.
Bytes encrypt_with(ByteView public_key, ByteView plaintext, ByteView randomness);
// Throws Error(DecryptionFailed) for any ciphertext not produced under the
// matching public key.
Bytes decrypt(ByteView secret, ByteView ciphertext);

// One randomness entry per layer; layers[k] belongs to the key peeled by
// member k+1.
struct RandomnessTrace {
  std::vector<Bytes> layers;
  bool operator==(const RandomnessTrace&) const = default;
};

struct Onion {
  Bytes ciphertext;
  RandomnessTrace trace;
};

// Layered encryption. publics[0] is the outermost layer, peeled first;
// publics.back() is applied first (innermost).
Onion onion_encrypt(std::span<const Bytes> publics, ByteView plaintext, Rng& rng);
Bytes onion_encrypt_with(std::span<const Bytes> publics, ByteView plaintext,
                         const RandomnessTrace& trace);
// All intermediate values of a replayed onion: result[0] is the full
// ciphertext, result[k] the value after k layers are removed, result.back()
// the plaintext.
std::vector<Bytes> onion_layers(std::span<const Bytes> publics, ByteView plaintext,
                                const RandomnessTrace& trace);
// Peels layers with secrets in order (secrets[0] first).
Bytes onion_decrypt(std::span<const Bytes> secrets, ByteView ciphertext);

Digest hash(ByteView message);
Bytes hash_bytes(ByteView message);

// First `bits` bits of the generator keyed by seed, packed MSB-first; unused
// low bits of the final byte are zero.
Bytes prng_bits(const Seed& seed, std::size_t bits);
inline Bytes prng_bytes(const Seed& seed, std::size_t n) { return prng_bits(seed, n * 8); }

// Overwrites a buffer before it is dropped.
void wipe(Bytes& secret);

}  // namespace dissent::crypto
