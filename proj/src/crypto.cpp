#include "dissent/crypto.hpp"

#include <sodium.h>

#include <algorithm>
#include <cstring>
#include <mutex>

namespace dissent::crypto {

namespace {

void ensure_sodium() {
  static std::once_flag once;
  std::call_once(once, [] {
    if (sodium_init() < 0) throw std::runtime_error("libsodium initialization failed");
  });
}

constexpr std::string_view kLayerLabel = "dissent/layer-key/v1";

// Symmetric key for one encryption layer, bound to both public values.
std::array<std::uint8_t, crypto_aead_chacha20poly1305_ietf_KEYBYTES> layer_key(
    const std::uint8_t* shared, const std::uint8_t* ephemeral_public,
    const std::uint8_t* recipient_public) {
  crypto_hash_sha256_state st;
  crypto_hash_sha256_init(&st);
  crypto_hash_sha256_update(&st, reinterpret_cast<const unsigned char*>(kLayerLabel.data()),
                            kLayerLabel.size());
  crypto_hash_sha256_update(&st, shared, crypto_scalarmult_BYTES);
  crypto_hash_sha256_update(&st, ephemeral_public, kPublicKeySize);
  crypto_hash_sha256_update(&st, recipient_public, kPublicKeySize);
  std::array<std::uint8_t, crypto_aead_chacha20poly1305_ietf_KEYBYTES> key{};
  static_assert(crypto_hash_sha256_BYTES == crypto_aead_chacha20poly1305_ietf_KEYBYTES);
  crypto_hash_sha256_final(&st, key.data());
  return key;
}

// Fresh key per layer, so a fixed nonce is never reused under one key.
constexpr std::array<std::uint8_t, crypto_aead_chacha20poly1305_ietf_NPUBBYTES> kZeroNonce{};

}  // namespace

Rng::Rng(const Seed& seed) : key_(seed) { ensure_sodium(); }

Rng Rng::from_os() {
  ensure_sodium();
  Seed s;
  randombytes_buf(s.data(), s.size());
  return Rng(s);
}

Rng Rng::from_u64(std::uint64_t seed) {
  ByteWriter w;
  w.raw(to_bytes("dissent/rng/u64")).u64(seed);
  return Rng(hash(w.bytes()));
}

void Rng::refill() {
  std::array<std::uint8_t, crypto_stream_chacha20_NONCEBYTES> nonce{};
  for (std::size_t i = 0; i < nonce.size(); ++i) nonce[i] = static_cast<std::uint8_t>(block_ >> (8 * i));
  ++block_;
  crypto_stream_chacha20(buf_.data(), buf_.size(), nonce.data(), key_.data());
  buf_pos_ = 0;
}

void Rng::fill(std::span<std::uint8_t> out) {
  std::size_t done = 0;
  while (done < out.size()) {
    if (buf_pos_ == buf_.size()) refill();
    std::size_t n = std::min(out.size() - done, buf_.size() - buf_pos_);
    std::memcpy(out.data() + done, buf_.data() + buf_pos_, n);
    buf_pos_ += n;
    done += n;
  }
}

Bytes Rng::bytes(std::size_t n) {
  Bytes out(n);
  fill(out);
  return out;
}

Seed Rng::seed_bytes() {
  Seed s;
  fill(s);
  return s;
}

std::uint64_t Rng::next_u64() {
  std::array<std::uint8_t, 8> b;
  fill(b);
  std::uint64_t v = 0;
  for (auto x : b) v = (v << 8) | x;
  return v;
}

std::uint64_t Rng::uniform(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("Rng::uniform bound must be nonzero");
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    std::uint64_t r = next_u64();
    if (r >= threshold) return r % bound;
  }
}

Rng Rng::fork(std::string_view label) const {
  ByteWriter w;
  w.raw(key_).raw(to_bytes(label));
  return Rng(hash(w.bytes()));
}

SigningKeyPair keygen_signing(Rng& rng) {
  ensure_sodium();
  Seed seed = rng.seed_bytes();
  SigningKeyPair kp{Bytes(crypto_sign_SECRETKEYBYTES), Bytes(crypto_sign_PUBLICKEYBYTES)};
  crypto_sign_seed_keypair(kp.public_key.data(), kp.secret.data(), seed.data());
  sodium_memzero(seed.data(), seed.size());
  return kp;
}

Bytes sign(ByteView secret, ByteView message) {
  ensure_sodium();
  if (secret.size() != crypto_sign_SECRETKEYBYTES) throw Error(ErrorCode::BadKey, "signing key has wrong width");
  Bytes sig(crypto_sign_BYTES);
  crypto_sign_detached(sig.data(), nullptr, message.data(), message.size(), secret.data());
  return sig;
}

bool verify(ByteView public_key, ByteView message, ByteView signature) {
  ensure_sodium();
  if (public_key.size() != crypto_sign_PUBLICKEYBYTES || signature.size() != crypto_sign_BYTES) return false;
  return crypto_sign_verify_detached(signature.data(), message.data(), message.size(),
                                     public_key.data()) == 0;
}

EncryptionKeyPair keygen_encryption(Rng& rng, KeyRole role) {
  ensure_sodium();
  EncryptionKeyPair kp{rng.bytes(kSecretKeySize), Bytes(kPublicKeySize), role};
  crypto_scalarmult_base(kp.public_key.data(), kp.secret.data());
  return kp;
}

bool matches(ByteView secret, ByteView public_key) {
  ensure_sodium();
  if (secret.size() != kSecretKeySize || public_key.size() != kPublicKeySize) return false;
  std::array<std::uint8_t, kPublicKeySize> derived;
  crypto_scalarmult_base(derived.data(), secret.data());
  return sodium_memcmp(derived.data(), public_key.data(), kPublicKeySize) == 0;
}

bool is_valid_public_key(ByteView public_key) {
  ensure_sodium();
  if (public_key.size() != kPublicKeySize) return false;
  // Any nonzero scalar maps a small-order point to the identity, which
  // crypto_scalarmult reports as failure.
  std::array<std::uint8_t, crypto_scalarmult_SCALARBYTES> probe{};
  probe[0] = 9;
  std::array<std::uint8_t, crypto_scalarmult_BYTES> out;
  return crypto_scalarmult(out.data(), probe.data(), public_key.data()) == 0;
}

std::size_t ciphertext_size(std::size_t plaintext_size) { return plaintext_size + kCiphertextOverhead; }

Encryption encrypt(ByteView public_key, ByteView plaintext, Rng& rng) {
  Bytes r = rng.bytes(kRandomnessSize);
  Bytes c = encrypt_with(public_key, plaintext, r);
  return {std::move(c), std::move(r)};
}

Bytes encrypt_with(ByteView public_key, ByteView plaintext, ByteView randomness) {
  ensure_sodium();
  if (plaintext.size() > kMaxPlaintextSize) throw Error(ErrorCode::PlaintextTooLong, "plaintext exceeds bound");
  if (randomness.size() != kRandomnessSize) throw Error(ErrorCode::BadRandomnessWidth, "randomness has wrong width");
  if (public_key.size() != kPublicKeySize) throw Error(ErrorCode::BadKey, "public key has wrong width");

  Bytes out(ciphertext_size(plaintext.size()));
  std::uint8_t* epk = out.data();
  crypto_scalarmult_base(epk, randomness.data());
  std::array<std::uint8_t, crypto_scalarmult_BYTES> shared;
  if (crypto_scalarmult(shared.data(), randomness.data(), public_key.data()) != 0)
    throw Error(ErrorCode::BadKey, "public key is a small-order point");
  auto key = layer_key(shared.data(), epk, public_key.data());
  sodium_memzero(shared.data(), shared.size());

  unsigned long long clen = 0;
  crypto_aead_chacha20poly1305_ietf_encrypt(out.data() + kPublicKeySize, &clen, plaintext.data(),
                                            plaintext.size(), epk, kPublicKeySize, nullptr,
                                            kZeroNonce.data(), key.data());
  sodium_memzero(key.data(), key.size());
  return out;
}

Bytes decrypt(ByteView secret, ByteView ciphertext) {
  ensure_sodium();
  if (secret.size() != kSecretKeySize) throw Error(ErrorCode::BadKey, "secret key has wrong width");
  if (ciphertext.size() < kCiphertextOverhead) throw Error(ErrorCode::DecryptionFailed, "ciphertext too short");
  const std::uint8_t* epk = ciphertext.data();
  std::array<std::uint8_t, crypto_scalarmult_BYTES> shared;
  if (crypto_scalarmult(shared.data(), secret.data(), epk) != 0)
    throw Error(ErrorCode::DecryptionFailed, "ephemeral key is a small-order point");
  std::array<std::uint8_t, kPublicKeySize> own_public;
  crypto_scalarmult_base(own_public.data(), secret.data());
  auto key = layer_key(shared.data(), epk, own_public.data());
  sodium_memzero(shared.data(), shared.size());

  Bytes out(ciphertext.size() - kCiphertextOverhead);
  unsigned long long mlen = 0;
  int rc = crypto_aead_chacha20poly1305_ietf_decrypt(
      out.data(), &mlen, nullptr, ciphertext.data() + kPublicKeySize,
      ciphertext.size() - kPublicKeySize, epk, kPublicKeySize, kZeroNonce.data(), key.data());
  sodium_memzero(key.data(), key.size());
  if (rc != 0) throw Error(ErrorCode::DecryptionFailed, "authentication failed");
  return out;
}

Onion onion_encrypt(std::span<const Bytes> publics, ByteView plaintext, Rng& rng) {
  Onion onion;
  onion.trace.layers.resize(publics.size());
  Bytes cur(plaintext.begin(), plaintext.end());
  for (std::size_t k = publics.size(); k-- > 0;) {
    auto enc = encrypt(publics[k], cur, rng);
    cur = std::move(enc.ciphertext);
    onion.trace.layers[k] = std::move(enc.randomness);
  }
  onion.ciphertext = std::move(cur);
  return onion;
}

Bytes onion_encrypt_with(std::span<const Bytes> publics, ByteView plaintext, const RandomnessTrace& trace) {
  if (trace.layers.size() != publics.size())
    throw Error(ErrorCode::BadRandomnessWidth, "trace layer count does not match key count");
  Bytes cur(plaintext.begin(), plaintext.end());
  for (std::size_t k = publics.size(); k-- > 0;) cur = encrypt_with(publics[k], cur, trace.layers[k]);
  return cur;
}

std::vector<Bytes> onion_layers(std::span<const Bytes> publics, ByteView plaintext,
                                const RandomnessTrace& trace) {
  if (trace.layers.size() != publics.size())
    throw Error(ErrorCode::BadRandomnessWidth, "trace layer count does not match key count");
  std::vector<Bytes> layers(publics.size() + 1);
  layers.back().assign(plaintext.begin(), plaintext.end());
  for (std::size_t k = publics.size(); k-- > 0;)
    layers[k] = encrypt_with(publics[k], layers[k + 1], trace.layers[k]);
  return layers;
}

Bytes onion_decrypt(std::span<const Bytes> secrets, ByteView ciphertext) {
  Bytes cur(ciphertext.begin(), ciphertext.end());
  for (const auto& s : secrets) cur = decrypt(s, cur);
  return cur;
}

Digest hash(ByteView message) {
  ensure_sodium();
  Digest d;
  crypto_hash_sha256(d.data(), message.data(), message.size());
  return d;
}

Bytes hash_bytes(ByteView message) {
  auto d = hash(message);
  return Bytes(d.begin(), d.end());
}

Bytes prng_bits(const Seed& seed, std::size_t bits) {
  ensure_sodium();
  Bytes out((bits + 7) / 8);
  if (!out.empty()) {
    std::array<std::uint8_t, crypto_stream_chacha20_NONCEBYTES> nonce{};
    crypto_stream_chacha20(out.data(), out.size(), nonce.data(), seed.data());
    if (bits % 8 != 0) out.back() &= static_cast<std::uint8_t>(0xFF << (8 - bits % 8));
  }
  return out;
}

void wipe(Bytes& secret) {
  if (!secret.empty()) sodium_memzero(secret.data(), secret.size());
  secret.clear();
  secret.shrink_to_fit();
}

}  // namespace dissent::crypto
