#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dissent/bulk.hpp"
#include "dissent/simd/xor.hpp"
#include "support.hpp"

using namespace dissent;
using namespace dissent::testing;

namespace {

Bytes naive_xor(Bytes a, const Bytes& b) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] ^= b[i];
  return a;
}

// Descriptors written in roster order (slot t = member t) and every member's
// honest slot vector, computed without the node machinery.
struct Table {
  RoundConfig config;
  std::vector<Credentials> creds;
  std::vector<GeneratedDescriptor> gen;
  std::vector<std::optional<MessageDescriptor>> descriptors;
  std::vector<std::optional<std::vector<SlotCiphertext>>> contributions;

  Table(const std::vector<Bytes>& messages, std::uint64_t seed, std::optional<std::size_t> sabotage_author = {},
        std::optional<std::size_t> sabotage_peer = {}) {
    creds = make_identities(messages.size(), seed);
    config.nonce = to_bytes("bulk-table");
    config.protocol = ProtocolKind::bulk;
    config.leader = 1;
    for (const auto& c : creds) config.participants.push_back(participant_of(c));
    auto rng = crypto::Rng::from_u64(seed).fork("table");
    for (std::size_t i = 0; i < messages.size(); ++i) {
      std::optional<std::size_t> sab;
      if (sabotage_author == i) sab = sabotage_peer;
      gen.push_back(generate_descriptor(config, i, messages[i], rng, sab));
      descriptors.push_back(gen.back().descriptor);
    }
    for (std::size_t j = 0; j < messages.size(); ++j) {
      std::vector<SlotCiphertext> v;
      for (std::size_t t = 0; t < messages.size(); ++t) {
        SlotCiphertext s;
        s.slot = static_cast<std::uint32_t>(t);
        s.bits = t == j ? std::optional<Bytes>(gen[t].secrets.own_ciphertext)
                        : peer_contribution(gen[t].descriptor, j, creds[j].primary.secret);
        v.push_back(s);
      }
      contributions.push_back(v);
    }
  }
};

}  // namespace

TEST_CASE("descriptor generation obeys the xor law") {
  std::vector<Bytes> msgs{to_bytes("hello world"), Bytes(7, 0x11), Bytes(300, 0xEE)};
  Table t(msgs, 1);
  for (std::size_t i = 0; i < msgs.size(); ++i) {
    const auto& g = t.gen[i];
    CHECK(g.descriptor.length == msgs[i].size());
    CHECK(g.descriptor.message_hash == crypto::hash(msgs[i]));
    REQUIRE(g.descriptor.stream_hashes.size() == 3);
    REQUIRE(g.descriptor.encrypted_seeds.size() == 3);
    Bytes acc = msgs[i];
    for (std::size_t j = 0; j < msgs.size(); ++j) {
      CHECK(g.descriptor.encrypted_seeds[j].size() == kEncryptedSeedSize);
      if (j == i) continue;
      Bytes stream = crypto::prng_bytes(g.secrets.seeds[j], msgs[i].size());
      CHECK(g.descriptor.stream_hashes[j] == crypto::hash(stream));
      CHECK(crypto::decrypt(t.creds[j].primary.secret, g.descriptor.encrypted_seeds[j]) ==
            Bytes(g.secrets.seeds[j].begin(), g.secrets.seeds[j].end()));
      CHECK(crypto::encrypt_with(t.config.participants[j].primary_public,
                                 Bytes(g.secrets.seeds[j].begin(), g.secrets.seeds[j].end()),
                                 g.secrets.seed_randomness[j]) == g.descriptor.encrypted_seeds[j]);
      acc = naive_xor(acc, stream);
    }
    CHECK(g.secrets.own_ciphertext == acc);
    CHECK(g.descriptor.stream_hashes[i] == crypto::hash(g.secrets.own_ciphertext));
  }
}

TEST_CASE("xor algebra on a single byte") {
  Bytes c{0x5F};
  Bytes a{0xA5}, b{0x3C};
  simd::xor_into(c, a);
  simd::xor_into(c, b);
  CHECK(c == Bytes{0xC6});
  Bytes m{0xA5};
  simd::xor_into(m, Bytes{0x3C});
  simd::xor_into(m, Bytes{0xC6});
  CHECK(m == Bytes{0x5F});
}

TEST_CASE("zero-length message descriptor") {
  Table t({Bytes{}, Bytes{}, Bytes{}}, 2);
  for (const auto& g : t.gen) {
    CHECK(g.secrets.own_ciphertext.empty());
    for (const auto& h : g.descriptor.stream_hashes) CHECK(h == crypto::hash(Bytes{}));
  }
}

TEST_CASE("descriptor encoding is fixed-width and strict") {
  Table t({Bytes(0), Bytes(9, 1), Bytes(5000, 2)}, 3);
  for (const auto& g : t.gen) {
    Bytes enc = encode(g.descriptor);
    CHECK(enc.size() == descriptor_size(3));
    CHECK(decode_descriptor(enc, 3) == g.descriptor);
    Bytes shorter(enc.begin(), enc.end() - 1);
    CHECK_THROWS_AS(decode_descriptor(shorter, 3), Error);
    CHECK_THROWS_AS(decode_descriptor(enc, 4), Error);
  }
  CHECK(descriptor_size(3) == 8 + 32 + 3 * (32 + kEncryptedSeedSize));
}

TEST_CASE("slot vector codec") {
  std::vector<SlotCiphertext> v{{0, Bytes{1, 2, 3}}, {1, std::nullopt}, {2, Bytes{}}};
  Bytes enc = encode_slots(v);
  CHECK(enc.size() == 3 * kSlotFraming + 3);
  CHECK(decode_slots(enc, 3) == v);
  CHECK_THROWS_AS(decode_slots(enc, 4), Error);
  auto swapped = v;
  std::swap(swapped[0].slot, swapped[1].slot);
  CHECK_THROWS_AS(decode_slots(encode_slots(swapped), 3), Error);
  Bytes trailing = enc;
  trailing.push_back(0);
  CHECK_THROWS_AS(decode_slots(trailing, 3), Error);
}

TEST_CASE("honest recovery of messages with lengths 0, 5 and 1024") {
  std::vector<Bytes> msgs{Bytes{}, Bytes(5, 0x33), Bytes(1024, 0x99)};
  Table t(msgs, 4);
  for (const auto& c : t.contributions)
    for (const auto& s : *c) CHECK(s.bits.has_value());
  Recovery r = recover(t.descriptors, t.contributions);
  CHECK(r.corrupted.empty());
  REQUIRE(r.recovered.size() == 3);
  for (std::uint32_t s = 0; s < 3; ++s) CHECK(r.recovered.at(s) == msgs[s]);
}

TEST_CASE("all-empty round recovers empty messages without corruption") {
  Table t({Bytes{}, Bytes{}, Bytes{}, Bytes{}}, 5);
  Recovery r = recover(t.descriptors, t.contributions);
  CHECK(r.corrupted.empty());
  CHECK(r.recovered.size() == 4);
  for (const auto& [s, m] : r.recovered) CHECK(m.empty());
}

TEST_CASE("property: xor correctness over sampled lengths") {
  auto rng = crypto::Rng::from_u64(77);
  for (int trial = 0; trial < 12; ++trial) {
    std::size_t n = 2 + rng.uniform(5);
    std::vector<Bytes> msgs;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t len = trial == 0 ? 65536 : rng.uniform(65537);
      msgs.push_back(rng.bytes(len));
    }
    Table t(msgs, 100 + trial);
    Recovery r = recover(t.descriptors, t.contributions);
    CHECK(r.corrupted.empty());
    for (std::size_t s = 0; s < n; ++s) CHECK(r.recovered.at(static_cast<std::uint32_t>(s)) == msgs[s]);
  }
}

TEST_CASE("property: corruption of one slot never alters another") {
  auto rng = crypto::Rng::from_u64(78);
  for (int trial = 0; trial < 10; ++trial) {
    std::size_t n = 3 + rng.uniform(4);
    std::vector<Bytes> msgs;
    for (std::size_t i = 0; i < n; ++i) msgs.push_back(rng.bytes(1 + rng.uniform(2000)));
    Table t(msgs, 200 + trial);
    auto bad_slot = static_cast<std::uint32_t>(rng.uniform(n));
    auto corrupter = (bad_slot + 1 + rng.uniform(n - 1)) % n;
    auto& bits = (*t.contributions[corrupter])[bad_slot].bits;
    REQUIRE(bits.has_value());
    (*bits)[rng.uniform(bits->size())] ^= 0x04;
    Recovery r = recover(t.descriptors, t.contributions);
    CHECK(r.corrupted == std::set<std::uint32_t>{bad_slot});
    for (std::size_t s = 0; s < n; ++s)
      if (s != bad_slot) CHECK(r.recovered.at(static_cast<std::uint32_t>(s)) == msgs[s]);
    auto dev = deviating_members(*t.descriptors[bad_slot], bad_slot, t.contributions);
    CHECK(dev == std::vector<std::size_t>{corrupter});
  }
}

TEST_CASE("author self-sabotage drops only its own slot") {
  std::vector<Bytes> msgs{Bytes(40, 1), Bytes(40, 2), Bytes(40, 3)};
  Table t(msgs, 6, /*author*/ 0, /*peer*/ 2);
  CHECK_FALSE((*t.contributions[2])[0].bits.has_value());
  Recovery r = recover(t.descriptors, t.contributions);
  CHECK(r.corrupted == std::set<std::uint32_t>{0});
  CHECK(r.recovered.at(1) == msgs[1]);
  CHECK(r.recovered.at(2) == msgs[2]);
}

TEST_CASE("accusations: valid ones verify, fabricated ones fail") {
  std::vector<Bytes> msgs{Bytes(64, 1), Bytes(64, 2), Bytes(64, 3), Bytes(64, 4)};
  Table t(msgs, 7);
  const std::size_t victim = 1, corrupter = 3;
  (*(*t.contributions[corrupter])[victim].bits)[0] ^= 0x80;

  Accusation a;
  a.accused = t.creds[corrupter].id;
  a.encrypted_seed = t.gen[victim].descriptor.encrypted_seeds[corrupter];
  a.seed = t.gen[victim].secrets.seeds[corrupter];
  a.randomness = t.gen[victim].secrets.seed_randomness[corrupter];

  Bytes enc = encode(a);
  CHECK(enc.size() == kAccusationSize);
  auto dec = decode_accusation(enc);
  REQUIRE(dec.has_value());
  CHECK(dec->accused == a.accused);
  CHECK(verify_accusation(t.config, t.descriptors, t.contributions, *dec) == victim);

  CHECK_FALSE(decode_accusation(accusation_filler()).has_value());
  CHECK(accusation_filler().size() == kAccusationSize);
  CHECK_THROWS_AS(decode_accusation(Bytes(kAccusationSize - 1, 0)), Error);

  auto perturbed_r = a;
  perturbed_r.randomness[5] ^= 1;
  CHECK_FALSE(verify_accusation(t.config, t.descriptors, t.contributions, perturbed_r).has_value());
  auto perturbed_s = a;
  perturbed_s.seed[0] ^= 1;
  CHECK_FALSE(verify_accusation(t.config, t.descriptors, t.contributions, perturbed_s).has_value());

  // An honest member that sent its assigned stream cannot be validly accused.
  const std::size_t honest = 2;
  CHECK((*t.contributions[honest])[victim].bits.has_value());
  CHECK(crypto::hash(*(*t.contributions[honest])[victim].bits) ==
        t.gen[victim].descriptor.stream_hashes[honest]);
  Accusation framed;
  framed.accused = t.creds[honest].id;
  framed.encrypted_seed = t.gen[victim].descriptor.encrypted_seeds[honest];
  framed.seed = t.gen[victim].secrets.seeds[honest];
  framed.randomness = t.gen[victim].secrets.seed_randomness[honest];
  CHECK_FALSE(verify_accusation(t.config, t.descriptors, t.contributions, framed).has_value());
}

TEST_CASE("bulk rounds end to end") {
  SUBCASE("honest, each member recognizes exactly one slot") {
    auto spec = bulk_spec({0, 5, 1024}, 8);
    RoundRun run = run_round(spec);
    REQUIRE(run.status == RoundStatus::completed);
    CHECK(sorted(run.outputs()) == sorted(values(spec.messages)));
    std::set<std::uint32_t> own;
    for (const auto& [id, o] : run.outcomes) {
      REQUIRE(o.own_slot.has_value());
      own.insert(*o.own_slot);
      CHECK(o.recovered.at(*o.own_slot) == spec.messages.at(id));
      CHECK(o.corrupted.empty());
    }
    CHECK(own.size() == 3);
  }
  SUBCASE("corrupting another slot exposes the corrupter through an accusation") {
    for (MemberId target : {1u, 3u, 5u}) {
      CAPTURE(target);
      auto spec = bulk_spec({100, 200, 300, 400, 500}, 9);
      spec.plan.strategies.push_back(parse_fault("corrupt_slot_bits@" + std::to_string(target)));
      RoundRun run = run_round(spec);
      CHECK(run.status == RoundStatus::blamed);
      CHECK(run.outcome.verdict.exposed == std::set<MemberId>{target});
      CHECK(run.outcome.verdict.categories_of(target).count(FaultCategory::corrupt_slot) == 1);
      CHECK(run.outcome.accusation_round);
      CHECK(run.outcome.corrupted.size() == 1);
      CHECK(run.outcome.recovered.size() == 4);
    }
  }
  SUBCASE("self-sabotage and fabricated accusations drop a slot with no exposure") {
    for (const char* fault : {"corrupt_own_slot@2", "invalid_accusation@2", "corrupt_own_slot@1"}) {
      CAPTURE(fault);
      auto spec = bulk_spec({64, 64, 64, 64}, 10);
      spec.plan.strategies.push_back(parse_fault(fault));
      RoundRun run = run_round(spec);
      CHECK(run.status == RoundStatus::completed);
      CHECK(run.outcome.verdict.empty());
      CHECK(run.outcome.corrupted.size() == 1);
      CHECK(run.outcome.recovered.size() == 3);
    }
  }
}

TEST_CASE("descriptor and accusation nonces are distinct per round") {
  Bytes n = to_bytes("round");
  CHECK(descriptor_nonce(n) != accusation_nonce(n));
  CHECK(descriptor_nonce(n) != descriptor_nonce(to_bytes("other")));
  CHECK(descriptor_nonce(n) == descriptor_nonce(n));
}
