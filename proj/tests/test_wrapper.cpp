#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dissent/suspicion.hpp"
#include "dissent/wrapper.hpp"
#include "support.hpp"

using namespace dissent;
using namespace dissent::testing;

namespace {

Membership membership_of(const std::vector<Credentials>& creds, std::uint32_t quorum) {
  Membership m;
  m.quorum = quorum;
  for (const auto& c : creds) m.members.push_back(participant_of(c));
  return m;
}

SessionSpec session(std::size_t n, std::uint64_t seed, std::uint32_t budget) {
  SessionSpec s;
  s.protocol = ProtocolKind::shuffle;
  s.members = make_identities(n, seed);
  s.messages = random_messages(s.members, 32, seed);
  s.datum_length = 32;
  s.budget = budget;
  s.seed = seed;
  s.net.seed = seed;
  s.timeout_us = 2'000'000;
  return s;
}

FaultStrategy in_round(const char* spec, std::uint32_t round) {
  FaultStrategy f = parse_fault(spec);
  f.round = round;
  return f;
}

}  // namespace

TEST_CASE("quorum boundary") {
  auto creds = make_identities(3, 1);
  NonceSource nonces(1, crypto::Rng::from_u64(1));
  auto m3 = membership_of(creds, 3);
  RoundConfig ok = initiate_round(1, m3, ProtocolKind::shuffle, 32, nonces);
  CHECK(ok.size() == 3);
  CHECK(review_proposal(ok, m3, {}) == Review::accept);
  CHECK_THROWS_AS(initiate_round(1, m3, {1, 2}, ProtocolKind::shuffle, 32, nonces), Error);

  auto spec = shuffle_spec(3, 32, 1);
  spec.quorum = 3;
  CHECK(run_round(spec).status == RoundStatus::completed);

  auto small = shuffle_spec(2, 32, 1);
  small.quorum = 3;
  RoundRun run = run_round(small);
  for (const auto& [id, o] : run.outcomes)
    if (id != 1) CHECK(o.status == RoundStatus::rejected);
  CHECK(run.status != RoundStatus::completed);

  RoundConfig packed = ok;
  packed.participants.pop_back();
  CHECK(review_proposal(packed, m3, {}) == Review::below_quorum);
}

TEST_CASE("roster review flags strangers and omissions") {
  auto creds = make_identities(4, 2);
  auto view = membership_of(creds, 2);
  NonceSource nonces(1, crypto::Rng::from_u64(2));
  RoundConfig full = initiate_round(1, view, ProtocolKind::shuffle, 32, nonces);
  CHECK(review_proposal(full, view, {2, 3, 4}) == Review::accept);
  RoundConfig stranger = full;
  stranger.participants[1].primary_public = make_identity(99, 2).primary.public_key;
  CHECK(review_proposal(stranger, view, {}) == Review::unknown_member);
  RoundConfig omitted = initiate_round(1, view, {1, 2, 3}, ProtocolKind::shuffle, 32, nonces);
  CHECK(review_proposal(omitted, view, {4}) == Review::inclusion_demanded);
  view.exclude({4});
  CHECK(review_proposal(omitted, view, {4}) == Review::accept);
}

TEST_CASE("inclusion demand against honest and packing leaders") {
  auto creds = make_identities(5, 3);
  auto m = membership_of(creds, 3);
  std::vector<std::pair<MemberId, Membership>> reviewers;
  for (MemberId id = 2; id <= 5; ++id) reviewers.emplace_back(id, m);
  std::map<MemberId, std::set<MemberId>> reachable{{2, {3, 4, 5}}, {3, {2, 4, 5}}, {4, {2, 3, 5}}, {5, {2, 3, 4}}};

  SUBCASE("honest leader adds the candidate with a fresh nonce") {
    RoundLeader leader(1, m, crypto::Rng::from_u64(3), true);
    RoundConfig packed = leader.propose(ProtocolKind::shuffle, 32, {5});
    CHECK_FALSE(packed.find(5));
    auto final_cfg = negotiate_roster(leader, packed, reviewers, reachable);
    REQUIRE(final_cfg.has_value());
    CHECK(final_cfg->find(5) != nullptr);
    CHECK(final_cfg->size() == 5);
    CHECK(final_cfg->nonce != packed.nonce);
  }
  SUBCASE("packing leader refuses and the round never starts") {
    RoundLeader leader(1, m, crypto::Rng::from_u64(3), false);
    RoundConfig packed = leader.propose(ProtocolKind::shuffle, 32, {5});
    CHECK_FALSE(negotiate_roster(leader, packed, reviewers, reachable).has_value());
    auto ack = leader.on_inclusion_demand(packed, InclusionDemand{2, 5, packed.nonce});
    CHECK_FALSE(ack.included);
  }
  SUBCASE("demands citing a stale nonce are ignored") {
    RoundLeader leader(1, m, crypto::Rng::from_u64(3), true);
    RoundConfig packed = leader.propose(ProtocolKind::shuffle, 32, {5});
    CHECK_FALSE(leader.on_inclusion_demand(packed, InclusionDemand{2, 5, to_bytes("old")}).included);
  }
  SUBCASE("honest members refuse a packed roster at the node level") {
    auto spec = shuffle_spec(4, 32, 3);
    spec.members.pop_back();
    spec.messages.erase(4);
    Membership view = membership_of(make_identities(4, 3), 2);
    spec.review = [view](MemberId, const RoundConfig& cfg) {
      return review_proposal(cfg, view, {1, 2, 3, 4}) == Review::accept;
    };
    RoundRun run = run_round(spec);
    for (const auto& [id, o] : run.outcomes)
      if (id != 1) CHECK(o.status == RoundStatus::rejected);
  }
}

TEST_CASE("nonces are unique within a session") {
  NonceSource src(7, crypto::Rng::from_u64(4));
  std::set<Bytes> seen;
  for (int i = 0; i < 2000; ++i) CHECK(seen.insert(src.next()).second);
  CHECK(src.issued() == 2000);
  NonceSource same_seed(7, crypto::Rng::from_u64(4));
  NonceSource other_leader(8, crypto::Rng::from_u64(4));
  CHECK(same_seed.next() != other_leader.next());
}

TEST_CASE("suspicion state machine") {
  SuspicionState s(1000);
  CHECK(s.status(1, 2) == SuspicionStatus::clear);
  s.suspect(1, 2, 10);
  s.suspect(3, 2, 20);
  CHECK(s.status(1, 2) == SuspicionStatus::suspected);
  CHECK_FALSE(s.expired(1, 2, 500));
  CHECK(s.expired(1, 2, 1010));
  s.resolve(2);
  CHECK(s.status(1, 2) == SuspicionStatus::resolved);
  CHECK(s.status(3, 2) == SuspicionStatus::resolved);
  CHECK_FALSE(s.expired(1, 2, 5000));
  s.suspect(1, 4, 0);
  s.resolve(1, 4);
  CHECK(s.status(1, 4) == SuspicionStatus::resolved);
  s.suspect(2, 5, 0);
  s.fail(5);
  CHECK(s.failed() == std::vector<MemberId>{5});
  CHECK(std::string(to_string(SuspicionStatus::failed)) == "failed");
}

TEST_CASE("spurious suspicion clears when the frame arrives") {
  auto spec = shuffle_spec(4, 4096, 5);
  // Above one demand round trip, below the time member 4 waits for its input.
  spec.timeout_us = 200'000;
  RoundRun run = run_round(spec);
  CHECK(run.status == RoundStatus::completed);
  std::size_t raised = 0;
  for (const auto& [id, m] : run.members) raised += m.suspicions;
  CHECK(raised > 0);
  CHECK(run.outcome.failed.empty());
  CHECK(exclusions_after(run).empty());
}

TEST_CASE("rerun: zero faults deliver in one round") {
  DeliveryReport r = rerun_until_delivered(session(4, 6, 3));
  CHECK(r.delivered);
  CHECK(r.rounds_used == 1);
  CHECK(r.excluded.empty());
}

TEST_CASE("rerun: a blamed round is followed by a clean one without the culprit") {
  auto s = session(5, 7, 3);
  s.plan.strategies.push_back(in_round("false_flag@3", 0));
  DeliveryReport r = rerun_until_delivered(s);
  CHECK(r.delivered);
  CHECK(r.rounds_used == 2);
  CHECK(r.runs[0].status == RoundStatus::blamed);
  CHECK(r.runs[1].status == RoundStatus::completed);
  CHECK_FALSE(r.runs[1].config.find(3));
  CHECK(r.excluded == std::set<MemberId>{3});
}

TEST_CASE("rerun: a silent member is excluded and the next run succeeds") {
  auto s = session(4, 8, 2);
  s.plan.strategies.push_back(parse_fault("go_silent@2"));
  DeliveryReport r = rerun_until_delivered(s);
  CHECK(r.delivered);
  CHECK(r.rounds_used == 2);
  CHECK(r.runs[0].status == RoundStatus::stalled);
  CHECK(r.excluded == std::set<MemberId>{2});
}

TEST_CASE("rerun: f colluders each disrupting one round deliver within f+1 rounds") {
  auto s = session(5, 9, 3);
  s.quorum = 3;
  s.plan.strategies.push_back(in_round("duplicate_entry@2", 0));
  s.plan.strategies.push_back(in_round("bad_secondary_key@4", 1));
  DeliveryReport r = rerun_until_delivered(s);
  CHECK(r.delivered);
  CHECK(r.rounds_used == 3);
  CHECK(r.excluded == std::set<MemberId>{2, 4});
}

TEST_CASE("rerun: budget exhaustion carries the partial report") {
  auto s = session(4, 10, 1);
  s.plan.strategies.push_back(parse_fault("drop_entry@2"));
  try {
    rerun_until_delivered(s);
    FAIL("expected BudgetExhausted");
  } catch (const BudgetExhausted& e) {
    CHECK(e.code() == ErrorCode::BudgetExhausted);
    CHECK(e.report().rounds_used == 1);
    CHECK_FALSE(e.report().delivered);
    CHECK(e.report().excluded == std::set<MemberId>{2});
  }
  auto zero = session(3, 10, 0);
  CHECK_THROWS_AS(rerun_until_delivered(zero), Error);
}

TEST_CASE("rerun: quorum loss stops the session") {
  auto s = session(3, 11, 3);
  s.quorum = 3;
  s.plan.strategies.push_back(parse_fault("false_flag@2"));
  CHECK_THROWS_AS(rerun_until_delivered(s), Error);
}

TEST_CASE("rerun: an excluded leader hands over to the next eligible member") {
  auto s = session(4, 12, 2);
  s.plan.strategies.push_back(in_round("wrong_digest@1", 0));
  DeliveryReport r = rerun_until_delivered(s);
  CHECK(r.delivered);
  CHECK(r.runs[1].config.leader == 2);
}

TEST_CASE("property: exclusion is monotone and exposed members never return") {
  auto rng = crypto::Rng::from_u64(13);
  const auto& actions = catalog_actions();
  for (int trial = 0; trial < 12; ++trial) {
    auto s = session(6, 300 + trial, 4);
    for (std::uint32_t round = 0; round < 3; ++round) {
      FaultAction a = actions[rng.uniform(actions.size())];
      if (a == FaultAction::corrupt_slot_bits || a == FaultAction::invalid_accusation) a = FaultAction::drop_entry;
      FaultStrategy f;
      f.action = a;
      f.target = static_cast<MemberId>(1 + rng.uniform(6));
      f.round = round;
      s.plan.strategies.push_back(f);
    }
    DeliveryReport r;
    try {
      r = rerun_until_delivered(s);
    } catch (const BudgetExhausted& e) {
      r = e.report();
    } catch (const Error&) {
      continue;
    }
    for (std::size_t i = 1; i < r.excluded_before.size(); ++i)
      for (auto id : r.excluded_before[i - 1]) CHECK(r.excluded_before[i].count(id) == 1);
    std::set<MemberId> exposed;
    for (const auto& run : r.runs) {
      for (auto id : exposed) CHECK_FALSE(run.config.find(id));
      exposed.insert(run.outcome.verdict.exposed.begin(), run.outcome.verdict.exposed.end());
    }
  }
}

TEST_CASE("property: accepted rosters keep at least Q - f honest members") {
  auto rng = crypto::Rng::from_u64(14);
  auto creds = make_identities(10, 14);
  for (int trial = 0; trial < 500; ++trial) {
    std::uint32_t q = 2 + static_cast<std::uint32_t>(rng.uniform(8));
    std::size_t f = rng.uniform(q - 1);
    auto view = membership_of(creds, q);
    std::set<MemberId> faulty;
    while (faulty.size() < f) faulty.insert(static_cast<MemberId>(1 + rng.uniform(10)));
    std::vector<MemberId> roster{1};
    for (MemberId id = 2; id <= 10; ++id)
      if (rng.uniform(2)) roster.push_back(id);
    NonceSource nonces(1, rng.fork("n" + std::to_string(trial)));
    RoundConfig cfg;
    try {
      cfg = initiate_round(1, view, roster, ProtocolKind::shuffle, 0, nonces);
    } catch (const Error&) {
      CHECK(roster.size() < q);
      continue;
    }
    if (review_proposal(cfg, view, {}) != Review::accept) continue;
    std::size_t honest = 0;
    for (const auto& p : cfg.participants) honest += faulty.count(p.id) ? 0 : 1;
    CHECK(honest + f >= q);
  }
}

TEST_CASE("property: any single fault per round terminates with delivery") {
  auto rng = crypto::Rng::from_u64(15);
  for (auto protocol : {ProtocolKind::shuffle, ProtocolKind::bulk}) {
    for (auto action : catalog_actions()) {
      bool bulk_only = action == FaultAction::corrupt_slot_bits || action == FaultAction::invalid_accusation;
      if (bulk_only && protocol == ProtocolKind::shuffle) continue;
      std::string name = to_string(action);
      CAPTURE(name);
      CAPTURE(protocol);
      auto s = session(5, 400 + static_cast<int>(action), 3);
      s.protocol = protocol;
      if (protocol == ProtocolKind::bulk) {
        s.datum_length = 0;
        for (auto& [id, m] : s.messages) m = rng.bytes(rng.uniform(300));
      }
      FaultStrategy f;
      f.action = action;
      f.target = static_cast<MemberId>(1 + rng.uniform(5));
      s.plan.strategies.push_back(f);
      s.intent = f.target % 5 + 1;
      DeliveryReport r = rerun_until_delivered(s);
      CHECK(r.delivered);
      CHECK(r.runs.back().delivered(s.messages.at(*s.intent)));
    }
  }
}

TEST_CASE("session config parsing") {
  auto creds = make_identities(3, 16);
  std::string text = "# loopback test group\n"
                     "quorum = 2\n"
                     "timeout_ms = 2500   # per suspicion\n"
                     "rounds_budget = 4\n"
                     "protocol = bulk\n"
                     "msg_len = 77\n"
                     "leader = 2\n";
  for (const auto& c : creds)
    text += "member = " + std::to_string(c.id) + " 127.0.0.1:" + std::to_string(9000 + c.id) + " " +
            to_hex(c.signing.public_key) + " " + to_hex(c.primary.public_key) + "\n";
  SessionConfig cfg = parse_session_config(text);
  CHECK(cfg.quorum == 2);
  CHECK(cfg.timeout_ms == 2500);
  CHECK(cfg.rounds_budget == 4);
  CHECK(cfg.protocol == ProtocolKind::bulk);
  CHECK(cfg.msg_len == 77);
  CHECK(cfg.leader == 2u);
  REQUIRE(cfg.roster.size() == 3);
  CHECK(cfg.roster[1].host == "127.0.0.1");
  CHECK(cfg.roster[1].port == 9002);
  CHECK(cfg.roster[2].signing_public == creds[2].signing.public_key);
  CHECK(cfg.find(3) != nullptr);
  CHECK(cfg.membership().quorum == 2);
  CHECK(cfg.membership().members.size() == 3);

  SessionConfig again = parse_session_config(format_session_config(cfg));
  CHECK(again.quorum == cfg.quorum);
  CHECK(again.roster.size() == 3);
  CHECK(again.roster[0].primary_public == cfg.roster[0].primary_public);
  CHECK(again.leader == cfg.leader);

  for (const char* bad : {"colour = blue\n", "quorum = two\n", "member = 1 nohostport aa bb\n",
                          "member = 1 127.0.0.1:9000 zz 00\n", "protocol = carrier_pigeon\n", "quorum\n"}) {
    CAPTURE(bad);
    try {
      parse_session_config(bad);
      FAIL("accepted a bad config");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::Config);
    }
  }
  std::string dup = "member = 1 h:1 " + to_hex(creds[0].signing.public_key) + " " + to_hex(creds[0].primary.public_key) +
                    "\nmember = 1 h:2 " + to_hex(creds[1].signing.public_key) + " " +
                    to_hex(creds[1].primary.public_key) + "\n";
  CHECK_THROWS_AS(parse_session_config(dup), Error);
}

TEST_CASE("key file round trip and validation") {
  Credentials c = make_identity(4, 17);
  Credentials d = parse_key_file(format_key_file(c));
  CHECK(d.id == 4);
  CHECK(d.signing.secret == c.signing.secret);
  CHECK(d.signing.public_key == c.signing.public_key);
  CHECK(d.primary.secret == c.primary.secret);
  CHECK(d.primary.public_key == c.primary.public_key);

  Credentials wrong = c;
  wrong.primary.public_key = make_identity(5, 17).primary.public_key;
  CHECK_THROWS_AS(parse_key_file(format_key_file(wrong)), Error);
  Credentials wrong_sig = c;
  wrong_sig.signing.public_key = make_identity(5, 17).signing.public_key;
  CHECK_THROWS_AS(parse_key_file(format_key_file(wrong_sig)), Error);
}
