#include "dissent/wrapper.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace dissent {

const Participant* Membership::find(MemberId id) const {
  for (const auto& p : members)
    if (p.id == id) return &p;
  return nullptr;
}

std::vector<Participant> Membership::eligible() const {
  std::vector<Participant> out;
  for (const auto& p : members)
    if (!excluded.count(p.id)) out.push_back(p);
  return out;
}

void Membership::exclude(const std::set<MemberId>& ids) { excluded.insert(ids.begin(), ids.end()); }

Bytes NonceSource::next() {
  for (;;) {
    ByteWriter w;
    w.u32(leader_).u64(counter_++).raw(rng_.bytes(16));
    Bytes n = crypto::hash_bytes(w.bytes());
    if (seen_.insert(n).second) return n;
  }
}

RoundConfig initiate_round(MemberId leader, const Membership& membership, const std::vector<MemberId>& roster,
                           ProtocolKind protocol, std::uint64_t datum_length, NonceSource& nonces) {
  if (roster.size() < membership.quorum)
    throw Error(ErrorCode::QuorumUnmet, "roster of " + std::to_string(roster.size()) + " is below quorum " +
                                            std::to_string(membership.quorum));
  RoundConfig c;
  c.protocol = protocol;
  c.datum_length = protocol == ProtocolKind::shuffle ? datum_length : 0;
  c.quorum = membership.quorum;
  c.leader = leader;
  for (auto id : roster) {
    const Participant* p = membership.find(id);
    if (!p) throw Error(ErrorCode::Config, "roster member " + std::to_string(id) + " is not in the membership");
    c.participants.push_back(*p);
  }
  if (!c.find(leader)) throw Error(ErrorCode::Config, "leader is not in the roster");
  c.nonce = nonces.next();
  return c;
}

RoundConfig initiate_round(MemberId leader, const Membership& membership, ProtocolKind protocol,
                           std::uint64_t datum_length, NonceSource& nonces) {
  std::vector<MemberId> roster;
  for (const auto& p : membership.eligible()) roster.push_back(p.id);
  return initiate_round(leader, membership, roster, protocol, datum_length, nonces);
}

const char* to_string(Review r) {
  switch (r) {
    case Review::accept: return "accept";
    case Review::below_quorum: return "below_quorum";
    case Review::unknown_member: return "unknown_member";
    case Review::inclusion_demanded: return "inclusion_demanded";
  }
  return "unknown";
}

Review review_proposal(const RoundConfig& proposal, const Membership& view, const std::set<MemberId>& reachable) {
  if (proposal.size() < view.quorum) return Review::below_quorum;
  for (const auto& p : proposal.participants) {
    const Participant* known = view.find(p.id);
    if (!known || !(*known == p)) return Review::unknown_member;
  }
  for (auto j : reachable)
    if (view.find(j) && !view.excluded.count(j) && !proposal.find(j)) return Review::inclusion_demanded;
  return Review::accept;
}

RoundLeader::RoundLeader(MemberId id, Membership membership, crypto::Rng rng, bool honest)
    : id_(id), membership_(std::move(membership)), nonces_(id, std::move(rng)), honest_(honest) {}

RoundConfig RoundLeader::propose(ProtocolKind protocol, std::uint64_t datum_length, const std::set<MemberId>& omit) {
  std::vector<MemberId> roster;
  for (const auto& p : membership_.eligible())
    if (!omit.count(p.id) || p.id == id_) roster.push_back(p.id);
  return initiate_round(id_, membership_, roster, protocol, datum_length, nonces_);
}

InclusionAck RoundLeader::on_inclusion_demand(const RoundConfig& proposal, const InclusionDemand& demand) {
  InclusionAck ack;
  if (!honest_ || demand.nonce != proposal.nonce) return ack;
  const Participant* p = membership_.find(demand.candidate);
  if (!p || membership_.excluded.count(demand.candidate)) return ack;
  std::vector<MemberId> roster;
  for (const auto& q : membership_.members)
    if (proposal.find(q.id) || q.id == demand.candidate) roster.push_back(q.id);
  ack.included = true;
  ack.amended = initiate_round(id_, membership_, roster, proposal.protocol, proposal.datum_length, nonces_);
  return ack;
}

std::optional<RoundConfig> negotiate_roster(RoundLeader& leader, RoundConfig proposal,
                                            const std::vector<std::pair<MemberId, Membership>>& reviewers,
                                            const std::map<MemberId, std::set<MemberId>>& reachable) {
  std::set<MemberId> demanded;
  for (;;) {
    bool restarted = false;
    for (const auto& [self, view] : reviewers) {
      auto r = reachable.find(self);
      std::set<MemberId> reach = r == reachable.end() ? std::set<MemberId>{} : r->second;
      if (!proposal.find(self)) reach.insert(self);
      Review verdict = review_proposal(proposal, view, reach);
      if (verdict == Review::accept) continue;
      if (verdict != Review::inclusion_demanded) return std::nullopt;
      MemberId candidate = 0;
      for (auto j : reach)
        if (view.find(j) && !view.excluded.count(j) && !proposal.find(j)) {
          candidate = j;
          break;
        }
      if (!demanded.insert(candidate).second) return std::nullopt;
      auto ack = leader.on_inclusion_demand(proposal, InclusionDemand{self, candidate, proposal.nonce});
      if (!ack.included || !ack.amended) return std::nullopt;
      proposal = *ack.amended;
      restarted = true;
      break;
    }
    if (!restarted) return proposal;
  }
}

std::set<MemberId> exclusions_after(const RoundRun& run) {
  std::set<MemberId> out(run.outcome.verdict.exposed.begin(), run.outcome.verdict.exposed.end());
  out.insert(run.outcome.incomplete.begin(), run.outcome.incomplete.end());
  if (run.status == RoundStatus::stalled) out.insert(run.outcome.failed.begin(), run.outcome.failed.end());
  return out;
}

DeliveryReport rerun_until_delivered(const SessionSpec& spec) {
  if (spec.budget == 0) throw Error(ErrorCode::Usage, "rounds budget must be at least 1");
  Membership membership;
  membership.quorum = spec.quorum;
  for (const auto& c : spec.members) membership.members.push_back(participant_of(c));
  NonceSource nonces(spec.leader.value_or(spec.members.front().id),
                     crypto::Rng::from_u64(spec.seed).fork("session-nonces"));

  DeliveryReport report;
  if (spec.intent) report.undelivered.insert(*spec.intent);
  else
    for (const auto& [id, m] : spec.messages) report.undelivered.insert(id);

  for (std::uint32_t round = 0; round < spec.budget; ++round) {
    auto eligible = membership.eligible();
    MemberId leader = spec.leader.value_or(spec.members.front().id);
    if (membership.excluded.count(leader))
      leader = eligible.empty() ? leader : eligible.front().id;
    RoundConfig cfg = initiate_round(leader, membership, spec.protocol, spec.datum_length, nonces);

    RoundSpec rs;
    rs.protocol = spec.protocol;
    for (const auto& c : spec.members)
      if (cfg.find(c.id)) rs.members.push_back(c);
    rs.leader = leader;
    for (const auto& [id, m] : spec.messages)
      if (cfg.find(id)) rs.messages[id] = m;
    rs.datum_length = spec.datum_length;
    rs.nonce = cfg.nonce;
    rs.net = spec.net;
    rs.plan = spec.plan;
    rs.round = round;
    rs.seed = spec.seed;
    rs.timeout_us = spec.timeout_us;
    rs.quorum = spec.quorum;
    rs.oracle = spec.oracle;
    rs.blocked = spec.blocked;

    report.excluded_before.push_back(membership.excluded);
    RoundRun run = run_round(rs);
    ++report.rounds_used;
    if (run.status == RoundStatus::completed || run.status == RoundStatus::blamed) {
      for (auto it = report.undelivered.begin(); it != report.undelivered.end();) {
        auto m = spec.messages.find(*it);
        if (m != spec.messages.end() && cfg.find(*it) && run.delivered(m->second)) it = report.undelivered.erase(it);
        else ++it;
      }
    }
    membership.exclude(exclusions_after(run));
    for (auto id : membership.excluded) report.undelivered.erase(id);
    report.runs.push_back(std::move(run));
    if (report.undelivered.empty()) {
      report.delivered = true;
      break;
    }
  }
  report.excluded = membership.excluded;
  if (!report.delivered) throw BudgetExhausted(std::move(report));
  return report;
}

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& v, const std::string& key) {
  T out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) throw Error(ErrorCode::Config, "bad number for " + key + ": " + v);
  return out;
}

std::vector<std::pair<std::string, std::string>> key_values(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    std::string t = trim(line);
    if (t.empty()) continue;
    auto eq = t.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::Config, "line " + std::to_string(lineno) + ": expected key = value");
    out.emplace_back(trim(std::string_view(t).substr(0, eq)), trim(std::string_view(t).substr(eq + 1)));
  }
  return out;
}

ProtocolKind parse_protocol(const std::string& v) {
  if (v == "shuffle") return ProtocolKind::shuffle;
  if (v == "bulk") return ProtocolKind::bulk;
  throw Error(ErrorCode::Config, "protocol must be shuffle or bulk");
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Config, "cannot read " + path);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

}  // namespace

const RosterEntry* SessionConfig::find(MemberId id) const {
  for (const auto& r : roster)
    if (r.id == id) return &r;
  return nullptr;
}

Membership SessionConfig::membership() const {
  Membership m;
  m.quorum = quorum;
  for (const auto& r : roster) m.members.push_back(Participant{r.id, r.primary_public, r.signing_public});
  return m;
}

SessionConfig parse_session_config(std::string_view text) {
  SessionConfig c;
  for (const auto& [k, v] : key_values(text)) {
    if (k == "quorum") c.quorum = parse_number<std::uint32_t>(v, k);
    else if (k == "timeout_ms") c.timeout_ms = parse_number<std::uint64_t>(v, k);
    else if (k == "rounds_budget") c.rounds_budget = parse_number<std::uint32_t>(v, k);
    else if (k == "protocol") c.protocol = parse_protocol(v);
    else if (k == "msg_len") c.msg_len = parse_number<std::uint64_t>(v, k);
    else if (k == "leader") c.leader = parse_number<MemberId>(v, k);
    else if (k == "member") {
      std::istringstream in(v);
      std::string id, addr, sig, prim, extra;
      if (!(in >> id >> addr >> sig >> prim) || (in >> extra))
        throw Error(ErrorCode::Config, "member line needs: id host:port signing_hex primary_hex");
      RosterEntry e;
      e.id = parse_number<MemberId>(id, k);
      auto colon = addr.rfind(':');
      if (colon == std::string::npos) throw Error(ErrorCode::Config, "member address needs host:port");
      e.host = addr.substr(0, colon);
      e.port = parse_number<std::uint16_t>(addr.substr(colon + 1), k);
      e.signing_public = from_hex(sig);
      e.primary_public = from_hex(prim);
      if (e.signing_public.size() != crypto::kPublicKeySize || e.primary_public.size() != crypto::kPublicKeySize)
        throw Error(ErrorCode::Config, "member public keys must be 32 bytes");
      if (c.find(e.id)) throw Error(ErrorCode::Config, "duplicate member id " + id);
      c.roster.push_back(std::move(e));
    } else {
      throw Error(ErrorCode::Config, "unknown key " + k);
    }
  }
  if (c.roster.empty()) throw Error(ErrorCode::Config, "config has no members");
  if (c.leader && !c.find(*c.leader)) throw Error(ErrorCode::Config, "leader is not a member");
  return c;
}

std::string format_session_config(const SessionConfig& c) {
  std::ostringstream o;
  o << "quorum = " << c.quorum << "\n";
  o << "timeout_ms = " << c.timeout_ms << "\n";
  o << "rounds_budget = " << c.rounds_budget << "\n";
  o << "protocol = " << (c.protocol == ProtocolKind::shuffle ? "shuffle" : "bulk") << "\n";
  o << "msg_len = " << c.msg_len << "\n";
  if (c.leader) o << "leader = " << *c.leader << "\n";
  for (const auto& r : c.roster)
    o << "member = " << r.id << " " << r.host << ":" << r.port << " " << to_hex(r.signing_public) << " "
      << to_hex(r.primary_public) << "\n";
  return o.str();
}

SessionConfig load_session_config(const std::string& path) { return parse_session_config(read_file(path)); }

Credentials parse_key_file(std::string_view text) {
  Credentials c;
  bool have_id = false;
  for (const auto& [k, v] : key_values(text)) {
    if (k == "id") {
      c.id = parse_number<MemberId>(v, k);
      have_id = true;
    } else if (k == "signing_secret") c.signing.secret = from_hex(v);
    else if (k == "signing_public") c.signing.public_key = from_hex(v);
    else if (k == "primary_secret") c.primary.secret = from_hex(v);
    else if (k == "primary_public") c.primary.public_key = from_hex(v);
    else throw Error(ErrorCode::Config, "unknown key " + k);
  }
  if (!have_id) throw Error(ErrorCode::Config, "key file has no id");
  if (c.signing.secret.size() != crypto::kSigningSecretSize || c.signing.public_key.size() != crypto::kPublicKeySize)
    throw Error(ErrorCode::Config, "bad signing key widths");
  if (!crypto::matches(c.primary.secret, c.primary.public_key))
    throw Error(ErrorCode::Config, "primary secret does not match its public key");
  Bytes probe = to_bytes("key-file-check");
  if (!crypto::verify(c.signing.public_key, probe, crypto::sign(c.signing.secret, probe)))
    throw Error(ErrorCode::Config, "signing secret does not match its public key");
  return c;
}

std::string format_key_file(const Credentials& c) {
  std::ostringstream o;
  o << "id = " << c.id << "\n";
  o << "signing_secret = " << to_hex(c.signing.secret) << "\n";
  o << "signing_public = " << to_hex(c.signing.public_key) << "\n";
  o << "primary_secret = " << to_hex(c.primary.secret) << "\n";
  o << "primary_public = " << to_hex(c.primary.public_key) << "\n";
  return o.str();
}

Credentials load_key_file(const std::string& path) { return parse_key_file(read_file(path)); }

}  // namespace dissent
