#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "dissent/bulk.hpp"
#include "dissent/tcp.hpp"
#include "dissent/wrapper.hpp"
#include "support.hpp"

using namespace dissent;
using namespace dissent::testing;

namespace {

struct Result {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Regularized upper incomplete gamma Q(a, x).
double gamma_q(double a, double x) {
  if (x <= 0) return 1.0;
  const double lg = std::lgamma(a);
  if (x < a + 1) {
    double term = 1.0 / a, sum = term;
    for (int n = 1; n < 1000; ++n) {
      term *= x / (a + n);
      sum += term;
      if (std::fabs(term) < std::fabs(sum) * 1e-15) break;
    }
    return 1.0 - sum * std::exp(-x + a * std::log(x) - lg);
  }
  double b = x + 1 - a, c = 1e300, d = 1 / b, h = d;
  for (int i = 1; i < 1000; ++i) {
    double an = -i * (i - a);
    b += 2;
    d = an * d + b;
    if (std::fabs(d) < 1e-300) d = 1e-300;
    c = b + an / c;
    if (std::fabs(c) < 1e-300) c = 1e-300;
    d = 1 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1) < 1e-15) break;
  }
  return std::exp(-x + a * std::log(x) - lg) * h;
}

double chi_square_p(double stat, int df) { return gamma_q(df / 2.0, stat / 2.0); }

// Solves the normal equations of an ordinary least-squares fit.
std::vector<double> least_squares(const std::vector<std::vector<double>>& x, const std::vector<double>& y) {
  const std::size_t k = x.front().size();
  std::vector<std::vector<double>> a(k, std::vector<double>(k + 1, 0.0));
  for (std::size_t r = 0; r < x.size(); ++r)
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) a[i][j] += x[r][i] * x[r][j];
      a[i][k] += x[r][i] * y[r];
    }
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < k; ++r)
      if (std::fabs(a[r][c]) > std::fabs(a[piv][c])) piv = r;
    std::swap(a[c], a[piv]);
    for (std::size_t r = 0; r < k; ++r) {
      if (r == c) continue;
      double f = a[r][c] / a[c][c];
      for (std::size_t j = c; j <= k; ++j) a[r][j] -= f * a[c][j];
    }
  }
  std::vector<double> coef(k);
  for (std::size_t i = 0; i < k; ++i) coef[i] = a[i][k] / a[i][i];
  return coef;
}

double max_relative_residual(const std::vector<std::vector<double>>& x, const std::vector<double>& y,
                             const std::vector<double>& coef) {
  double worst = 0;
  for (std::size_t r = 0; r < x.size(); ++r) {
    double fit = 0;
    for (std::size_t i = 0; i < coef.size(); ++i) fit += coef[i] * x[r][i];
    worst = std::max(worst, std::fabs(fit - y[r]) / y[r]);
  }
  return worst;
}

bool has_all(const std::set<MemberId>& big, const std::set<MemberId>& small) {
  return std::includes(big.begin(), big.end(), small.begin(), small.end());
}

Result integrity() {
  std::size_t runs = 0, ok = 0;
  for (std::size_t n = 3; n <= 8; ++n)
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      auto rng = crypto::Rng::from_u64(seed * 31 + n).fork("lengths");
      std::vector<std::size_t> lengths;
      for (std::size_t i = 0; i < n; ++i) lengths.push_back(rng.uniform(8193));
      auto spec = bulk_spec(lengths, seed * 31 + n);
      RoundRun run = run_round(spec);
      ++runs;
      bool good = run.status == RoundStatus::completed;
      for (const auto& [id, o] : run.outcomes) {
        std::vector<Bytes> got;
        for (const auto& [slot, m] : o.recovered) got.push_back(m);
        good = good && o.corrupted.empty() && sorted(got) == sorted(values(spec.messages));
      }
      if (good) ++ok;
    }
  return {ok == runs, fmt("%zu/%zu bulk runs returned every message bit-exactly to every member", ok, runs)};
}

Result accountability() {
  std::size_t runs = 0, ok = 0, honest_exposed = 0;
  std::string first_bad;
  auto score = [&](const std::string& label, bool good, const RoundRun& run, MemberId target) {
    ++runs;
    for (auto id : run.outcome.verdict.exposed)
      if (id != target) ++honest_exposed;
    if (good) ++ok;
    else if (first_bad.empty()) first_bad = label;
  };
  std::vector<std::string> rows;
  for (auto a : catalog_actions()) rows.push_back(to_string(a));
  rows.push_back("corrupt_own_slot");
  for (const auto& row : rows) {
    FaultStrategy probe = parse_fault(row + "@1");
    const bool bulk = probe.action == FaultAction::corrupt_slot_bits || probe.action == FaultAction::invalid_accusation;
    for (std::size_t n : {3u, 5u})
      for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const MemberId target = static_cast<MemberId>(seed % n + 1);
        const std::uint64_t s = 1000 + seed * 7 + n;
        RoundSpec spec = bulk ? bulk_spec(std::vector<std::size_t>(n, 96), s) : shuffle_spec(n, 64, s);
        spec.timeout_us = 2'000'000;
        FaultStrategy f = parse_fault(row + "@" + std::to_string(target));
        spec.plan.strategies.push_back(f);
        RoundRun run = run_round(spec);
        const auto& v = run.outcome.verdict;
        bool good;
        if (!f.exposable()) {
          good = run.status == RoundStatus::completed && v.empty() && run.outcome.corrupted.size() == 1 &&
                 run.outcome.recovered.size() == n - 1;
        } else if (f.action == FaultAction::go_silent) {
          std::set<MemberId> failed(run.outcome.failed.begin(), run.outcome.failed.end());
          good = run.status == RoundStatus::stalled && failed == std::set<MemberId>{target} && v.empty();
        } else {
          good = run.status == RoundStatus::blamed && has_all(v.exposed, {target});
          for (const auto& [id, o] : run.outcomes)
            if (id != target) good = good && o.status == RoundStatus::blamed && o.verdict.exposed == v.exposed;
        }
        score(fmt("%s n=%zu seed=%llu", row.c_str(), n, static_cast<unsigned long long>(seed)), good, run, target);
      }
  }
  return {ok == runs && honest_exposed == 0,
          fmt("%zu/%zu runs scored, honest members exposed: %zu%s%s", ok, runs, honest_exposed,
              first_bad.empty() ? "" : ", first miss: ", first_bad.c_str())};
}

Result uniformity() {
  std::vector<std::size_t> cells(24, 0);
  const std::size_t trials = 2400;
  for (std::uint64_t seed = 0; seed < trials; ++seed) {
    auto spec = shuffle_spec(4, 16, 50'000 + seed);
    spec.oracle = true;
    RoundRun run = run_round(spec);
    if (run.status != RoundStatus::completed) return {false, fmt("run %llu did not complete", (unsigned long long)seed)};
    std::vector<std::uint32_t> perm;
    for (const auto& [id, idx] : run.oracle->permutation) perm.push_back(idx);
    std::size_t code = 0;
    for (std::size_t i = 0; i < perm.size(); ++i) {
      std::size_t smaller = 0;
      for (std::size_t j = i + 1; j < perm.size(); ++j) smaller += perm[j] < perm[i];
      code = code * (perm.size() - i) + smaller;
    }
    ++cells.at(code);
  }
  const double expected = trials / 24.0;
  double stat = 0;
  for (auto c : cells) stat += (c - expected) * (c - expected) / expected;
  const double p = chi_square_p(stat, 23);
  return {p > 0.001, fmt("chi-square %.2f on 23 df, p = %.4f (threshold 0.001)", stat, p)};
}

Result bulk_bytes() {
  const std::size_t n = 8;
  std::string detail;
  bool pass = true;
  for (std::size_t total : {8192u, 65536u}) {
    std::vector<std::size_t> balanced(n, total / n), single(n, 0);
    single[0] = total;
    std::uint64_t sums[2] = {0, 0};
    int k = 0;
    for (const auto& lengths : {balanced, single}) {
      RoundRun run = run_round(bulk_spec(lengths, 77 + total));
      pass = pass && run.status == RoundStatus::completed && run.outcome.recovered.size() == n;
      for (const auto& [id, m] : run.members) {
        pass = pass && m.data_payload == total + 12 * n;
        sums[k] += m.data_payload;
      }
      ++k;
    }
    pass = pass && sums[0] == sums[1];
    detail += fmt("L_tot=%zu: balanced %llu, one-sender %llu per member (expected %zu); ", total,
                  (unsigned long long)(sums[0] / n), (unsigned long long)(sums[1] / n), total + 12 * n);
  }
  return {pass, detail};
}

std::uint64_t protocol_payload(const MemberReport& m) {
  std::uint64_t t = 0;
  for (const auto& [ph, b] : m.originated)
    if (ph != "control" && ph != "bundle") t += b;
  return t;
}

Result shuffle_bytes() {
  std::vector<std::vector<double>> lin, quad;
  std::vector<double> y;
  for (std::size_t n = 3; n <= 8; ++n)
    for (std::size_t len : {32u, 256u, 1024u}) {
      RoundRun run = run_round(shuffle_spec(n, len, 300 + n));
      if (run.status != RoundStatus::completed) return {false, "honest shuffle did not complete"};
      double sum = 0;
      for (const auto& [id, m] : run.members) sum += static_cast<double>(protocol_payload(m));
      const double nn = static_cast<double>(n), ll = static_cast<double>(len);
      y.push_back(sum / nn);
      lin.push_back({nn * ll, nn});
      quad.push_back({nn * ll, ll, nn * nn, nn, 1.0});
    }
  auto c = least_squares(lin, y);
  double r = max_relative_residual(lin, y, c);
  auto q = least_squares(quad, y);
  double rq = max_relative_residual(quad, y, q);
  return {r < 0.01, fmt("fit c1*N*L + c2*N: c1=%.3f c2=%.1f max residual %.2f%% (limit 1%%); diagnostic "
                        "a*N*L + b*L + c*N^2 + d*N + e: a=%.3f b=%.3f c=%.1f d=%.1f e=%.1f max residual %.3f%%",
                        c[0], c[1], r * 100, q[0], q[1], q[2], q[3], q[4], rq * 100)};
}

Result round_count() {
  bool pass = true;
  std::string detail;
  for (std::size_t n = 3; n <= 8; ++n) {
    RoundRun run = run_round(shuffle_spec(n, 64, 400 + n));
    pass = pass && run.status == RoundStatus::completed && run.protocol_rounds == n + 5;
    detail += fmt("N=%zu:%u ", n, run.protocol_rounds);
  }
  return {pass, detail + "(expected N+5)"};
}

Result replay() {
  std::size_t layers = 0, layer_ok = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const std::size_t n = 3 + seed % 4;
    auto spec = shuffle_spec(n, 8 + 40 * (seed % 5), 600 + seed);
    spec.oracle = true;
    RoundRun run = run_round(spec);
    if (run.status != RoundStatus::completed) return {false, "honest run did not complete"};
    auto ys = run.config.primary_publics();
    for (const auto& s : run.oracle->tap.submissions) {
      auto replayed = crypto::onion_layers(ys, s.inner, s.trace);
      for (std::size_t k = 0; k < n; ++k) {
        ++layers;
        bool good = replayed.size() == n + 1 && crypto::decrypt(spec.members[k].primary.secret, replayed[k]) ==
                                                    replayed[k + 1];
        if (k == 0) good = good && replayed[0] == s.outer;
        if (k + 1 == n) good = good && replayed[n] == s.inner;
        layer_ok += good;
      }
    }
  }

  std::size_t valid = 0, valid_ok = 0, fabricated = 0, fabricated_rejected = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto rng = crypto::Rng::from_u64(seed).fork("accusation-sweep");
    const std::size_t n = 3 + rng.uniform(4);
    std::vector<Bytes> msgs;
    for (std::size_t i = 0; i < n; ++i) msgs.push_back(rng.bytes(1 + rng.uniform(300)));
    RoundConfig config;
    config.nonce = to_bytes("accept-" + std::to_string(seed));
    config.protocol = ProtocolKind::bulk;
    config.leader = 1;
    auto creds = make_identities(n, 900 + seed);
    for (const auto& c : creds) config.participants.push_back(participant_of(c));
    std::vector<GeneratedDescriptor> gen;
    std::vector<std::optional<MessageDescriptor>> descriptors;
    for (std::size_t i = 0; i < n; ++i) {
      gen.push_back(generate_descriptor(config, i, msgs[i], rng));
      descriptors.push_back(gen.back().descriptor);
    }
    std::vector<std::optional<std::vector<SlotCiphertext>>> contributions;
    for (std::size_t j = 0; j < n; ++j) {
      std::vector<SlotCiphertext> v;
      for (std::size_t t = 0; t < n; ++t) {
        SlotCiphertext sc;
        sc.slot = static_cast<std::uint32_t>(t);
        sc.bits = t == j ? std::optional<Bytes>(gen[t].secrets.own_ciphertext)
                         : peer_contribution(gen[t].descriptor, j, creds[j].primary.secret);
        v.push_back(sc);
      }
      contributions.push_back(v);
    }
    const std::size_t victim = rng.uniform(n);
    std::size_t corrupter = rng.uniform(n - 1);
    if (corrupter >= victim) ++corrupter;
    auto& bits = *(*contributions[corrupter])[victim].bits;
    bits[rng.uniform(bits.size())] ^= static_cast<std::uint8_t>(1 + rng.uniform(255));

    Accusation a;
    a.accused = creds[corrupter].id;
    a.encrypted_seed = gen[victim].descriptor.encrypted_seeds[corrupter];
    a.seed = gen[victim].secrets.seeds[corrupter];
    a.randomness = gen[victim].secrets.seed_randomness[corrupter];
    ++valid;
    valid_ok += verify_accusation(config, descriptors, contributions, a) == victim;

    auto bad_r = a;
    bad_r.randomness[rng.uniform(bad_r.randomness.size())] ^= 1;
    auto bad_s = a;
    bad_s.seed[rng.uniform(bad_s.seed.size())] ^= 1;
    for (const auto& fake : {bad_r, bad_s}) {
      ++fabricated;
      fabricated_rejected += !verify_accusation(config, descriptors, contributions, fake).has_value();
    }
  }
  return {layer_ok == layers && valid_ok == valid && fabricated_rejected == fabricated,
          fmt("onion layers replayed %zu/%zu; valid accusations verified %zu/%zu; fabricated rejected %zu/%zu",
              layer_ok, layers, valid_ok, valid, fabricated_rejected, fabricated)};
}

Result serial_disruption() {
  SessionSpec s;
  s.protocol = ProtocolKind::shuffle;
  s.members = make_identities(5, 9);
  s.messages = random_messages(s.members, 32, 9);
  s.datum_length = 32;
  s.budget = 3;
  s.quorum = 3;
  s.seed = 9;
  s.net.seed = 9;
  s.timeout_us = 2'000'000;
  auto f1 = parse_fault("duplicate_entry@2");
  f1.round = 0;
  auto f2 = parse_fault("bad_secondary_key@4");
  f2.round = 1;
  s.plan.strategies = {f1, f2};
  DeliveryReport r = rerun_until_delivered(s);
  bool pass = r.delivered && r.rounds_used <= 3 && r.excluded == std::set<MemberId>{2, 4};
  return {pass, fmt("delivered=%d in %u rounds, excluded %zu members (expected 2 and 4)", r.delivered,
                    r.rounds_used, r.excluded.size())};
}

Result tcp_equivalence() {
  const std::uint64_t seed = 5;
  RoundSpec spec = shuffle_spec(3, 512, seed);
  RoundRun sim = run_round(spec);
  if (sim.status != RoundStatus::completed) return {false, "simulated run did not complete"};

  SessionConfig cfg;
  cfg.protocol = ProtocolKind::shuffle;
  cfg.msg_len = 512;
  cfg.timeout_ms = 3000;
  cfg.leader = 1;
  std::vector<int> fds;
  for (const auto& c : spec.members) {
    std::uint16_t port = 0;
    fds.push_back(bind_listener("127.0.0.1", 0, &port));
    cfg.roster.push_back(RosterEntry{c.id, "127.0.0.1", port, c.signing.public_key, c.primary.public_key});
  }
  std::vector<TcpSessionResult> results(3);
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < 3; ++i)
    threads.emplace_back([&, i] {
      TcpHostOptions o;
      o.session = cfg;
      o.creds = spec.members[i];
      o.message = spec.messages.at(spec.members[i].id);
      o.lead = i == 0;
      o.seed = seed;
      o.listen_fd = fds[i];
      o.fixed_nonce = sim.config.nonce;
      results[i] = run_tcp_session(o);
    });
  for (auto& t : threads) t.join();

  auto protocol_frames = [](const std::vector<Bytes>& emitted) {
    std::vector<Bytes> out;
    for (const auto& raw : emitted)
      if (Frame::decode(raw).is_protocol()) out.push_back(raw);
    return out;
  };
  bool pass = true;
  std::size_t frames = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    if (results[i].rounds.size() != 1) return {false, fmt("member %zu ran %zu rounds", i + 1, results[i].rounds.size())};
    auto a = protocol_frames(results[i].rounds[0].emitted);
    auto b = protocol_frames(sim.emitted.at(spec.members[i].id));
    pass = pass && a == b && results[i].rounds[0].config == sim.config;
    frames += b.size();
  }
  return {pass, fmt("%zu protocol frames compared across 3 members", frames)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::pair<const char*, std::function<Result()>>>> criteria{
      {"1", {"integrity sweep", integrity}},
      {"2", {"accountability matrix", accountability}},
      {"3", {"permutation uniformity", uniformity}},
      {"4a", {"bulk data-phase byte law", bulk_bytes}},
      {"4b", {"shuffle payload fit c1*N*L + c2*N", shuffle_bytes}},
      {"5", {"round-count law", round_count}},
      {"6", {"replay soundness", replay}},
      {"7", {"progress under serial disruption", serial_disruption}},
      {"8", {"tcp/simulator equivalence", tcp_equivalence}},
  };
  std::set<std::string> wanted(argv + 1, argv + argc);
  int failed = 0;
  for (const auto& [id, c] : criteria) {
    if (!wanted.empty() && !wanted.count(id)) continue;
    auto start = std::chrono::steady_clock::now();
    Result r;
    try {
      r = c.second();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s %s %s: %s [%.1fs]\n", r.pass ? "PASS" : "FAIL", id.c_str(), c.first, r.detail.c_str(), secs);
    std::fflush(stdout);
    failed += !r.pass;
  }
  return failed == 0 ? 0 : 1;
}
