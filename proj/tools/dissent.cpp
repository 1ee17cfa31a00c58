#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>

#include "dissent/fault.hpp"
#include "dissent/frame.hpp"
#include "dissent/report.hpp"
#include "dissent/runner.hpp"
#include "dissent/tcp.hpp"
#include "dissent/wrapper.hpp"

using namespace dissent;

namespace {

constexpr int kUsage = 2;

Bytes read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Usage, "cannot read " + path);
  return Bytes(std::istreambuf_iterator<char>(f), {});
}

ProtocolKind parse_protocol(const std::string& s) {
  if (s == "shuffle") return ProtocolKind::shuffle;
  if (s == "bulk") return ProtocolKind::bulk;
  throw Error(ErrorCode::Usage, "unknown protocol " + s);
}

Bytes random_message(std::uint64_t seed, MemberId id, std::size_t len) {
  return crypto::Rng::from_u64(seed).fork("message-" + std::to_string(id)).bytes(len);
}

struct SimArgs {
  std::size_t nodes = 4;
  std::vector<std::size_t> msg_len;
  std::vector<std::string> msg_file;
  std::string protocol = "shuffle";
  std::vector<std::string> faults;
  std::vector<std::string> blocks;
  std::uint64_t seed = 0;
  double latency_ms = 50;
  double bandwidth_bps = 5e6;
  double jitter_ms = 0;
  bool oracle = false;
  std::uint32_t budget = 1;
  std::uint64_t timeout_ms = 10'000;
  std::uint32_t quorum = 1;
  std::uint64_t runs = 1;
  std::optional<MemberId> intent;
};

int cmd_sim(const SimArgs& a) {
  if (a.nodes < 2) throw Error(ErrorCode::Usage, "--nodes must be at least 2");
  ProtocolKind protocol = parse_protocol(a.protocol);
  FaultPlan plan;
  for (const auto& f : a.faults) {
    try {
      plan.strategies.push_back(parse_fault(f));
    } catch (const Error& e) {
      throw Error(ErrorCode::Usage, e.what());
    }
  }
  std::vector<std::pair<MemberId, MemberId>> blocked;
  for (const auto& b : a.blocks) {
    auto colon = b.find(':');
    if (colon == std::string::npos) throw Error(ErrorCode::Usage, "--block takes A:B");
    blocked.emplace_back(static_cast<MemberId>(std::stoul(b.substr(0, colon))),
                         static_cast<MemberId>(std::stoul(b.substr(colon + 1))));
  }
  if (!a.msg_file.empty() && a.msg_file.size() != a.nodes && a.msg_file.size() != 1)
    throw Error(ErrorCode::Usage, "--msg-file takes one file or one per node");
  if (!a.msg_len.empty() && a.msg_len.size() != a.nodes && a.msg_len.size() != 1)
    throw Error(ErrorCode::Usage, "--msg-len takes one length or one per node");

  int code = 0;
  for (std::uint64_t r = 0; r < a.runs; ++r) {
    std::uint64_t seed = a.seed + r;
    SessionSpec spec;
    spec.protocol = protocol;
    spec.members = make_identities(a.nodes, seed);
    spec.quorum = a.quorum;
    spec.budget = a.budget;
    spec.intent = a.intent;
    spec.net.latency_us = static_cast<std::uint64_t>(a.latency_ms * 1000);
    spec.net.bandwidth_bps = static_cast<std::uint64_t>(a.bandwidth_bps);
    spec.net.jitter_us = static_cast<std::uint64_t>(a.jitter_ms * 1000);
    spec.net.seed = seed;
    spec.plan = plan;
    spec.seed = seed;
    spec.timeout_us = a.timeout_ms * 1000;
    spec.oracle = a.oracle;
    spec.blocked = blocked;
    for (std::size_t i = 0; i < a.nodes; ++i) {
      MemberId id = spec.members[i].id;
      if (!a.msg_file.empty()) {
        spec.messages[id] = read_file(a.msg_file[a.msg_file.size() == 1 ? 0 : i]);
      } else {
        std::size_t len = a.msg_len.empty() ? 1024 : a.msg_len[a.msg_len.size() == 1 ? 0 : i];
        spec.messages[id] = random_message(seed, id, len);
      }
    }
    if (protocol == ProtocolKind::shuffle) {
      std::size_t len = spec.messages.begin()->second.size();
      for (const auto& [id, m] : spec.messages)
        if (m.size() != len) throw Error(ErrorCode::Usage, "shuffle messages must share one length");
      spec.datum_length = len;
    }

    DeliveryReport report;
    try {
      report = rerun_until_delivered(spec);
    } catch (const BudgetExhausted& e) {
      report = e.report();
    }
    for (std::size_t i = 0; i < report.runs.size(); ++i) {
      ReportMeta meta;
      meta.run = r;
      meta.round = static_cast<std::uint32_t>(i);
      meta.seed = seed;
      if (i + 1 == report.runs.size()) meta.delivered = report.delivered;
      std::cout << run_report(report.runs[i], meta).dump() << "\n";
    }
    if (report.delivered) code = exit_code_for(RoundStatus::completed);
    else if (!report.runs.empty() && report.runs.back().status == RoundStatus::blamed && spec.budget == 1)
      code = exit_code_for(RoundStatus::blamed);
    else code = exit_code_for(RoundStatus::stalled);
  }
  std::cout.flush();
  return code;
}

struct TcpArgs {
  std::string config;
  std::string key;
  std::optional<std::size_t> msg_len;
  std::string msg_file;
  std::uint64_t seed = 0;
  std::string state;
  bool oracle = false;
  std::uint64_t connect_timeout_ms = 10'000;
  std::string nonce_hex;
  std::string fault;
};

int cmd_tcp(const TcpArgs& a, bool lead) {
  if (a.oracle) throw Error(ErrorCode::Usage, "--oracle is only available in the simulator");
  TcpHostOptions o;
  o.session = load_session_config(a.config);
  o.creds = load_key_file(a.key);
  o.lead = lead;
  o.seed = a.seed;
  o.state_file = a.state;
  o.connect_timeout_ms = a.connect_timeout_ms;
  if (!a.fault.empty()) {
    try {
      o.fault = parse_fault(a.fault);
    } catch (const Error& e) {
      throw Error(ErrorCode::Usage, e.what());
    }
    if (o.fault->target != o.creds.id) throw Error(ErrorCode::Usage, "--fault must target this member");
  }
  if (!a.nonce_hex.empty()) o.fixed_nonce = from_hex(a.nonce_hex);
  if (!a.msg_file.empty()) o.message = read_file(a.msg_file);
  else o.message = random_message(a.seed, o.creds.id, a.msg_len.value_or(o.session.msg_len));
  if (o.session.protocol == ProtocolKind::shuffle && o.message.size() != o.session.msg_len)
    throw Error(ErrorCode::Usage, "shuffle message must be exactly msg_len bytes");

  TcpSessionResult res = run_tcp_session(o);
  for (std::size_t i = 0; i < res.rounds.size(); ++i) {
    ReportMeta meta;
    meta.round = static_cast<std::uint32_t>(i);
    meta.seed = a.seed;
    meta.transport = "tcp";
    std::cout << tcp_round_report(res.rounds[i], o.creds.id, meta).dump() << "\n";
  }
  nlohmann::json summary = {{"transport", "tcp"},
                            {"member", o.creds.id},
                            {"session", lead ? "lead" : "node"},
                            {"rounds", res.rounds.size()},
                            {"delivered", res.delivered},
                            {"excluded", res.excluded},
                            {"lost", res.lost}};
  if (res.error) summary["error"] = to_string(*res.error);
  std::cout << summary.dump() << std::endl;
  if (res.rounds.empty()) return exit_code_for(RoundStatus::stalled);
  if (lead) {
    if (res.delivered) return 0;
    return o.session.rounds_budget == 1 ? exit_code_for(res.rounds.back().outcome.status)
                                        : exit_code_for(RoundStatus::stalled);
  }
  return exit_code_for(res.rounds.back().outcome.status);
}

struct KeygenArgs {
  std::size_t nodes = 3;
  std::string dir = ".";
  std::string host = "127.0.0.1";
  std::uint16_t base_port = 7100;
  std::optional<std::uint64_t> seed;
  std::string protocol = "shuffle";
  std::uint64_t msg_len = 1024;
  std::uint32_t quorum = 1;
  std::uint32_t budget = 1;
  std::uint64_t timeout_ms = 10'000;
};

int cmd_keygen(const KeygenArgs& a) {
  SessionConfig cfg;
  cfg.protocol = parse_protocol(a.protocol);
  cfg.msg_len = a.msg_len;
  cfg.quorum = a.quorum;
  cfg.rounds_budget = a.budget;
  cfg.timeout_ms = a.timeout_ms;
  cfg.leader = 1;
  std::filesystem::create_directories(a.dir);
  crypto::Rng os = crypto::Rng::from_os();
  for (std::size_t i = 0; i < a.nodes; ++i) {
    MemberId id = static_cast<MemberId>(i + 1);
    Credentials c;
    if (a.seed) {
      c = make_identity(id, *a.seed);
    } else {
      c.id = id;
      c.signing = crypto::keygen_signing(os);
      c.primary = crypto::keygen_encryption(os, crypto::KeyRole::primary);
    }
    cfg.roster.push_back(RosterEntry{id, a.host, static_cast<std::uint16_t>(a.base_port + i), c.signing.public_key,
                                     c.primary.public_key});
    auto path = std::filesystem::path(a.dir) / ("member-" + std::to_string(id) + ".key");
    std::ofstream f(path);
    f << format_key_file(c);
    if (!f) throw Error(ErrorCode::Config, "cannot write " + path.string());
    std::filesystem::permissions(path, std::filesystem::perms::owner_read | std::filesystem::perms::owner_write);
  }
  auto path = std::filesystem::path(a.dir) / "session.conf";
  std::ofstream f(path);
  f << format_session_config(cfg);
  if (!f) throw Error(ErrorCode::Config, "cannot write " + path.string());
  std::cout << path.string() << "\n";
  return 0;
}

void add_tcp_options(CLI::App* cmd, TcpArgs& a) {
  cmd->add_option("--config", a.config, "session config file")->required();
  cmd->add_option("--key", a.key, "member key file")->required();
  cmd->add_option("--msg-len", a.msg_len, "random message length (default: msg_len from config)");
  cmd->add_option("--msg-file", a.msg_file, "message to send");
  cmd->add_option("--seed", a.seed, "seed for node randomness");
  cmd->add_option("--connect-timeout-ms", a.connect_timeout_ms);
  cmd->add_flag("--oracle", a.oracle, "refused outside the simulator");
  cmd->add_option("--fault", a.fault, "STRATEGY[:PHASE]@MEMBER injected into this member (drills)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Accountable anonymous group messaging"};
  app.require_subcommand(0, 1);
  bool version = false;
  app.add_flag("--version", version, "print the wire protocol version");

  SimArgs sim;
  auto* sim_cmd = app.add_subcommand("sim", "run rounds in the deterministic network simulator");
  sim_cmd->add_option("--nodes", sim.nodes, "group size");
  sim_cmd->add_option("--msg-len", sim.msg_len, "message length, one value or one per node")->delimiter(',');
  sim_cmd->add_option("--msg-file", sim.msg_file, "message file, one or one per node");
  sim_cmd->add_option("--protocol", sim.protocol)->check(CLI::IsMember({"shuffle", "bulk"}));
  sim_cmd->add_option("--fault", sim.faults, "STRATEGY[:PHASE]@MEMBER");
  sim_cmd->add_option("--block", sim.blocks, "cut the direct link A:B");
  sim_cmd->add_option("--seed", sim.seed);
  sim_cmd->add_option("--latency-ms", sim.latency_ms);
  sim_cmd->add_option("--bandwidth-bps", sim.bandwidth_bps);
  sim_cmd->add_option("--jitter-ms", sim.jitter_ms);
  sim_cmd->add_flag("--oracle", sim.oracle, "include the permutation and ground-truth culprits");
  sim_cmd->add_option("--rounds-budget", sim.budget);
  sim_cmd->add_option("--timeout-ms", sim.timeout_ms);
  sim_cmd->add_option("--quorum", sim.quorum);
  sim_cmd->add_option("--runs", sim.runs, "independent sessions, seeds S..S+runs-1");
  sim_cmd->add_option("--intent", sim.intent, "only this member's message must be delivered");

  TcpArgs node, lead;
  auto* node_cmd = app.add_subcommand("node", "participate in TCP rounds");
  add_tcp_options(node_cmd, node);
  auto* lead_cmd = app.add_subcommand("lead", "lead TCP rounds");
  add_tcp_options(lead_cmd, lead);
  lead_cmd->add_option("--state", lead.state, "exclusion state file kept across restarts");
  lead_cmd->add_option("--nonce", lead.nonce_hex, "first round nonce (hex)");

  KeygenArgs kg;
  auto* kg_cmd = app.add_subcommand("keygen", "write a loopback session config and member key files");
  kg_cmd->add_option("--nodes", kg.nodes);
  kg_cmd->add_option("--dir", kg.dir);
  kg_cmd->add_option("--host", kg.host);
  kg_cmd->add_option("--base-port", kg.base_port);
  kg_cmd->add_option("--seed", kg.seed, "deterministic keys");
  kg_cmd->add_option("--protocol", kg.protocol)->check(CLI::IsMember({"shuffle", "bulk"}));
  kg_cmd->add_option("--msg-len", kg.msg_len);
  kg_cmd->add_option("--quorum", kg.quorum);
  kg_cmd->add_option("--rounds-budget", kg.budget);
  kg_cmd->add_option("--timeout-ms", kg.timeout_ms);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (version) {
      char buf[8];
      std::snprintf(buf, sizeof buf, "0x%02x", kWireVersion);
      std::cout << "wire version " << buf << "\n";
      return 0;
    }
    if (*sim_cmd) return cmd_sim(sim);
    if (*node_cmd) return cmd_tcp(node, false);
    if (*lead_cmd) return cmd_tcp(lead, true);
    if (*kg_cmd) return cmd_keygen(kg);
    std::cerr << app.help();
    return kUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << " (" << to_string(e.code()) << ")\n";
    switch (e.code()) {
      case ErrorCode::Usage:
      case ErrorCode::Config:
        return kUsage;
      case ErrorCode::QuorumUnmet:
      case ErrorCode::BudgetExhausted:
      case ErrorCode::ConnectionLost:
        return 4;
      default:
        return 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
}
