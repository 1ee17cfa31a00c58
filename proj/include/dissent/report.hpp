#pragma once

// Line-delimited JSON records, one per protocol run.

#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

#include "dissent/node.hpp"
#include "dissent/runner.hpp"
#include "dissent/tcp.hpp"

namespace dissent {

struct ReportMeta {
  std::uint64_t run = 0;    // index within the invocation
  std::uint32_t round = 0;  // index within the wrapper session
  std::uint64_t seed = 0;
  std::optional<bool> delivered;
  std::string transport = "sim";
};

nlohmann::json verdict_json(const BlameVerdict& v);
nlohmann::json outcome_json(const NodeOutcome& o);
nlohmann::json counters_json(const PhaseCounters& c);
nlohmann::json run_report(const RoundRun& run, const ReportMeta& meta);

// One member's view of a TCP round.
nlohmann::json tcp_round_report(const TcpRoundRecord& rec, MemberId self, const ReportMeta& meta);

// Exit status for a final outcome: 0 completed, 3 blamed, 4 stalled.
int exit_code_for(RoundStatus s);

}  // namespace dissent
