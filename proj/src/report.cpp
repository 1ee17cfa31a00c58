#include "dissent/report.hpp"

namespace dissent {

using nlohmann::json;

json verdict_json(const BlameVerdict& v) {
  json findings = json::array();
  for (const auto& f : v.findings)
    findings.push_back({{"member", f.member}, {"category", to_string(f.category)}, {"detail", f.detail}});
  return {{"exposed", v.exposed}, {"findings", findings}};
}

json outcome_json(const NodeOutcome& o) {
  json j = {{"status", to_string(o.status)}, {"failed", o.failed}, {"incomplete", o.incomplete},
            {"verdict", verdict_json(o.verdict)}};
  if (!o.recovered.empty() || !o.corrupted.empty() || o.accusation_round) {
    std::vector<std::uint32_t> slots;
    for (const auto& [s, m] : o.recovered) slots.push_back(s);
    j["recovered_slots"] = slots;
    j["corrupted_slots"] = o.corrupted;
    j["accusation_round"] = o.accusation_round;
    j["valid_accusations"] = o.valid_accusations;
    j["rejected_accusations"] = o.rejected_accusations;
  }
  return j;
}

json counters_json(const PhaseCounters& c) {
  json j = json::object();
  for (const auto& [k, v] : c) j[k] = v;
  return j;
}

json run_report(const RoundRun& run, const ReportMeta& meta) {
  json members = json::array();
  std::uint64_t sent = 0, received = 0, dropped = 0;
  for (const auto& [id, m] : run.members) {
    sent += m.counters.total_sent();
    received += m.counters.total_received();
    dropped += m.counters.dropped;
    json entry = {{"id", id},
                       {"status", to_string(m.status)},
                       {"sent", counters_json(m.counters.sent)},
                       {"received", counters_json(m.counters.received)},
                       {"dropped", m.counters.dropped},
                       {"originated_payload", counters_json(m.originated)},
                       {"frames", m.frames},
                       {"suspicions", m.suspicions}};
    if (run.config.protocol == ProtocolKind::bulk) entry["data_payload"] = m.data_payload;
    members.push_back(std::move(entry));
  }
  std::vector<MemberId> roster;
  for (const auto& p : run.config.participants) roster.push_back(p.id);
  json j = {{"run", meta.run},
            {"round", meta.round},
            {"seed", meta.seed},
            {"transport", meta.transport},
            {"protocol", run.config.protocol == ProtocolKind::shuffle ? "shuffle" : "bulk"},
            {"nonce", to_hex(run.config.nonce)},
            {"nodes", run.config.size()},
            {"leader", run.config.leader},
            {"roster", roster},
            {"outcome", to_string(run.status)},
            {"serial_rounds", run.protocol_rounds},
            {"transport_rounds", run.transport_rounds},
            {"sim_time_us", run.sim_time_us},
            {"trace_digest", to_hex(run.trace_digest)},
            {"verdict", verdict_json(run.outcome.verdict)},
            {"failed", run.outcome.failed},
            {"incomplete", run.outcome.incomplete},
            {"members", members},
            {"totals", {{"sent", sent}, {"received", received}, {"dropped", dropped}}}};
  if (run.config.protocol == ProtocolKind::bulk) {
    std::vector<std::uint32_t> slots;
    for (const auto& [s, m] : run.outcome.recovered) slots.push_back(s);
    j["recovered_slots"] = slots;
    j["corrupted_slots"] = run.outcome.corrupted;
    j["accusation_round"] = run.outcome.accusation_round;
  }
  if (meta.delivered) j["delivered"] = *meta.delivered;
  if (run.oracle) {
    json perm = json::object();
    for (const auto& [id, slot] : run.oracle->permutation) perm[std::to_string(id)] = slot;
    j["oracle"] = {{"permutation", perm}, {"culprits", run.oracle->culprits}, {"exposable", run.oracle->exposable}};
  }
  return j;
}

json tcp_round_report(const TcpRoundRecord& rec, MemberId self, const ReportMeta& meta) {
  std::vector<MemberId> roster;
  for (const auto& p : rec.config.participants) roster.push_back(p.id);
  json j = {{"run", meta.run},
            {"round", meta.round},
            {"seed", meta.seed},
            {"transport", meta.transport},
            {"protocol", rec.config.protocol == ProtocolKind::shuffle ? "shuffle" : "bulk"},
            {"nonce", to_hex(rec.config.nonce)},
            {"nodes", rec.config.size()},
            {"leader", rec.config.leader},
            {"roster", roster},
            {"member", self},
            {"outcome", to_string(rec.outcome.status)},
            {"verdict", verdict_json(rec.outcome.verdict)},
            {"failed", rec.outcome.failed},
            {"incomplete", rec.outcome.incomplete},
            {"sent", counters_json(rec.counters.sent)},
            {"received", counters_json(rec.counters.received)},
            {"dropped", rec.counters.dropped},
            {"frames", rec.emitted.size()},
            {"suspicions", rec.suspicions},
            {"delivered", rec.delivered}};
  if (rec.config.protocol == ProtocolKind::bulk) {
    std::vector<std::uint32_t> slots;
    for (const auto& [s, m] : rec.outcome.recovered) slots.push_back(s);
    j["recovered_slots"] = slots;
    j["corrupted_slots"] = rec.outcome.corrupted;
  }
  return j;
}

int exit_code_for(RoundStatus s) {
  switch (s) {
    case RoundStatus::completed: return 0;
    case RoundStatus::blamed: return 3;
    default: return 4;
  }
}

}  // namespace dissent
