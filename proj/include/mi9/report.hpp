#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mi9/authorization.hpp"
#include "mi9/conformance.hpp"
#include "mi9/containment.hpp"
#include "mi9/drift.hpp"
#include "mi9/errors.hpp"

namespace mi9 {

struct ViolationRecord {
  std::string violation_id;
  std::string rule_id;
  std::string agent_id;  // pattern key
  std::vector<std::string> participant_agents;
  std::string kind;
  std::vector<std::string> triggering_event_ids;
  std::int64_t detected_at_ms = 0;
  bool critical = false;
  int priority = 0;
  bool coordinated = false;
};

struct DecisionRecord {
  std::string decision_id;
  std::string event_id;
  std::string agent_id;
  std::string verb;
  std::string resource;
  std::string verdict;
  std::string reason_code;
  std::string reason;
  std::int64_t at_ms = 0;
  bool suppressed = false;          // enforce mode kept the event from later monitors
  bool simulated_response = false;  // isolation substituted an inert response
  std::uint64_t grant_id = 0;
};

struct DelegationLogRecord {
  std::string record_id;
  std::string event_id;
  std::string parent;
  std::string child;
  std::vector<std::string> resources;
  bool ok = false;
  std::string reason_code;
  std::string detail;
  std::vector<std::uint64_t> grant_ids;
  std::int64_t at_ms = 0;
};

struct EscalationRecord {
  std::string escalation_id;
  std::string agent_id;
  std::string from_level;
  std::string to_level;
  double score = 0;
  std::vector<std::pair<std::string, std::string>> signals;  // (kind, id)
  std::optional<std::string> cascaded_from;
  std::int64_t at_ms = 0;
};

struct DriftRecord {
  std::string signal_id;
  DriftSignal signal;
};

struct GoalShiftRecord {
  std::string record_id;
  GoalShiftResult result;
};

struct WarningRecord {
  std::string warning_id;
  std::string kind;  // fsm_progress | unknown_verb | late_event
  std::string agent_id;
  std::string rule_id;
  std::size_t state_index = 0;
  std::string event_id;
  std::int64_t at_ms = 0;
};

struct InterventionRecord {
  std::string intervention_id;
  std::string kind;  // planning_block | human_checkpoint | simulated_response |
                     // enhanced_monitoring | tier_reassessment | baseline_seeded |
                     // session_termination_marker | release
  std::string agent_id;
  std::string event_id;
  std::string detail;
  std::int64_t at_ms = 0;
};

struct PermissionChangeRecord {
  std::string record_id;
  std::string agent_id;
  std::string resource;
  std::string action;   // retained | narrowed | revoked
  std::string trigger;  // goal_change | tier_reassessment | containment_change | drift_alert
  std::int64_t at_ms = 0;
};

struct CausalChain {
  std::string cognitive_event_id;
  std::string action_event_id;
  std::string violating_event_id;
  std::string effect_ref;  // record id of the resulting decision/escalation/intervention
  bool complete = false;
};

// One claimed detection, the unit the evaluation metrics are computed over.
struct DetectionRecord {
  std::string detection_id;
  std::string source;          // conformance | authz | drift
  std::string kind;            // sequence_completed | deadline_expired | deny |
                               // escalation_attempt | drift_alert | goal_shift_suspicious
  std::string rule_or_signal;  // e.g. "rule:dual-control-transfer", "authz:deny"
  std::string agent_id;
  std::vector<std::string> event_ids;
  std::int64_t at_ms = 0;        // when the engine flagged it
  std::int64_t commit_ts = 0;    // when the violating behavior committed
  std::string commit_event_id;
  CausalChain chain;
  bool preceded_by_warning = false;
  bool prevented = false;
};

// Lightweight reference used for predictive-alerting checks.
struct WarningRef {
  std::string agent_id;
  std::int64_t at_ms = 0;
  std::string event_id;
};

namespace detail {

inline nlohmann::ordered_json to_json(const ViolationRecord& r) {
  nlohmann::ordered_json j;
  j["violation_id"] = r.violation_id;
  j["rule_id"] = r.rule_id;
  j["agent_id"] = r.agent_id;
  j["participant_agents"] = r.participant_agents;
  j["kind"] = r.kind;
  j["triggering_event_ids"] = r.triggering_event_ids;
  j["detected_at_ms"] = r.detected_at_ms;
  j["critical"] = r.critical;
  j["priority"] = r.priority;
  j["coordinated"] = r.coordinated;
  return j;
}

inline nlohmann::ordered_json to_json(const DecisionRecord& r) {
  nlohmann::ordered_json j;
  j["decision_id"] = r.decision_id;
  j["event_id"] = r.event_id;
  j["agent_id"] = r.agent_id;
  j["verb"] = r.verb;
  j["resource"] = r.resource;
  j["verdict"] = r.verdict;
  j["reason_code"] = r.reason_code;
  j["reason"] = r.reason;
  j["at_ms"] = r.at_ms;
  j["suppressed"] = r.suppressed;
  j["simulated_response"] = r.simulated_response;
  if (r.grant_id) j["grant_id"] = r.grant_id;
  return j;
}

inline nlohmann::ordered_json to_json(const DelegationLogRecord& r) {
  nlohmann::ordered_json j;
  j["record_id"] = r.record_id;
  j["event_id"] = r.event_id;
  j["parent"] = r.parent;
  j["child"] = r.child;
  j["resources"] = r.resources;
  j["ok"] = r.ok;
  if (!r.reason_code.empty()) j["reason_code"] = r.reason_code;
  if (!r.detail.empty()) j["detail"] = r.detail;
  if (!r.grant_ids.empty()) j["grant_ids"] = r.grant_ids;
  j["at_ms"] = r.at_ms;
  return j;
}

inline nlohmann::ordered_json to_json(const EscalationRecord& r) {
  nlohmann::ordered_json j;
  j["escalation_id"] = r.escalation_id;
  j["agent_id"] = r.agent_id;
  j["from_level"] = r.from_level;
  j["to_level"] = r.to_level;
  j["score"] = r.score;
  nlohmann::ordered_json signals = nlohmann::ordered_json::array();
  for (const auto& [kind, id] : r.signals) {
    signals.push_back({{"kind", kind}, {"id", id}});
  }
  j["signals"] = signals;
  if (r.cascaded_from) j["cascaded_from"] = *r.cascaded_from;
  j["at_ms"] = r.at_ms;
  return j;
}

inline nlohmann::ordered_json to_json(const DriftRecord& r) {
  nlohmann::ordered_json j;
  j["signal_id"] = r.signal_id;
  j["agent_id"] = r.signal.agent_id;
  j["goal_id"] = r.signal.goal_id;
  j["method"] = std::string(drift_method_name(r.signal.method));
  j["metric"] = r.signal.metric;
  j["score"] = r.signal.score;
  j["threshold"] = r.signal.threshold;
  j["severity"] = std::string(drift_severity_name(r.signal.severity));
  j["window_first"] = r.signal.window_first;
  j["window_last"] = r.signal.window_last;
  j["window_event_ids"] = r.signal.window_event_ids;
  j["emitted_at_ms"] = r.signal.emitted_at_ms;
  return j;
}

inline nlohmann::ordered_json to_json(const GoalShiftRecord& r) {
  nlohmann::ordered_json j;
  j["record_id"] = r.record_id;
  j["agent_id"] = r.result.agent_id;
  j["old_goal"] = r.result.old_goal;
  j["declared_goal"] = r.result.declared_goal;
  j["verdict"] = r.result.verdict == GoalShiftVerdict::AdoptNewBaseline ? "adopt_new_baseline"
                                                                        : "flag_suspicious";
  if (r.result.jsd_vs_old) j["jsd_vs_old"] = *r.result.jsd_vs_old;
  j["matched_existing"] = r.result.matched_existing;
  j["goal_set_event_id"] = r.result.goal_set_event_id;
  j["at_ms"] = r.result.decided_at_ms;
  return j;
}

inline nlohmann::ordered_json to_json(const WarningRecord& r) {
  nlohmann::ordered_json j;
  j["warning_id"] = r.warning_id;
  j["kind"] = r.kind;
  j["agent_id"] = r.agent_id;
  if (!r.rule_id.empty()) {
    j["rule_id"] = r.rule_id;
    j["state_index"] = r.state_index;
  }
  j["event_id"] = r.event_id;
  j["at_ms"] = r.at_ms;
  return j;
}

inline nlohmann::ordered_json to_json(const InterventionRecord& r) {
  nlohmann::ordered_json j;
  j["intervention_id"] = r.intervention_id;
  j["kind"] = r.kind;
  j["agent_id"] = r.agent_id;
  if (!r.event_id.empty()) j["event_id"] = r.event_id;
  if (!r.detail.empty()) j["detail"] = r.detail;
  j["at_ms"] = r.at_ms;
  return j;
}

inline nlohmann::ordered_json to_json(const PermissionChangeRecord& r) {
  nlohmann::ordered_json j;
  j["record_id"] = r.record_id;
  j["agent_id"] = r.agent_id;
  j["resource"] = r.resource;
  j["action"] = r.action;
  j["trigger"] = r.trigger;
  j["at_ms"] = r.at_ms;
  return j;
}

inline nlohmann::ordered_json to_json(const DetectionRecord& r) {
  nlohmann::ordered_json j;
  j["detection_id"] = r.detection_id;
  j["source"] = r.source;
  j["kind"] = r.kind;
  j["rule_or_signal"] = r.rule_or_signal;
  j["agent_id"] = r.agent_id;
  j["event_ids"] = r.event_ids;
  j["at_ms"] = r.at_ms;
  j["commit_ts"] = r.commit_ts;
  j["commit_event_id"] = r.commit_event_id;
  nlohmann::ordered_json chain;
  chain["cognitive_event_id"] = r.chain.cognitive_event_id;
  chain["action_event_id"] = r.chain.action_event_id;
  chain["violating_event_id"] = r.chain.violating_event_id;
  chain["effect_ref"] = r.chain.effect_ref;
  chain["complete"] = r.chain.complete;
  j["causal_chain"] = chain;
  j["preceded_by_warning"] = r.preceded_by_warning;
  j["prevented"] = r.prevented;
  return j;
}

}  // namespace detail

// All run outputs, buffered and written once at the end so every log file is
// sorted by (timestamp, event id) with stable ties, byte-identical across
// replays of the same trace.
class RunReport {
 public:
  std::vector<ViolationRecord> violations;
  std::vector<DecisionRecord> decisions;
  std::vector<DelegationLogRecord> delegations;
  std::vector<EscalationRecord> escalations;
  std::vector<DriftRecord> drift_signals;
  std::vector<GoalShiftRecord> goal_shifts;
  std::vector<WarningRecord> warnings;
  std::vector<InterventionRecord> interventions;
  std::vector<PermissionChangeRecord> permission_changes;
  std::vector<DetectionRecord> detections;

  std::string trace_id;
  std::vector<std::string> trace_paths;
  std::string mode = "observe";
  std::int64_t reorder_window_ms = 0;
  std::uint64_t events_total = 0;
  std::uint64_t events_late = 0;
  std::uint64_t events_suppressed = 0;
  std::map<std::string, std::string> final_levels;  // agent -> level name
  std::map<std::string, int> final_tiers;

  std::vector<WarningRef> warning_refs() const {
    std::vector<WarningRef> out;
    for (const auto& w : warnings) {
      if (w.kind == "fsm_progress") out.push_back({w.agent_id, w.at_ms, w.event_id});
    }
    for (const auto& d : drift_signals) {
      out.push_back({d.signal.agent_id, d.signal.emitted_at_ms, d.signal.window_last});
    }
    return out;
  }

  void write_directory(const std::string& dir) const {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    write_sorted(dir + "/violations.jsonl", violations,
                 [](const ViolationRecord& r) { return key(r.detected_at_ms, first(r.triggering_event_ids)); });
    write_sorted(dir + "/decisions.jsonl", decisions,
                 [](const DecisionRecord& r) { return key(r.at_ms, r.event_id); });
    write_sorted(dir + "/delegations.jsonl", delegations,
                 [](const DelegationLogRecord& r) { return key(r.at_ms, r.event_id); });
    write_sorted(dir + "/escalations.jsonl", escalations,
                 [](const EscalationRecord& r) { return key(r.at_ms, r.agent_id); });
    write_sorted(dir + "/drift.jsonl", drift_signals,
                 [](const DriftRecord& r) { return key(r.signal.emitted_at_ms, r.signal.window_last); });
    write_sorted(dir + "/goal_shifts.jsonl", goal_shifts,
                 [](const GoalShiftRecord& r) { return key(r.result.decided_at_ms, r.result.goal_set_event_id); });
    write_sorted(dir + "/warnings.jsonl", warnings,
                 [](const WarningRecord& r) { return key(r.at_ms, r.event_id); });
    write_sorted(dir + "/interventions.jsonl", interventions,
                 [](const InterventionRecord& r) { return key(r.at_ms, r.event_id); });
    write_sorted(dir + "/permission_changes.jsonl", permission_changes,
                 [](const PermissionChangeRecord& r) { return key(r.at_ms, r.agent_id); });
    write_sorted(dir + "/detections.jsonl", detections,
                 [](const DetectionRecord& r) { return key(r.at_ms, r.commit_event_id); });

    nlohmann::ordered_json summary;
    summary["trace_id"] = trace_id;
    summary["trace_paths"] = trace_paths;
    summary["mode"] = mode;
    summary["reorder_window_ms"] = reorder_window_ms;
    summary["events_total"] = events_total;
    summary["events_late"] = events_late;
    summary["events_suppressed"] = events_suppressed;
    summary["detections_total"] = detections.size();
    summary["violations_total"] = violations.size();
    nlohmann::ordered_json agents = nlohmann::ordered_json::object();
    for (const auto& [agent, level] : final_levels) {
      nlohmann::ordered_json a;
      a["final_level"] = level;
      auto tier = final_tiers.find(agent);
      if (tier != final_tiers.end()) a["tier"] = tier->second;
      agents[agent] = a;
    }
    summary["agents"] = agents;
    std::ofstream out(dir + "/summary.json");
    if (!out) throw Error(Errc::IoError, "cannot write " + dir + "/summary.json");
    out << summary.dump(2) << "\n";
  }

  static std::vector<DetectionRecord> load_detections(const std::string& dir) {
    std::vector<DetectionRecord> out;
    std::ifstream in(dir + "/detections.jsonl");
    if (!in) throw Error(Errc::IoError, "cannot open " + dir + "/detections.jsonl");
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      nlohmann::json j = nlohmann::json::parse(line);
      DetectionRecord r;
      r.detection_id = j.value("detection_id", "");
      r.source = j.value("source", "");
      r.kind = j.value("kind", "");
      r.rule_or_signal = j.value("rule_or_signal", "");
      r.agent_id = j.value("agent_id", "");
      for (const auto& id : j.value("event_ids", nlohmann::json::array())) {
        r.event_ids.push_back(id.get<std::string>());
      }
      r.at_ms = j.value("at_ms", static_cast<std::int64_t>(0));
      r.commit_ts = j.value("commit_ts", static_cast<std::int64_t>(0));
      r.commit_event_id = j.value("commit_event_id", "");
      if (j.contains("causal_chain")) {
        const auto& c = j["causal_chain"];
        r.chain.cognitive_event_id = c.value("cognitive_event_id", "");
        r.chain.action_event_id = c.value("action_event_id", "");
        r.chain.violating_event_id = c.value("violating_event_id", "");
        r.chain.effect_ref = c.value("effect_ref", "");
        r.chain.complete = c.value("complete", false);
      }
      r.preceded_by_warning = j.value("preceded_by_warning", false);
      r.prevented = j.value("prevented", false);
      out.push_back(std::move(r));
    }
    return out;
  }

  static std::vector<WarningRef> load_warning_refs(const std::string& dir) {
    std::vector<WarningRef> out;
    auto read = [&](const std::string& path, const char* agent_key, const char* ts_key,
                    const char* id_key, const char* filter_key, const char* filter_value) {
      std::ifstream in(path);
      if (!in) return;
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        if (filter_key && j.value(filter_key, std::string()) != filter_value) continue;
        out.push_back({j.value(agent_key, std::string()),
                       j.value(ts_key, static_cast<std::int64_t>(0)),
                       j.value(id_key, std::string())});
      }
    };
    read(dir + "/warnings.jsonl", "agent_id", "at_ms", "event_id", "kind", "fsm_progress");
    read(dir + "/drift.jsonl", "agent_id", "emitted_at_ms", "window_last", nullptr, nullptr);
    return out;
  }

  static std::string load_trace_id(const std::string& dir) {
    std::ifstream in(dir + "/summary.json");
    if (!in) throw Error(Errc::IoError, "cannot open " + dir + "/summary.json");
    nlohmann::json j = nlohmann::json::parse(in);
    return j.value("trace_id", std::string());
  }

 private:
  static std::pair<std::int64_t, std::string> key(std::int64_t ts, std::string id) {
    return {ts, std::move(id)};
  }

  static std::string first(const std::vector<std::string>& ids) {
    return ids.empty() ? std::string() : ids.front();
  }

  template <typename Rec, typename KeyFn>
  static void write_sorted(const std::string& path, const std::vector<Rec>& records, KeyFn key_fn) {
    std::vector<std::size_t> order(records.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return key_fn(records[a]) < key_fn(records[b]);
    });
    std::ofstream out(path);
    if (!out) throw Error(Errc::IoError, "cannot write " + path);
    for (std::size_t idx : order) out << detail::to_json(records[idx]).dump() << "\n";
  }
};

}  // namespace mi9
