#pragma once

#include <cstdint>
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
#include "mi9/risk_index.hpp"

namespace mi9 {

struct AriPolicy {
  ScoreSheet initial;
  std::vector<std::pair<std::int64_t, ScoreSheet>> reassessments;  // sorted by timestamp
};

// One policy document drives a run: conformance rules, per-agent grants,
// capability score sheets, containment tuning, and drift tuning. Grants under
// the "default" key apply to agents without an explicit entry.
struct Policy {
  std::map<std::string, AriPolicy> ari_scores;
  std::vector<RuleSpec> rules;
  std::map<std::string, std::vector<Permission>> permissions;
  AuthzConfig authz;
  LevelThresholds containment_thresholds;
  SeverityWeights severity_weights;
  std::map<std::string, ContextFactors> context_factors;
  DriftConfig drift;
  std::int64_t default_reorder_window_ms = 5000;
  std::size_t max_rule_steps = kDefaultMaxRuleSteps;
  int denial_burst_threshold = 3;
  std::int64_t denial_burst_window_ms = 60'000;

  std::vector<CompiledRule> compile_rules() const {
    std::vector<CompiledRule> out;
    out.reserve(rules.size());
    for (const RuleSpec& spec : rules) out.emplace_back(spec, max_rule_steps);
    return out;
  }

  static Policy load(const std::string& path);
  static Policy from_json(const nlohmann::json& j);
};

namespace detail {

[[noreturn]] inline void policy_fail(const std::string& where, const std::string& what) {
  throw Error(Errc::PolicyError, where + ": " + what);
}

inline PayloadValue scalar_from_json(const nlohmann::json& j, const std::string& where) {
  if (j.is_boolean()) return j.get<bool>();
  if (j.is_number_integer()) return j.get<std::int64_t>();
  if (j.is_number_float()) return j.get<double>();
  if (j.is_string()) return j.get<std::string>();
  policy_fail(where, "value must be a scalar");
}

inline Atom atom_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("field") || !j.contains("op") || !j.contains("value")) {
    policy_fail(where, "atom needs field/op/value");
  }
  Atom a;
  std::string field = j["field"].get<std::string>();
  if (field == "verb") {
    a.field = Atom::Field::Verb;
  } else if (field == "risk_tier") {
    a.field = Atom::Field::RiskTier;
  } else if (field == "category") {
    a.field = Atom::Field::Category;
  } else if (field == "role") {
    a.field = Atom::Field::Payload;
    a.payload_key = "role";
  } else if (field.rfind("payload.", 0) == 0) {
    a.field = Atom::Field::Payload;
    a.payload_key = field.substr(8);
    if (a.payload_key.empty()) policy_fail(where, "payload field needs a key");
  } else {
    policy_fail(where, "unknown field: " + field);
  }
  auto op = cmp_op_from_name(j["op"].get<std::string>());
  if (!op) policy_fail(where, "unknown op: " + j["op"].get<std::string>());
  a.op = *op;
  a.value = scalar_from_json(j["value"], where);
  return a;
}

inline Predicate predicate_from_json(const nlohmann::json& j, const std::string& where) {
  Predicate p;
  const nlohmann::json* atoms = &j;
  if (j.is_object() && j.contains("all")) atoms = &j["all"];
  if (!atoms->is_array()) policy_fail(where, "step must be an atom array or {\"all\": [...]}");
  for (const auto& aj : *atoms) p.atoms.push_back(atom_from_json(aj, where));
  if (p.atoms.empty()) throw Error(Errc::EmptyPredicate, where + ": step has no atoms");
  return p;
}

inline RuleSpec rule_from_json(const nlohmann::json& j, const std::string& where) {
  RuleSpec r;
  if (!j.contains("rule_id") || !j["rule_id"].is_string()) policy_fail(where, "rule needs rule_id");
  r.rule_id = j["rule_id"].get<std::string>();
  const std::string ctx = where + "/" + r.rule_id;
  r.priority = j.value("priority", 0);
  std::string mode = j.value("mode", "forbidden_sequence");
  if (mode == "forbidden_sequence") {
    r.mode = RuleMode::ForbiddenSequence;
  } else if (mode == "required_follow_up") {
    r.mode = RuleMode::RequiredFollowUp;
  } else {
    policy_fail(ctx, "unknown mode: " + mode);
  }
  std::string scope = j.value("scope", "agent");
  if (scope == "agent") {
    r.scope = RuleScope::Agent;
  } else if (scope == "coordinated") {
    r.scope = RuleScope::Coordinated;
  } else {
    policy_fail(ctx, "unknown scope: " + scope);
  }
  r.critical = j.value("critical", false);
  if (j.contains("window_ms")) r.window_ms = j["window_ms"].get<std::int64_t>();
  if (j.contains("deadline_ms")) r.deadline_ms = j["deadline_ms"].get<std::int64_t>();
  if (j.contains("correlate_on")) r.correlate_on = j["correlate_on"].get<std::string>();
  if (!j.contains("steps") || !j["steps"].is_array()) policy_fail(ctx, "rule needs steps");
  std::size_t step_no = 0;
  for (const auto& sj : j["steps"]) {
    r.steps.push_back({predicate_from_json(sj, ctx + "/step" + std::to_string(step_no++))});
  }
  return r;
}

inline Permission permission_from_json(const nlohmann::json& j, const std::string& where) {
  Permission p;
  if (!j.contains("resource") || !j["resource"].is_string()) {
    policy_fail(where, "permission needs a resource");
  }
  p.resource = j["resource"].get<std::string>();
  std::string effect = j.value("effect", "allow");
  if (effect == "allow") {
    p.effect = Effect::Allow;
  } else if (effect == "allow_read_only") {
    p.effect = Effect::AllowReadOnly;
  } else {
    policy_fail(where, "unknown effect: " + effect);
  }
  if (j.contains("constraints")) {
    for (const auto& cj : j["constraints"]) p.constraints.push_back(atom_from_json(cj, where));
  }
  if (j.contains("goal_scope")) p.goal_scope = j["goal_scope"].get<std::string>();
  if (j.contains("expires_at_ms")) p.expires_at_ms = j["expires_at_ms"].get<std::int64_t>();
  return p;
}

inline ScoreSheet sheet_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array() || j.size() != kRiskDimensions) {
    policy_fail(where, "scores must be a 3x4 integer matrix");
  }
  ScoreSheet sheet;
  for (int d = 0; d < kRiskDimensions; ++d) {
    const auto& row = j[static_cast<std::size_t>(d)];
    if (!row.is_array() || row.size() != kRiskCriteria) {
      policy_fail(where, "scores must be a 3x4 integer matrix");
    }
    for (int c = 0; c < kRiskCriteria; ++c) {
      const auto& cell = row[static_cast<std::size_t>(c)];
      if (!cell.is_number_integer()) policy_fail(where, "scores must be integers");
      sheet.scores[static_cast<std::size_t>(d)][static_cast<std::size_t>(c)] = cell.get<int>();
    }
  }
  try {
    sheet.validate();
  } catch (const Error& e) {
    policy_fail(where, e.what());
  }
  return sheet;
}

inline ContextFactors factors_from_json(const nlohmann::json& j, const std::string& where) {
  ContextFactors f;
  f.business_impact = j.value("business_impact", 2);
  f.financial_exposure = j.value("financial_exposure", 2);
  f.regulatory_scope = j.value("regulatory_scope", 2);
  f.recovery_complexity = j.value("recovery_complexity", 2);
  f.time_sensitivity = j.value("time_sensitivity", 2);
  try {
    f.validate();
  } catch (const Error& e) {
    policy_fail(where, e.what());
  }
  return f;
}

}  // namespace detail

inline Policy Policy::from_json(const nlohmann::json& j) {
  using detail::policy_fail;
  if (!j.is_object()) throw Error(Errc::PolicyError, "policy document must be a JSON object");
  Policy p;

  if (j.contains("defaults")) {
    const auto& d = j["defaults"];
    p.default_reorder_window_ms = d.value("reorder_window_ms", p.default_reorder_window_ms);
    p.max_rule_steps = d.value("max_rule_steps", p.max_rule_steps);
  }

  if (j.contains("ari_scores")) {
    for (auto it = j["ari_scores"].begin(); it != j["ari_scores"].end(); ++it) {
      const std::string where = "ari_scores/" + it.key();
      AriPolicy ap;
      if (!it.value().contains("scores")) policy_fail(where, "needs scores");
      ap.initial = detail::sheet_from_json(it.value()["scores"], where);
      if (it.value().contains("reassessments")) {
        for (const auto& rj : it.value()["reassessments"]) {
          if (!rj.contains("timestamp_ms") || !rj.contains("scores")) {
            policy_fail(where, "reassessment needs timestamp_ms and scores");
          }
          ap.reassessments.emplace_back(
              rj["timestamp_ms"].get<std::int64_t>(),
              detail::sheet_from_json(rj["scores"], where + "/reassessment"));
        }
        std::sort(ap.reassessments.begin(), ap.reassessments.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
      }
      p.ari_scores.emplace(it.key(), std::move(ap));
    }
  }

  if (j.contains("rules")) {
    if (!j["rules"].is_array()) policy_fail("rules", "must be an array");
    std::size_t i = 0;
    for (const auto& rj : j["rules"]) {
      p.rules.push_back(detail::rule_from_json(rj, "rules[" + std::to_string(i++) + "]"));
    }
  }

  if (j.contains("permissions")) {
    for (auto it = j["permissions"].begin(); it != j["permissions"].end(); ++it) {
      const std::string where = "permissions/" + it.key();
      if (!it.value().is_array()) policy_fail(where, "must be an array of grants");
      std::vector<Permission> grants;
      for (const auto& gj : it.value()) grants.push_back(detail::permission_from_json(gj, where));
      p.permissions.emplace(it.key(), std::move(grants));
    }
  }

  if (j.contains("authority_matrix")) {
    for (auto it = j["authority_matrix"].begin(); it != j["authority_matrix"].end(); ++it) {
      std::vector<std::string> patterns;
      for (const auto& pj : it.value()) patterns.push_back(pj.get<std::string>());
      p.authz.authority.delegable.emplace(it.key(), std::move(patterns));
    }
  }

  if (j.contains("write_class")) {
    p.authz.write_class.clear();
    for (const auto& wj : j["write_class"]) p.authz.write_class.push_back(wj.get<std::string>());
  }
  if (j.contains("read_only_variants")) {
    for (auto it = j["read_only_variants"].begin(); it != j["read_only_variants"].end(); ++it) {
      p.authz.read_only_variants.emplace(it.key(), it.value().get<std::string>());
    }
  }

  if (j.contains("authz")) {
    const auto& a = j["authz"];
    p.authz.default_delegation_expiry_ms =
        a.value("default_delegation_expiry_ms", p.authz.default_delegation_expiry_ms);
    p.denial_burst_threshold = a.value("denial_burst_threshold", p.denial_burst_threshold);
    p.denial_burst_window_ms = a.value("denial_burst_window_ms", p.denial_burst_window_ms);
  }

  if (j.contains("containment_thresholds")) {
    const auto& t = j["containment_thresholds"];
    p.containment_thresholds.monitoring = t.value("monitoring", p.containment_thresholds.monitoring);
    p.containment_thresholds.planning_intervention =
        t.value("planning_intervention", p.containment_thresholds.planning_intervention);
    p.containment_thresholds.tool_restriction =
        t.value("tool_restriction", p.containment_thresholds.tool_restriction);
    p.containment_thresholds.isolation = t.value("isolation", p.containment_thresholds.isolation);
  }

  if (j.contains("severity_weights")) {
    const auto& w = j["severity_weights"];
    p.severity_weights.drift_alert = w.value("drift_alert", p.severity_weights.drift_alert);
    p.severity_weights.violation = w.value("violation", p.severity_weights.violation);
    p.severity_weights.critical_violation =
        w.value("critical_violation", p.severity_weights.critical_violation);
    p.severity_weights.authz_denial_burst =
        w.value("authz_denial_burst", p.severity_weights.authz_denial_burst);
  }

  if (j.contains("context_factors")) {
    for (auto it = j["context_factors"].begin(); it != j["context_factors"].end(); ++it) {
      p.context_factors.emplace(
          it.key(), detail::factors_from_json(it.value(), "context_factors/" + it.key()));
    }
  }

  if (j.contains("drift")) {
    const auto& d = j["drift"];
    p.drift.window_events = d.value("window_events", p.drift.window_events);
    p.drift.min_baseline_events = d.value("min_baseline_events", p.drift.min_baseline_events);
    p.drift.reservoir_max = d.value("reservoir_max", p.drift.reservoir_max);
    p.drift.ewma_alpha = d.value("ewma_alpha", p.drift.ewma_alpha);
    p.drift.jsd_threshold_floor = d.value("jsd_threshold_floor", p.drift.jsd_threshold_floor);
    p.drift.bigram_threshold_floor =
        d.value("bigram_threshold_floor", p.drift.bigram_threshold_floor);
    p.drift.mwu_threshold_floor = d.value("mwu_threshold_floor", p.drift.mwu_threshold_floor);
    p.drift.adoption_margin = d.value("adoption_margin", p.drift.adoption_margin);
    p.drift.probation_events = d.value("probation_events", p.drift.probation_events);
    p.drift.min_probation_events = d.value("min_probation_events", p.drift.min_probation_events);
    p.drift.seed_check_events = d.value("seed_check_events", p.drift.seed_check_events);
    p.drift.seed_similarity = d.value("seed_similarity", p.drift.seed_similarity);
    p.drift.rng_seed = d.value("rng_seed", p.drift.rng_seed);
  }

  // Rules must compile; surface schema problems at load time, not mid-run.
  p.compile_rules();
  return p;
}

inline Policy Policy::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open policy file: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::PolicyError, path + ": " + e.what());
  }
  try {
    return from_json(j);
  } catch (const Error& e) {
    if (e.code() == Errc::PolicyError) throw Error(Errc::PolicyError, path + ": " + e.what());
    throw;
  }
}

}  // namespace mi9
