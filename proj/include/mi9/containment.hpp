#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mi9/authorization.hpp"
#include "mi9/containment_level.hpp"
#include "mi9/errors.hpp"
#include "mi9/risk_index.hpp"

namespace mi9 {

// Five organization-defined context dimensions, each scored 1 (low) to 3
// (high): business impact, financial exposure, regulatory scope, recovery
// complexity, time sensitivity.
struct ContextFactors {
  int business_impact = 2;
  int financial_exposure = 2;
  int regulatory_scope = 2;
  int recovery_complexity = 2;
  int time_sensitivity = 2;

  void validate() const {
    for (int v : {business_impact, financial_exposure, regulatory_scope, recovery_complexity,
                  time_sensitivity}) {
      if (v < 1 || v > 3) throw Error(Errc::OutOfRange, "context factors must be in 1..3");
    }
  }

  int total() const {
    return business_impact + financial_exposure + regulatory_scope + recovery_complexity +
           time_sensitivity;
  }
};

inline constexpr int kMaxFactorTotal = 15;

enum class SignalKind { Violation, DriftAlert, AuthzDenialBurst };

inline std::string_view signal_kind_name(SignalKind k) {
  switch (k) {
    case SignalKind::Violation: return "violation";
    case SignalKind::DriftAlert: return "drift_alert";
    case SignalKind::AuthzDenialBurst: return "authz_denial_burst";
  }
  return "violation";
}

struct Signal {
  SignalKind kind = SignalKind::Violation;
  std::string id;  // violation id / drift signal id / burst marker
  bool critical = false;
};

struct SeverityWeights {
  double drift_alert = 0.45;
  double violation = 0.75;
  double critical_violation = 1.0;
  double authz_denial_burst = 0.45;

  double of(const Signal& s) const {
    switch (s.kind) {
      case SignalKind::Violation: return s.critical ? critical_violation : violation;
      case SignalKind::DriftAlert: return drift_alert;
      case SignalKind::AuthzDenialBurst: return authz_denial_burst;
    }
    return violation;
  }
};

struct LevelThresholds {
  double monitoring = 0.1;
  double planning_intervention = 0.3;
  double tool_restriction = 0.5;
  double isolation = 0.75;
};

// Risk-tier-weighted score: (tier/4) * (factor total/15) * strongest signal
// severity. Deterministic and linear in tier, so higher-tier agents receive
// stronger containment for equivalent signals.
inline double score_signals(const std::vector<Signal>& signals, RiskTier tier,
                            const ContextFactors& factors, const SeverityWeights& weights = {}) {
  if (signals.empty()) throw Error(Errc::OutOfRange, "scoring needs at least one signal");
  factors.validate();
  double max_severity = 0;
  for (const Signal& s : signals) max_severity = std::max(max_severity, weights.of(s));
  return (tier.value() / 4.0) * (factors.total() / static_cast<double>(kMaxFactorTotal)) *
         max_severity;
}

inline ContainmentLevel select_level(double score, const LevelThresholds& thresholds = {}) {
  if (score < 0.0 || score > 1.0) throw Error(Errc::OutOfRange, "containment score must be in [0,1]");
  if (score >= thresholds.isolation) return ContainmentLevel::ExecutionIsolation;
  if (score >= thresholds.tool_restriction) return ContainmentLevel::ToolRestriction;
  if (score >= thresholds.planning_intervention) return ContainmentLevel::PlanningIntervention;
  if (score >= thresholds.monitoring) return ContainmentLevel::Monitoring;
  return ContainmentLevel::None;
}

struct EscalationEvent {
  std::string agent_id;
  ContainmentLevel from_level = ContainmentLevel::None;
  ContainmentLevel to_level = ContainmentLevel::None;
  double score = 0;
  std::vector<Signal> contributing_signals;
  std::optional<std::string> cascaded_from;  // agent whose state change propagated here
  std::int64_t at_ms = 0;
};

// Tracks per-agent containment with ratchet semantics: levels never
// auto-decrease; only an explicit operator release lowers them.
class EscalationController {
 public:
  EscalationController(LevelThresholds thresholds = {}, SeverityWeights weights = {})
      : thresholds_(thresholds), weights_(weights) {}

  ContainmentLevel level_of(const std::string& agent_id) const {
    auto it = levels_.find(agent_id);
    return it == levels_.end() ? ContainmentLevel::None : it->second;
  }

  // Scores the signal batch and escalates when the selected level exceeds the
  // agent's current one.
  std::optional<EscalationEvent> ingest(const std::string& agent_id,
                                        const std::vector<Signal>& signals, RiskTier tier,
                                        const ContextFactors& factors, std::int64_t at_ms) {
    const double score = score_signals(signals, tier, factors, weights_);
    const ContainmentLevel selected = select_level(score, thresholds_);
    const ContainmentLevel current = level_of(agent_id);
    if (selected <= current) return std::nullopt;
    levels_[agent_id] = selected;
    EscalationEvent e;
    e.agent_id = agent_id;
    e.from_level = current;
    e.to_level = selected;
    e.score = score;
    e.contributing_signals = signals;
    e.at_ms = at_ms;
    return e;
  }

  // Tool restriction and above propagate down the delegation chain so a
  // contained parent cannot route around policy through its subagents.
  std::vector<EscalationEvent> cascade(const DelegationGraph& graph, const std::string& parent,
                                       std::int64_t at_ms) {
    std::vector<EscalationEvent> out;
    const ContainmentLevel parent_level = level_of(parent);
    if (parent_level < ContainmentLevel::ToolRestriction) return out;
    for (const std::string& descendant : graph.descendants(parent)) {
      const ContainmentLevel current = level_of(descendant);
      if (current >= ContainmentLevel::ToolRestriction) continue;
      levels_[descendant] = ContainmentLevel::ToolRestriction;
      EscalationEvent e;
      e.agent_id = descendant;
      e.from_level = current;
      e.to_level = ContainmentLevel::ToolRestriction;
      e.score = 0;
      e.cascaded_from = parent;
      e.at_ms = at_ms;
      out.push_back(std::move(e));
    }
    return out;
  }

  // A subagent violation places the delegating parent under at least
  // enhanced monitoring.
  std::optional<EscalationEvent> notify_parent(const std::string& parent, const std::string& child,
                                               std::int64_t at_ms) {
    const ContainmentLevel current = level_of(parent);
    if (current >= ContainmentLevel::Monitoring) return std::nullopt;
    levels_[parent] = ContainmentLevel::Monitoring;
    EscalationEvent e;
    e.agent_id = parent;
    e.from_level = current;
    e.to_level = ContainmentLevel::Monitoring;
    e.cascaded_from = child;
    e.at_ms = at_ms;
    return e;
  }

  // Coordinated multi-agent violation: every participant receives at least
  // planning intervention.
  std::vector<EscalationEvent> joint_containment(const std::vector<std::string>& participants,
                                                 const Signal& signal, std::int64_t at_ms) {
    std::vector<EscalationEvent> out;
    std::vector<std::string> sorted = participants;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    for (const std::string& agent : sorted) {
      const ContainmentLevel current = level_of(agent);
      if (current >= ContainmentLevel::PlanningIntervention) continue;
      levels_[agent] = ContainmentLevel::PlanningIntervention;
      EscalationEvent e;
      e.agent_id = agent;
      e.from_level = current;
      e.to_level = ContainmentLevel::PlanningIntervention;
      e.contributing_signals = {signal};
      e.at_ms = at_ms;
      out.push_back(std::move(e));
    }
    return out;
  }

  // Explicit operator de-escalation (human.release event).
  std::optional<EscalationEvent> release(const std::string& agent_id, std::int64_t at_ms) {
    const ContainmentLevel current = level_of(agent_id);
    if (current == ContainmentLevel::None) return std::nullopt;
    levels_[agent_id] = ContainmentLevel::None;
    EscalationEvent e;
    e.agent_id = agent_id;
    e.from_level = current;
    e.to_level = ContainmentLevel::None;
    e.at_ms = at_ms;
    return e;
  }

  const std::map<std::string, ContainmentLevel>& levels() const { return levels_; }
  const LevelThresholds& thresholds() const { return thresholds_; }
  const SeverityWeights& weights() const { return weights_; }

 private:
  LevelThresholds thresholds_;
  SeverityWeights weights_;
  std::map<std::string, ContainmentLevel> levels_;
};

}  // namespace mi9
