#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mi9/errors.hpp"
#include "mi9/event.hpp"
#include "mi9/predicate.hpp"
#include "mi9/trace.hpp"

namespace mi9 {

enum class RuleMode { ForbiddenSequence, RequiredFollowUp };
enum class RuleScope { Agent, Coordinated };

struct StepSpec {
  Predicate predicate;
};

// Declarative temporal rule. Steps match in order but need not be adjacent;
// non-matching events leave pattern state unchanged. For RequiredFollowUp the
// final step is the required one and deadline_ms bounds how long it may lag
// the anchor (the step before it). correlate_on restricts a pattern instance
// to events sharing one payload value.
struct RuleSpec {
  std::string rule_id;
  int priority = 0;  // lower wins when violations coincide
  RuleMode mode = RuleMode::ForbiddenSequence;
  RuleScope scope = RuleScope::Agent;
  bool critical = false;  // weighs as a critical violation in escalation scoring
  std::vector<StepSpec> steps;
  std::optional<std::int64_t> window_ms;    // total bound for completing the pattern
  std::optional<std::int64_t> deadline_ms;  // RequiredFollowUp only
  std::optional<std::string> correlate_on;
};

inline constexpr std::size_t kDefaultMaxRuleSteps = 10;

// Rules compile to linear chains: |steps|+1 states, state i meaning the first
// i steps have matched. Alternation is expressed as multiple rules.
class CompiledRule {
 public:
  explicit CompiledRule(RuleSpec spec, std::size_t max_steps = kDefaultMaxRuleSteps)
      : spec_(std::move(spec)) {
    if (spec_.steps.size() > max_steps) {
      throw Error(Errc::TooManySteps, spec_.rule_id + ": rules are capped at " +
                                          std::to_string(max_steps) + " steps");
    }
    if (spec_.steps.size() < 2) {
      throw Error(Errc::PolicyError, spec_.rule_id + ": rules need at least 2 steps");
    }
    for (const auto& step : spec_.steps) {
      step.predicate.validate();
    }
    if (spec_.mode == RuleMode::RequiredFollowUp && !spec_.deadline_ms) {
      throw Error(Errc::MissingDeadline, spec_.rule_id + ": required follow-up needs deadline_ms");
    }
  }

  const RuleSpec& spec() const { return spec_; }
  std::size_t step_count() const { return spec_.steps.size(); }
  std::size_t state_count() const { return spec_.steps.size() + 1; }
  std::size_t final_state() const { return spec_.steps.size(); }
  // For RequiredFollowUp, the state awaiting the required final step.
  std::size_t anchored_state() const { return spec_.steps.size() - 1; }

 private:
  RuleSpec spec_;
};

enum class ViolationKind { SequenceCompleted, DeadlineExpired };

inline std::string_view violation_kind_name(ViolationKind k) {
  return k == ViolationKind::SequenceCompleted ? "sequence_completed" : "deadline_expired";
}

struct Violation {
  std::string rule_id;
  std::string agent_id;  // pattern key: agent id, or delegation-component key for coordinated rules
  ViolationKind kind = ViolationKind::SequenceCompleted;
  std::vector<std::string> triggering_event_ids;
  std::vector<std::string> participant_agents;  // distinct agents behind the triggering events
  std::int64_t detected_at_ms = 0;
  bool critical = false;
  int priority = 0;
  bool coordinated = false;
};

// Live pattern state for one (rule, key, correlation value).
struct FsmInstance {
  std::string rule_id;
  std::string agent_id;  // pattern key
  std::size_t state_index = 0;
  std::int64_t anchor_timestamp_ms = -1;  // timestamp of the first matched step
  std::optional<PayloadValue> correlation_value;
  std::optional<std::int64_t> deadline_at_ms;
  // Matched steps must carry strictly increasing (timestamp, event_id); a
  // violation witness is therefore always a genuine in-order subsequence.
  std::pair<std::int64_t, std::string> last_match{-1, ""};
  std::vector<std::string> matched_event_ids;
  std::vector<std::string> matched_agents;
};

struct StepOutcome {
  enum class Kind { NoChange, Progressed, Violation } kind = Kind::NoChange;
  bool warning = false;        // pattern in progress; feeds predictive alerting
  bool reset_to_idle = false;  // required follow-up satisfied in time
  bool re_anchored = false;
};

struct ProgressWarning {
  std::string rule_id;
  std::string key;
  std::size_t state_index = 0;
  std::string event_id;
  std::int64_t at_ms = 0;
};

struct ConformanceOutput {
  std::vector<Violation> violations;
  std::vector<ProgressWarning> warnings;
  std::vector<std::pair<std::string, std::string>> compliant_completions;  // (rule_id, event_id)
};

// Per-key FSM evaluation over the released (sorted) stream. Processing one
// event costs one next-step predicate evaluation per live or idle rule (plus
// one re-anchor check for an awaiting follow-up), so the per-event cost is
// linear in the number of active patterns.
class ConformanceEngine {
 public:
  explicit ConformanceEngine(std::vector<CompiledRule> rules) : rules_(std::move(rules)) {
    std::sort(rules_.begin(), rules_.end(), [](const CompiledRule& a, const CompiledRule& b) {
      if (a.spec().priority != b.spec().priority) return a.spec().priority < b.spec().priority;
      return a.spec().rule_id < b.spec().rule_id;
    });
  }

  // Applies one released event under the given pattern key (agent id for
  // agent-scoped rules; callers pass the delegation-component key for
  // coordinated rules). Violations come out in (priority, rule_id) order.
  ConformanceOutput process(const Event& event, const std::string& key, RuleScope scope) {
    ConformanceOutput out;
    for (const auto& rule : rules_) {
      if (rule.spec().scope != scope) continue;
      apply_rule(rule, event, key, out);
    }
    return out;
  }

  // Emits DeadlineExpired for every awaiting follow-up whose deadline lies
  // strictly before the watermark; silently resets instances whose total
  // window has elapsed. Watermarks must not decrease.
  std::vector<Violation> expire_timeouts(std::int64_t watermark_ms) {
    std::vector<Violation> out;
    for (const auto& rule : rules_) {
      auto rit = instances_.find(rule.spec().rule_id);
      if (rit == instances_.end()) continue;
      auto& by_key = rit->second;
      for (auto kit = by_key.begin(); kit != by_key.end();) {
        auto& by_corr = kit->second;
        for (auto cit = by_corr.begin(); cit != by_corr.end();) {
          FsmInstance& inst = cit->second;
          bool erase = false;
          if (inst.deadline_at_ms && *inst.deadline_at_ms < watermark_ms) {
            out.push_back(make_violation(rule, inst, ViolationKind::DeadlineExpired, watermark_ms));
            erase = true;
          } else if (!inst.deadline_at_ms && rule.spec().window_ms &&
                     inst.anchor_timestamp_ms + *rule.spec().window_ms < watermark_ms) {
            erase = true;  // pattern window elapsed without completion
          }
          cit = erase ? by_corr.erase(cit) : std::next(cit);
        }
        kit = by_corr.empty() ? by_key.erase(kit) : std::next(kit);
      }
    }
    return out;
  }

  // Pattern state does not survive the session.
  void end_session(const std::string& key) {
    for (auto& [rule_id, by_key] : instances_) by_key.erase(key);
  }

  std::size_t live_instances(const std::string& key) const {
    std::size_t n = 0;
    for (const auto& [rule_id, by_key] : instances_) {
      auto it = by_key.find(key);
      if (it != by_key.end()) n += it->second.size();
    }
    return n;
  }

  std::uint64_t predicate_evaluations() const { return predicate_evaluations_; }
  const std::vector<CompiledRule>& rules() const { return rules_; }

  // Single-instance transition, exposed for direct testing. Assumes the event
  // already belongs to this instance's key and correlation.
  StepOutcome step(FsmInstance& inst, const CompiledRule& rule, const Event& event) {
    const RuleSpec& spec = rule.spec();
    StepOutcome out;
    if (event.order_key() <= std::pair<std::int64_t, std::string_view>{
                                 inst.last_match.first, inst.last_match.second}) {
      return out;  // stale relative to the last matched step
    }

    // An event that could both complete a follow-up and re-anchor it re-arms
    // the deadline instead (latest anchor wins).
    if (spec.mode == RuleMode::RequiredFollowUp && inst.state_index == rule.anchored_state() &&
        rule.step_count() >= 2) {
      const Predicate& anchor = spec.steps[rule.anchored_state() - 1].predicate;
      ++predicate_evaluations_;
      if (anchor.eval(event)) {
        inst.deadline_at_ms = event.timestamp_ms + *spec.deadline_ms;
        inst.last_match = {event.timestamp_ms, event.event_id};
        if (!inst.matched_event_ids.empty()) {
          inst.matched_event_ids.back() = event.event_id;
          inst.matched_agents.back() = event.agent_id;
        }
        out.kind = StepOutcome::Kind::Progressed;
        out.warning = true;
        out.re_anchored = true;
        return out;
      }
    }

    ++predicate_evaluations_;
    if (!spec.steps[inst.state_index].predicate.eval(event)) return out;

    inst.state_index++;
    inst.last_match = {event.timestamp_ms, event.event_id};
    inst.matched_event_ids.push_back(event.event_id);
    inst.matched_agents.push_back(event.agent_id);
    if (inst.state_index == 1) inst.anchor_timestamp_ms = event.timestamp_ms;

    if (spec.mode == RuleMode::RequiredFollowUp) {
      if (inst.state_index == rule.final_state()) {
        out.kind = StepOutcome::Kind::Progressed;
        out.reset_to_idle = true;  // follow-up arrived in time
        return out;
      }
      if (inst.state_index == rule.anchored_state()) {
        inst.deadline_at_ms = event.timestamp_ms + *spec.deadline_ms;
      }
    } else if (inst.state_index == rule.final_state()) {
      out.kind = StepOutcome::Kind::Violation;
      return out;
    }
    out.kind = StepOutcome::Kind::Progressed;
    out.warning = inst.state_index >= 1;
    return out;
  }

 private:
  void apply_rule(const CompiledRule& rule, const Event& event, const std::string& key,
                  ConformanceOutput& out) {
    const RuleSpec& spec = rule.spec();
    std::string corr_key;
    std::optional<PayloadValue> corr_value;
    if (spec.correlate_on) {
      const PayloadValue* v = event.find(*spec.correlate_on);
      if (!v) return;  // cannot belong to any instance of a correlated rule
      corr_value = *v;
      corr_key = payload_value_to_string(*v);
    }

    auto& by_corr = instances_[spec.rule_id][key];
    auto it = by_corr.find(corr_key);
    if (it == by_corr.end()) {
      // Idle: only the first step can match.
      ++predicate_evaluations_;
      if (!spec.steps[0].predicate.eval(event)) return;
      FsmInstance inst;
      inst.rule_id = spec.rule_id;
      inst.agent_id = key;
      inst.state_index = 1;
      inst.anchor_timestamp_ms = event.timestamp_ms;
      inst.correlation_value = corr_value;
      inst.last_match = {event.timestamp_ms, event.event_id};
      inst.matched_event_ids.push_back(event.event_id);
      inst.matched_agents.push_back(event.agent_id);
      if (spec.mode == RuleMode::RequiredFollowUp && inst.state_index == rule.anchored_state()) {
        inst.deadline_at_ms = event.timestamp_ms + *spec.deadline_ms;
      }
      out.warnings.push_back({spec.rule_id, key, 1, event.event_id, event.timestamp_ms});
      by_corr.emplace(std::move(corr_key), std::move(inst));
      return;
    }

    FsmInstance& inst = it->second;
    StepOutcome step_out = step(inst, rule, event);
    switch (step_out.kind) {
      case StepOutcome::Kind::NoChange:
        return;
      case StepOutcome::Kind::Violation:
        out.violations.push_back(
            make_violation(rule, inst, ViolationKind::SequenceCompleted, event.timestamp_ms));
        by_corr.erase(it);
        return;
      case StepOutcome::Kind::Progressed:
        if (step_out.reset_to_idle) {
          out.compliant_completions.emplace_back(spec.rule_id, event.event_id);
          by_corr.erase(it);
          return;
        }
        if (step_out.warning) {
          out.warnings.push_back(
              {spec.rule_id, key, inst.state_index, event.event_id, event.timestamp_ms});
        }
        return;
    }
  }

  Violation make_violation(const CompiledRule& rule, const FsmInstance& inst, ViolationKind kind,
                           std::int64_t detected_at_ms) const {
    Violation v;
    v.rule_id = rule.spec().rule_id;
    v.agent_id = inst.agent_id;
    v.kind = kind;
    v.triggering_event_ids = inst.matched_event_ids;
    for (const auto& agent : inst.matched_agents) {
      if (std::find(v.participant_agents.begin(), v.participant_agents.end(), agent) ==
          v.participant_agents.end()) {
        v.participant_agents.push_back(agent);
      }
    }
    v.detected_at_ms = detected_at_ms;
    v.critical = rule.spec().critical;
    v.priority = rule.spec().priority;
    v.coordinated = rule.spec().scope == RuleScope::Coordinated;
    return v;
  }

  std::vector<CompiledRule> rules_;
  // rule_id -> key -> correlation -> instance; ordered maps keep every
  // traversal deterministic.
  std::map<std::string, std::map<std::string, std::map<std::string, FsmInstance>>> instances_;
  std::uint64_t predicate_evaluations_ = 0;
};

}  // namespace mi9
