#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mi9/authorization.hpp"
#include "mi9/conformance.hpp"
#include "mi9/containment.hpp"
#include "mi9/drift.hpp"
#include "mi9/policy.hpp"
#include "mi9/reorder.hpp"
#include "mi9/report.hpp"
#include "mi9/subscription.hpp"

namespace mi9 {

enum class EnforcementMode { Observe, Enforce };

// Replays or streams telemetry through the monitor pipeline:
// reorder buffer -> context maintenance -> subscription dispatch
// (authorization, conformance, drift) -> escalation.
//
// The engine processes the released stream on one logical worker. All
// mutable state is keyed per agent except the delegation graph and
// escalation levels, which are mutated only from this worker, so replays are
// deterministic and agent-sharded deployments remain possible.
class GovernanceEngine {
 public:
  GovernanceEngine(Policy policy, EnforcementMode mode = EnforcementMode::Observe,
                   std::optional<std::int64_t> reorder_window_ms = std::nullopt)
      : policy_(std::move(policy)),
        mode_(mode),
        buffer_(reorder_window_ms ? *reorder_window_ms : policy_.default_reorder_window_ms),
        conformance_(policy_.compile_rules()),
        authz_(policy_.authz),
        drift_(policy_.drift),
        controller_(policy_.containment_thresholds, policy_.severity_weights) {
    registry_.add({"authz", 10, {}, {EventCategory::Action, EventCategory::Coordination}});
    registry_.add({"conformance", 20, {}, {}});
    registry_.add({"drift", 30, {}, {}});
    report_.mode = mode_ == EnforcementMode::Observe ? "observe" : "enforce";
    report_.reorder_window_ms = buffer_.window_ms();
  }

  void note_unknown_verb(const Event& e) {
    WarningRecord w;
    w.warning_id = next_id("w", warning_seq_);
    w.kind = "unknown_verb";
    w.agent_id = e.agent_id;
    w.event_id = e.event_id;
    w.at_ms = e.timestamp_ms;
    report_.warnings.push_back(std::move(w));
  }

  void ingest(Event e) {
    report_.events_total++;
    for (ReleasedEvent& released : buffer_.push(std::move(e))) {
      process_released(released);
    }
  }

  // Flushes the reorder buffer, runs final deadline expiry at the maximum
  // observed timestamp, and settles pending goal-shift probations.
  void finish() {
    for (ReleasedEvent& released : buffer_.flush()) {
      process_released(released);
    }
    const std::int64_t final_watermark = std::max(buffer_.watermark_ms(), released_watermark_);
    run_expiry(final_watermark);

    for (const std::string& agent_id : drift_.agents_with_pending_probation()) {
      auto verdict = drift_.finish_agent(agent_id, final_watermark);
      if (verdict) {
        EventSignals signals;
        handle_shift_verdict(*verdict, final_watermark, signals);
        apply_signals(signals, final_watermark);
      }
    }

    report_.events_late = buffer_.late_count();
    for (const auto& [agent_id, ar] : runtimes_) {
      report_.final_levels[agent_id] =
          std::string(containment_level_name(controller_.level_of(agent_id)));
      report_.final_tiers[agent_id] = current_tier(ar).value();
    }
  }

  RunReport& report() { return report_; }
  const RunReport& report() const { return report_; }
  ContainmentLevel level_of(const std::string& agent_id) const {
    return controller_.level_of(agent_id);
  }
  const AuthorizationMonitor& authz() const { return authz_; }
  AuthorizationMonitor& authz() { return authz_; }
  const ConformanceEngine& conformance() const { return conformance_; }
  const DriftDetector& drift() const { return drift_; }
  DriftDetector& drift_detector() { return drift_; }
  const SubscriptionRegistry& registry() const { return registry_; }
  const std::string& goal_of(const std::string& agent_id) const {
    static const std::string empty;
    auto it = runtimes_.find(agent_id);
    return it == runtimes_.end() ? empty : it->second.goal;
  }

 private:
  struct AgentRuntime {
    std::string agent_id;
    std::string session_id;
    std::string goal;
    std::optional<RiskAssessment> assessment;
    std::vector<std::pair<std::int64_t, ScoreSheet>> pending_reassessments;
    int producer_tier = 1;
    std::uint64_t seq = 0;
    std::string last_cognitive_id;
    std::int64_t last_cognitive_ts = -1;
    std::string last_action_id;
    std::int64_t last_action_ts = -1;
    std::deque<std::int64_t> deny_times;
  };

  struct EventSignals {
    // agent -> contributing signals collected while handling one event.
    std::map<std::string, std::vector<Signal>> by_agent;
    std::vector<std::size_t> detections_created;  // indexes into report_.detections
    std::vector<std::pair<std::string, std::string>> parent_notifications;  // (parent, child)
    std::vector<std::pair<std::vector<std::string>, Signal>> joint_groups;
  };

  static std::string next_id(const char* prefix, std::uint64_t& seq) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%06llu", prefix,
                  static_cast<unsigned long long>(++seq));
    return buf;
  }

  RiskTier current_tier(const AgentRuntime& ar) const {
    return ar.assessment ? ar.assessment->tier : RiskTier(std::clamp(ar.producer_tier, 1, 4));
  }

  ContextFactors factors_for(const std::string& agent_id) const {
    auto it = policy_.context_factors.find(agent_id);
    if (it != policy_.context_factors.end()) return it->second;
    it = policy_.context_factors.find("default");
    if (it != policy_.context_factors.end()) return it->second;
    return {};
  }

  AgentRuntime& runtime(const Event& e) {
    auto it = runtimes_.find(e.agent_id);
    if (it != runtimes_.end()) return it->second;

    AgentRuntime ar;
    ar.agent_id = e.agent_id;
    ar.session_id = e.session_id;
    auto ari = policy_.ari_scores.find(e.agent_id);
    if (ari != policy_.ari_scores.end()) {
      ar.assessment = compute_agency_risk(ari->second.initial);
      ar.pending_reassessments = ari->second.reassessments;
    }

    AgentContext& ctx = authz_.register_agent(e.agent_id);
    ctx.risk_tier = ar.assessment ? ar.assessment->tier.value() : e.risk_tier;
    if (!authz_.permissions(e.agent_id).empty()) {
      // Grants already arrived through delegation.
    } else {
      auto grants = policy_.permissions.find(e.agent_id);
      if (grants == policy_.permissions.end()) grants = policy_.permissions.find("default");
      if (grants != policy_.permissions.end()) {
        for (const Permission& p : grants->second) authz_.grant_direct(e.agent_id, p);
      }
    }
    return runtimes_.emplace(e.agent_id, std::move(ar)).first->second;
  }

  void process_released(ReleasedEvent& released) {
    Event& e = released.event;
    if (released.late) {
      WarningRecord w;
      w.warning_id = next_id("w", warning_seq_);
      w.kind = "late_event";
      w.agent_id = e.agent_id;
      w.event_id = e.event_id;
      w.at_ms = e.timestamp_ms;
      report_.warnings.push_back(std::move(w));
    } else {
      released_watermark_ = std::max(released_watermark_, e.timestamp_ms);
    }

    // Deadlines expire strictly before the event at the watermark is applied,
    // so a follow-up landing exactly on its deadline still counts.
    run_expiry(released_watermark_);

    AgentRuntime& ar = runtime(e);
    ar.producer_tier = e.risk_tier;
    if (ar.session_id != e.session_id) {
      conformance_.end_session(e.agent_id);
      ar.session_id = e.session_id;
      ar.goal.clear();
      authz_.context(e.agent_id).goal_id.clear();
    }
    apply_reassessments(ar, e.timestamp_ms);

    // Stamp engine-maintained governance metadata. goal_id is the most recent
    // prior goal.set, so a goal.set event still carries the goal it replaces.
    if (ar.assessment) e.risk_tier = ar.assessment->tier.value();
    e.goal_id = ar.goal;
    ar.seq++;

    EventSignals signals;
    const ContainmentLevel level = controller_.level_of(e.agent_id);
    bool suppressed = false;

    if (level >= ContainmentLevel::PlanningIntervention &&
        (e.verb == "goal.set" || e.verb == "plan.start")) {
      InterventionRecord rec;
      rec.intervention_id = next_id("iv", intervention_seq_);
      rec.kind = "planning_block";
      rec.agent_id = e.agent_id;
      rec.event_id = e.event_id;
      rec.detail = "planning intervention active; " + e.verb + " rejected";
      rec.at_ms = e.timestamp_ms;
      report_.interventions.push_back(std::move(rec));
      if (mode_ == EnforcementMode::Enforce) suppressed = true;
    } else if (level >= ContainmentLevel::Monitoring && e.verb.rfind("plan.", 0) == 0) {
      InterventionRecord rec;
      rec.intervention_id = next_id("iv", intervention_seq_);
      rec.kind = "human_checkpoint";
      rec.agent_id = e.agent_id;
      rec.event_id = e.event_id;
      rec.detail = "enhanced monitoring checkpoint";
      rec.at_ms = e.timestamp_ms;
      report_.interventions.push_back(std::move(rec));
    }

    if (suppressed) {
      report_.events_suppressed++;
      apply_signals(signals, e.timestamp_ms);
      return;
    }

    if (e.verb == "human.release") {
      handle_release(e);
    }
    if (e.verb == "goal.set") {
      handle_goal_set(ar, e);
    }

    // Chain bookkeeping includes the current event so a denied action can be
    // its own chain action.
    if (e.category == EventCategory::Cognitive) {
      ar.last_cognitive_id = e.event_id;
      ar.last_cognitive_ts = e.timestamp_ms;
    }

    for (const auto& delivery : registry_.dispatch(e)) {
      const std::string& module = *delivery.module_id;
      if (module == "authz") {
        if (e.verb == "subagent.spawn") {
          handle_spawn(ar, e, signals);
        } else if (e.category == EventCategory::Action) {
          if (!handle_authorization(ar, e, signals)) {
            suppressed = true;
            break;
          }
        }
      } else if (module == "conformance") {
        handle_conformance(e, signals);
      } else if (module == "drift") {
        handle_drift(ar, e, signals);
      }
    }

    if (!suppressed && e.category == EventCategory::Action) {
      ar.last_action_id = e.event_id;
      ar.last_action_ts = e.timestamp_ms;
    }
    if (suppressed) report_.events_suppressed++;

    apply_signals(signals, e.timestamp_ms);
  }

  void apply_reassessments(AgentRuntime& ar, std::int64_t now_ms) {
    while (!ar.pending_reassessments.empty() && ar.pending_reassessments.front().first <= now_ms) {
      const auto [ts, sheet] = ar.pending_reassessments.front();
      ar.pending_reassessments.erase(ar.pending_reassessments.begin());
      RiskAssessment next = compute_agency_risk(sheet);
      const int old_tier = current_tier(ar).value();
      ar.assessment = next;
      authz_.context(ar.agent_id).risk_tier = next.tier.value();

      InterventionRecord rec;
      rec.intervention_id = next_id("iv", intervention_seq_);
      rec.kind = "tier_reassessment";
      rec.agent_id = ar.agent_id;
      rec.detail = "tier " + std::to_string(old_tier) + " -> " + std::to_string(next.tier.value());
      rec.at_ms = ts;
      report_.interventions.push_back(std::move(rec));

      log_shift_actions(
          authz_.on_context_shift(ar.agent_id, ar.goal, ShiftTrigger::TierReassessment, now_ms),
          "tier_reassessment", ts);
    }
  }

  void handle_release(const Event& e) {
    std::string target = e.payload_string("agent").value_or(e.agent_id);
    auto released = controller_.release(target, e.timestamp_ms);
    if (!released) return;
    log_escalation(*released);
    if (authz_.has_agent(target)) {
      authz_.context(target).active_containment = ContainmentLevel::None;
    }
    InterventionRecord rec;
    rec.intervention_id = next_id("iv", intervention_seq_);
    rec.kind = "release";
    rec.agent_id = target;
    rec.event_id = e.event_id;
    rec.detail = "operator release to level none";
    rec.at_ms = e.timestamp_ms;
    report_.interventions.push_back(std::move(rec));
  }

  void handle_goal_set(AgentRuntime& ar, const Event& e) {
    auto new_goal = e.payload_string("goal");
    if (!new_goal || new_goal->empty()) {
      WarningRecord w;
      w.warning_id = next_id("w", warning_seq_);
      w.kind = "malformed_goal_set";
      w.agent_id = e.agent_id;
      w.event_id = e.event_id;
      w.at_ms = e.timestamp_ms;
      report_.warnings.push_back(std::move(w));
      return;
    }
    if (*new_goal == ar.goal) return;

    drift_.on_goal_set(e.agent_id, *new_goal, e.event_id);
    log_shift_actions(
        authz_.on_context_shift(e.agent_id, *new_goal, ShiftTrigger::GoalChange, e.timestamp_ms),
        "goal_change", e.timestamp_ms);
    ar.goal = *new_goal;
    authz_.context(e.agent_id).goal_id = *new_goal;
  }

  void handle_spawn(AgentRuntime& ar, const Event& e, EventSignals& signals) {
    const std::string child = e.payload_string("child").value_or("");
    std::vector<std::string> resources;
    if (auto grants = e.payload_string("grants")) {
      std::size_t start = 0;
      while (start <= grants->size()) {
        std::size_t sep = grants->find(';', start);
        std::string item = grants->substr(start, sep == std::string::npos ? sep : sep - start);
        if (!item.empty()) resources.push_back(item);
        if (sep == std::string::npos) break;
        start = sep + 1;
      }
    }
    std::optional<std::int64_t> expires;
    if (auto v = e.payload_number("expires_at_ms")) expires = static_cast<std::int64_t>(*v);
    const std::string role = e.payload_string("role").value_or("");

    DelegationLogRecord rec;
    rec.record_id = next_id("g", delegation_seq_);
    rec.event_id = e.event_id;
    rec.parent = e.agent_id;
    rec.child = child;
    rec.resources = resources;
    rec.at_ms = e.timestamp_ms;

    if (child.empty()) {
      WarningRecord w;
      w.warning_id = next_id("w", warning_seq_);
      w.kind = "malformed_spawn";
      w.agent_id = e.agent_id;
      w.event_id = e.event_id;
      w.at_ms = e.timestamp_ms;
      report_.warnings.push_back(std::move(w));
      return;
    }

    auto outcome =
        authz_.record_delegation(e.agent_id, child, resources, role, expires, e.timestamp_ms);
    rec.ok = outcome.ok;
    rec.reason_code = outcome.reason_code;
    rec.detail = outcome.detail;
    rec.grant_ids = outcome.grant_ids;
    report_.delegations.push_back(rec);

    if (outcome.ok) {
      AgentContext& child_ctx = authz_.register_agent(child);
      if (child_ctx.risk_tier < authz_.context(e.agent_id).risk_tier) {
        child_ctx.risk_tier = authz_.context(e.agent_id).risk_tier;
      }
      return;
    }
    const std::string kind =
        outcome.reason_code == "cycle_detected" ? "cycle_detected" : "escalation_attempt";
    add_detection_for_authz(ar, e, kind, "authz:" + kind, rec.record_id, true, signals);
  }

  // Returns false when the event is suppressed from later monitors.
  bool handle_authorization(AgentRuntime& ar, const Event& e, EventSignals& signals) {
    Decision d = authz_.evaluate(e, e.timestamp_ms);

    DecisionRecord rec;
    rec.decision_id = next_id("d", decision_seq_);
    rec.event_id = e.event_id;
    rec.agent_id = e.agent_id;
    rec.verb = e.verb;
    rec.resource = d.resource;
    rec.verdict = std::string(verdict_name(d.verdict));
    rec.reason_code = d.reason_code;
    rec.reason = d.reason;
    rec.at_ms = e.timestamp_ms;
    rec.simulated_response = d.simulated_response;
    rec.grant_id = d.grant_id;
    const bool deny = d.verdict == Verdict::Deny;
    rec.suppressed = deny && mode_ == EnforcementMode::Enforce;
    report_.decisions.push_back(rec);

    if (d.simulated_response) {
      InterventionRecord sim;
      sim.intervention_id = next_id("iv", intervention_seq_);
      sim.kind = "simulated_response";
      sim.agent_id = e.agent_id;
      sim.event_id = e.event_id;
      sim.detail = "isolation substituted an inert response for " + d.resource;
      sim.at_ms = e.timestamp_ms;
      report_.interventions.push_back(std::move(sim));
    }

    if (!deny) return true;

    add_detection_for_authz(ar, e, "deny", "authz:deny", rec.decision_id, rec.suppressed, signals);

    // Denial burst: repeated denials inside the burst window escalate as a
    // signal of their own.
    ar.deny_times.push_back(e.timestamp_ms);
    while (!ar.deny_times.empty() &&
           ar.deny_times.front() < e.timestamp_ms - policy_.denial_burst_window_ms) {
      ar.deny_times.pop_front();
    }
    if (static_cast<int>(ar.deny_times.size()) >= policy_.denial_burst_threshold) {
      ar.deny_times.clear();
      signals.by_agent[e.agent_id].push_back(
          {SignalKind::AuthzDenialBurst, rec.decision_id, false});
    }
    return !rec.suppressed;
  }

  void handle_conformance(const Event& e, EventSignals& signals) {
    ConformanceOutput agent_out = conformance_.process(e, e.agent_id, RuleScope::Agent);
    const std::string component = authz_.graph().component_root(e.agent_id);
    ConformanceOutput coord_out = conformance_.process(e, component, RuleScope::Coordinated);

    for (const auto* out : {&agent_out, &coord_out}) {
      for (const ProgressWarning& w : out->warnings) {
        WarningRecord rec;
        rec.warning_id = next_id("w", warning_seq_);
        rec.kind = "fsm_progress";
        rec.agent_id = e.agent_id;
        rec.rule_id = w.rule_id;
        rec.state_index = w.state_index;
        rec.event_id = w.event_id;
        rec.at_ms = w.at_ms;
        report_.warnings.push_back(std::move(rec));
        warning_marks_[e.agent_id].push_back({e.agent_id, w.at_ms, w.event_id});
      }
      for (const Violation& v : out->violations) {
        route_violation(v, signals);
      }
    }
  }

  void handle_drift(AgentRuntime& ar, const Event& e, EventSignals& signals) {
    DriftOutput out = drift_.observe(e);
    for (DriftSignal& s : out.signals) {
      DriftRecord rec;
      rec.signal_id = next_id("ds", drift_seq_);
      rec.signal = s;
      warning_marks_[s.agent_id].push_back({s.agent_id, s.emitted_at_ms, s.window_last});
      if (s.severity == DriftSeverity::Alert) {
        signals.by_agent[s.agent_id].push_back({SignalKind::DriftAlert, rec.signal_id, false});
        add_drift_detection(rec, signals);
      }
      report_.drift_signals.push_back(std::move(rec));
    }
    if (out.seeded) {
      InterventionRecord rec;
      rec.intervention_id = next_id("iv", intervention_seq_);
      rec.kind = "baseline_seeded";
      rec.agent_id = out.seeded->agent_id;
      rec.detail = "goal '" + out.seeded->goal_id + "' seeded from '" + out.seeded->cloned_from + "'";
      rec.at_ms = e.timestamp_ms;
      report_.interventions.push_back(std::move(rec));
    }
    if (out.shift_verdict) {
      handle_shift_verdict(*out.shift_verdict, e.timestamp_ms, signals);
    }
  }

  void handle_shift_verdict(const GoalShiftResult& verdict, std::int64_t at_ms,
                            EventSignals& signals) {
    GoalShiftRecord rec;
    rec.record_id = next_id("gs", shift_seq_);
    rec.result = verdict;
    report_.goal_shifts.push_back(rec);

    if (verdict.verdict != GoalShiftVerdict::FlagSuspicious) return;

    signals.by_agent[verdict.agent_id].push_back({SignalKind::DriftAlert, rec.record_id, false});

    DetectionRecord det;
    det.detection_id = next_id("det", detection_seq_);
    det.source = "drift";
    det.kind = "goal_shift_suspicious";
    det.rule_or_signal = "drift:goal_shift_suspicious";
    det.agent_id = verdict.agent_id;
    det.event_ids = {verdict.goal_set_event_id};
    det.at_ms = at_ms;
    det.commit_ts = at_ms;
    det.commit_event_id = verdict.goal_set_event_id;
    auto rt = runtimes_.find(verdict.agent_id);
    if (rt != runtimes_.end()) {
      det.chain.cognitive_event_id = verdict.goal_set_event_id;
      det.chain.action_event_id = rt->second.last_action_id;
      det.chain.violating_event_id = verdict.goal_set_event_id;
    }
    det.preceded_by_warning = has_prior_warning(verdict.agent_id, det.commit_ts);
    det.prevented = false;
    signals.detections_created.push_back(report_.detections.size());
    report_.detections.push_back(std::move(det));
  }

  void route_violation(const Violation& v, EventSignals& signals) {
    ViolationRecord rec;
    rec.violation_id = next_id("v", violation_seq_);
    rec.rule_id = v.rule_id;
    rec.agent_id = v.agent_id;
    rec.participant_agents = v.participant_agents;
    rec.kind = std::string(violation_kind_name(v.kind));
    rec.triggering_event_ids = v.triggering_event_ids;
    rec.detected_at_ms = v.detected_at_ms;
    rec.critical = v.critical;
    rec.priority = v.priority;
    rec.coordinated = v.coordinated;
    report_.violations.push_back(rec);

    Signal signal{SignalKind::Violation, rec.violation_id, v.critical};
    for (const std::string& participant : v.participant_agents) {
      signals.by_agent[participant].push_back(signal);
      if (authz_.has_agent(participant)) {
        const std::string root = authz_.graph().component_root(participant);
        if (root != participant) {
          // Direct parent gains oversight scrutiny when a subagent violates.
          for (const auto& edge : authz_.graph().edges()) {
            if (edge.child == participant) {
              signals.parent_notifications.emplace_back(edge.parent, participant);
            }
          }
        }
      }
    }
    if (v.coordinated && v.participant_agents.size() >= 2) {
      signals.joint_groups.emplace_back(v.participant_agents, signal);
    }

    DetectionRecord det;
    det.detection_id = next_id("det", detection_seq_);
    det.source = "conformance";
    det.kind = rec.kind;
    det.rule_or_signal = "rule:" + v.rule_id;
    det.agent_id = v.participant_agents.size() == 1 ? v.participant_agents.front() : v.agent_id;
    det.event_ids = v.triggering_event_ids;
    det.at_ms = v.detected_at_ms;
    det.commit_ts = v.detected_at_ms;
    det.commit_event_id =
        v.triggering_event_ids.empty() ? std::string() : v.triggering_event_ids.back();
    fill_chain(det, det.agent_id, det.commit_event_id, v.detected_at_ms);
    det.preceded_by_warning = has_prior_warning(det.agent_id, det.commit_ts);
    det.prevented = false;
    signals.detections_created.push_back(report_.detections.size());
    report_.detections.push_back(std::move(det));
  }

  void add_detection_for_authz(AgentRuntime& ar, const Event& e, const std::string& kind,
                               const std::string& rule_or_signal, const std::string& effect_ref,
                               bool prevented, EventSignals& signals) {
    DetectionRecord det;
    det.detection_id = next_id("det", detection_seq_);
    det.source = "authz";
    det.kind = kind;
    det.rule_or_signal = rule_or_signal;
    det.agent_id = e.agent_id;
    det.event_ids = {e.event_id};
    det.at_ms = e.timestamp_ms;
    det.commit_ts = e.timestamp_ms;
    det.commit_event_id = e.event_id;
    det.chain.cognitive_event_id = ar.last_cognitive_id;
    det.chain.action_event_id = e.category == EventCategory::Action ? e.event_id : ar.last_action_id;
    if (det.chain.action_event_id.empty() && e.category == EventCategory::Coordination) {
      det.chain.action_event_id = e.event_id;  // the spawn itself is the acted step
    }
    det.chain.violating_event_id = e.event_id;
    det.chain.effect_ref = effect_ref;
    det.chain.complete = !det.chain.cognitive_event_id.empty() &&
                         !det.chain.action_event_id.empty() && ar.last_cognitive_ts <= e.timestamp_ms;
    det.preceded_by_warning = has_prior_warning(e.agent_id, det.commit_ts);
    det.prevented = prevented;
    signals.detections_created.push_back(report_.detections.size());
    report_.detections.push_back(std::move(det));

    if (kind == "escalation_attempt" || kind == "cycle_detected") {
      signals.by_agent[e.agent_id].push_back(
          {SignalKind::Violation, report_.detections.back().detection_id, false});
    }
  }

  void add_drift_detection(const DriftRecord& rec, EventSignals& signals) {
    DetectionRecord det;
    det.detection_id = next_id("det", detection_seq_);
    det.source = "drift";
    det.kind = "drift_alert";
    det.rule_or_signal = "drift:" + rec.signal.metric;
    det.agent_id = rec.signal.agent_id;
    det.event_ids = rec.signal.window_event_ids;
    det.at_ms = rec.signal.emitted_at_ms;
    det.commit_ts = rec.signal.emitted_at_ms;
    det.commit_event_id = rec.signal.window_last;
    fill_chain(det, rec.signal.agent_id, rec.signal.window_last, rec.signal.emitted_at_ms);
    det.preceded_by_warning = has_prior_warning(det.agent_id, det.commit_ts);
    det.prevented = false;
    signals.detections_created.push_back(report_.detections.size());
    report_.detections.push_back(std::move(det));
  }

  void fill_chain(DetectionRecord& det, const std::string& agent_id,
                  const std::string& violating_event_id, std::int64_t violating_ts) {
    auto rt = runtimes_.find(agent_id);
    if (rt == runtimes_.end()) return;
    det.chain.cognitive_event_id = rt->second.last_cognitive_id;
    det.chain.action_event_id = rt->second.last_action_id;
    det.chain.violating_event_id = violating_event_id;
    det.chain.complete = false;  // completed when the effect lands
    (void)violating_ts;
  }

  bool has_prior_warning(const std::string& agent_id, std::int64_t commit_ts) const {
    auto it = warning_marks_.find(agent_id);
    if (it == warning_marks_.end()) return false;
    for (const WarningRef& w : it->second) {
      if (w.at_ms < commit_ts) return true;
    }
    return false;
  }

  void log_shift_actions(const std::vector<AuthorizationMonitor::ShiftAction>& actions,
                         const std::string& trigger, std::int64_t at_ms) {
    for (const auto& action : actions) {
      PermissionChangeRecord rec;
      rec.record_id = next_id("pc", permission_seq_);
      rec.agent_id = action.agent_id;
      rec.resource = action.permission.resource;
      rec.action = std::string(permission_action_name(action.action));
      rec.trigger = trigger;
      rec.at_ms = at_ms;
      report_.permission_changes.push_back(std::move(rec));
    }
  }

  void log_escalation(const EscalationEvent& e) {
    EscalationRecord rec;
    rec.escalation_id = next_id("esc", escalation_seq_);
    rec.agent_id = e.agent_id;
    rec.from_level = std::string(containment_level_name(e.from_level));
    rec.to_level = std::string(containment_level_name(e.to_level));
    rec.score = e.score;
    for (const Signal& s : e.contributing_signals) {
      rec.signals.emplace_back(std::string(signal_kind_name(s.kind)), s.id);
    }
    rec.cascaded_from = e.cascaded_from;
    rec.at_ms = e.at_ms;
    report_.escalations.push_back(std::move(rec));
  }

  // Applies escalation side effects: context updates, permission narrowing,
  // delegation-chain cascade, and record keeping.
  void apply_escalation(const EscalationEvent& esc, EventSignals& signals) {
    log_escalation(esc);
    const std::string effect_ref = report_.escalations.back().escalation_id;
    const std::int64_t effect_ts = esc.at_ms;

    if (authz_.has_agent(esc.agent_id)) {
      authz_.context(esc.agent_id).active_containment = esc.to_level;
    } else {
      authz_.register_agent(esc.agent_id).active_containment = esc.to_level;
    }

    if (esc.to_level >= ContainmentLevel::Monitoring &&
        esc.from_level < ContainmentLevel::Monitoring) {
      InterventionRecord rec;
      rec.intervention_id = next_id("iv", intervention_seq_);
      rec.kind = "enhanced_monitoring";
      rec.agent_id = esc.agent_id;
      rec.detail = "governance signal collection increased";
      rec.at_ms = esc.at_ms;
      report_.interventions.push_back(std::move(rec));
    }
    if (esc.to_level >= ContainmentLevel::ToolRestriction &&
        esc.from_level < ContainmentLevel::ToolRestriction) {
      auto rt = runtimes_.find(esc.agent_id);
      log_shift_actions(authz_.on_context_shift(esc.agent_id,
                                                rt == runtimes_.end() ? "" : rt->second.goal,
                                                ShiftTrigger::ContainmentChange, esc.at_ms),
                        "containment_change", esc.at_ms);
    }
    bool critical_signal = false;
    for (const Signal& s : esc.contributing_signals) critical_signal |= s.critical;
    if (esc.to_level == ContainmentLevel::ExecutionIsolation && critical_signal) {
      InterventionRecord rec;
      rec.intervention_id = next_id("iv", intervention_seq_);
      rec.kind = "session_termination_marker";
      rec.agent_id = esc.agent_id;
      rec.detail = "critical violation under isolation; session marked for termination";
      rec.at_ms = esc.at_ms;
      report_.interventions.push_back(std::move(rec));
    }

    // Patch causal chains of detections this event produced for the agent.
    for (std::size_t idx : signals.detections_created) {
      DetectionRecord& det = report_.detections[idx];
      if (det.agent_id != esc.agent_id || !det.chain.effect_ref.empty()) continue;
      det.chain.effect_ref = effect_ref;
      det.chain.complete = !det.chain.cognitive_event_id.empty() &&
                           !det.chain.action_event_id.empty() &&
                           !det.chain.violating_event_id.empty() && det.commit_ts <= effect_ts;
    }
  }

  void apply_signals(EventSignals& signals, std::int64_t at_ms) {
    for (auto& [agent_id, agent_signals] : signals.by_agent) {
      if (agent_signals.empty()) continue;
      RiskTier tier = RiskTier(1);
      auto rt = runtimes_.find(agent_id);
      if (rt != runtimes_.end()) {
        tier = current_tier(rt->second);
      } else if (const AgentContext* ctx = authz_.find_context(agent_id)) {
        tier = RiskTier(std::clamp(ctx->risk_tier, 1, 4));
      }
      auto esc = controller_.ingest(agent_id, agent_signals, tier, factors_for(agent_id), at_ms);
      if (esc) {
        apply_escalation(*esc, signals);
        for (const EscalationEvent& cascaded : controller_.cascade(authz_.graph(), agent_id, at_ms)) {
          apply_escalation(cascaded, signals);
        }
      }
    }

    std::set<std::pair<std::string, std::string>> notified;
    for (const auto& [parent, child] : signals.parent_notifications) {
      if (!notified.insert({parent, child}).second) continue;
      auto esc = controller_.notify_parent(parent, child, at_ms);
      if (esc) apply_escalation(*esc, signals);
    }

    for (const auto& [participants, signal] : signals.joint_groups) {
      for (const EscalationEvent& esc : controller_.joint_containment(participants, signal, at_ms)) {
        apply_escalation(esc, signals);
        for (const EscalationEvent& cascaded :
             controller_.cascade(authz_.graph(), esc.agent_id, at_ms)) {
          apply_escalation(cascaded, signals);
        }
      }
    }
  }

  void run_expiry(std::int64_t watermark_ms) {
    std::vector<Violation> expired = conformance_.expire_timeouts(watermark_ms);
    if (expired.empty()) return;
    EventSignals signals;
    for (const Violation& v : expired) {
      route_violation(v, signals);
    }
    apply_signals(signals, watermark_ms);
  }

  Policy policy_;
  EnforcementMode mode_;
  ReorderBuffer buffer_;
  ConformanceEngine conformance_;
  AuthorizationMonitor authz_;
  DriftDetector drift_;
  EscalationController controller_;
  SubscriptionRegistry registry_;
  RunReport report_;

  std::map<std::string, AgentRuntime> runtimes_;
  std::map<std::string, std::vector<WarningRef>> warning_marks_;
  std::int64_t released_watermark_ = 0;

  std::uint64_t violation_seq_ = 0;
  std::uint64_t decision_seq_ = 0;
  std::uint64_t delegation_seq_ = 0;
  std::uint64_t escalation_seq_ = 0;
  std::uint64_t drift_seq_ = 0;
  std::uint64_t shift_seq_ = 0;
  std::uint64_t warning_seq_ = 0;
  std::uint64_t intervention_seq_ = 0;
  std::uint64_t permission_seq_ = 0;
  std::uint64_t detection_seq_ = 0;
};

}  // namespace mi9
