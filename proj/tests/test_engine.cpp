#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "mi9/engine.hpp"
#include "mi9/scenario.hpp"
#include "mi9/policy.hpp"
#include "mi9/trace.hpp"

using namespace mi9;

namespace {

std::string fixtures_dir() {
  const char* env = std::getenv("MI9_FIXTURES");
  REQUIRE(env != nullptr);
  return env;
}

Policy default_policy() { return Policy::load(fixtures_dir() + "/default_policy.json"); }

void replay_file(GovernanceEngine& engine, const std::string& path) {
  TraceReader reader(path);
  if (engine.report().trace_id.empty()) engine.report().trace_id = reader.trace_id();
  while (auto entry = reader.next()) {
    if (entry->unknown_verb) engine.note_unknown_verb(entry->event);
    engine.ingest(std::move(entry->event));
  }
  engine.finish();
}

Event make_event(std::string id, std::string agent, std::int64_t ts, std::string verb,
                 std::map<std::string, PayloadValue> payload = {}, int tier = 2) {
  Event e;
  e.event_id = std::move(id);
  e.agent_id = std::move(agent);
  e.session_id = "s1";
  e.timestamp_ms = ts;
  e.verb = std::move(verb);
  e.category = classify_verb(e.verb);
  e.risk_tier = tier;
  e.payload = std::move(payload);
  return e;
}

// Minimal policy built in code: one critical dual-control rule and wide
// grants, high-risk context factors.
Policy tiny_policy() {
  Policy p;
  RuleSpec rule;
  rule.rule_id = "dual-control";
  rule.mode = RuleMode::RequiredFollowUp;
  rule.deadline_ms = 60'000;
  rule.critical = true;
  StepSpec transfer;
  transfer.predicate.atoms = {verb_eq("tool.invoke"), payload_eq("tool", std::string("bank.transfer"))};
  StepSpec approval;
  approval.predicate.atoms = {verb_eq("approve.action"), payload_eq("role", std::string("manager"))};
  rule.steps = {transfer, approval};
  p.rules.push_back(rule);

  Permission wide;
  wide.resource = "tool.invoke";
  p.permissions["default"].push_back(wide);
  Permission api;
  api.resource = "api.call";
  p.permissions["default"].push_back(api);
  Permission db;
  db.resource = "db.read";
  p.permissions["default"].push_back(db);

  ContextFactors hot{3, 3, 3, 3, 3};
  p.context_factors.emplace("default", hot);
  return p;
}

}  // namespace

TEST_CASE("dual-control fixtures: compliant, late, absent") {
  {
    GovernanceEngine engine(default_policy());
    replay_file(engine, fixtures_dir() + "/dual_control_compliant.jsonl");
    CHECK(engine.report().violations.empty());
    CHECK(engine.report().detections.empty());
  }
  {
    GovernanceEngine engine(default_policy());
    replay_file(engine, fixtures_dir() + "/dual_control_late.jsonl");
    REQUIRE(engine.report().violations.size() == 1);
    CHECK(engine.report().violations[0].kind == "deadline_expired");
    CHECK(engine.report().violations[0].rule_id == "dual-control-transfer");
    CHECK(engine.report().violations[0].triggering_event_ids ==
          std::vector<std::string>{"e000003"});
  }
  {
    GovernanceEngine engine(default_policy());
    replay_file(engine, fixtures_dir() + "/dual_control_absent.jsonl");
    REQUIRE(engine.report().violations.size() == 1);
    CHECK(engine.report().violations[0].kind == "deadline_expired");
  }
}

TEST_CASE("goal_id stamps the most recent prior goal") {
  GovernanceEngine engine(tiny_policy());
  engine.ingest(make_event("e1", "a", 1000, "goal.set", {{"goal", std::string("first")}}));
  engine.ingest(make_event("e2", "a", 2000, "db.read"));
  engine.ingest(make_event("e3", "a", 3000, "goal.set", {{"goal", std::string("second")}}));
  engine.ingest(make_event("e4", "a", 4000, "db.read"));
  engine.finish();

  CHECK(engine.goal_of("a") == "second");
  // Decision log captured the goal context at evaluation time via authz; the
  // goal.set event itself carries the goal it replaced.
  const auto& decisions = engine.report().decisions;
  REQUIRE(decisions.size() == 2);
  CHECK(decisions[0].event_id == "e2");
  CHECK(decisions[1].event_id == "e4");
}

TEST_CASE("tier reassessments apply to subsequent events") {
  Policy p = tiny_policy();
  AriPolicy ari;
  ari.initial.scores = {{{1, 1, 1, 0}, {1, 0, 1, 0}, {0, 1, 0, 1}}};  // total 7 -> tier 1
  ScoreSheet higher;
  higher.scores = {{{3, 3, 3, 3}, {2, 2, 2, 2}, {3, 2, 3, 2}}};  // total 30 -> tier 4
  ari.reassessments.emplace_back(5000, higher);
  p.ari_scores.emplace("a", ari);

  GovernanceEngine engine(p, EnforcementMode::Observe, 0);
  engine.ingest(make_event("e1", "a", 1000, "db.read", {}, 2));
  engine.ingest(make_event("e2", "a", 6000, "db.read", {}, 2));
  engine.finish();

  CHECK(engine.report().final_tiers.at("a") == 4);
  bool saw_reassessment = false;
  for (const auto& iv : engine.report().interventions) {
    if (iv.kind == "tier_reassessment") {
      saw_reassessment = true;
      CHECK(iv.detail == "tier 1 -> 4");
    }
  }
  CHECK(saw_reassessment);
}

TEST_CASE("critical violation escalates, isolation denies and simulates") {
  Policy p = tiny_policy();
  // desk agent at tier 4 so a critical violation scores 1.0 -> isolation.
  AriPolicy ari;
  ari.initial.scores = {{{3, 3, 3, 3}, {3, 3, 3, 3}, {3, 3, 3, 3}}};
  p.ari_scores.emplace("a", ari);

  GovernanceEngine engine(p, EnforcementMode::Observe, 0);
  engine.ingest(make_event("e1", "a", 1000, "plan.start"));
  engine.ingest(make_event("e2", "a", 2000, "tool.invoke",
                           {{"tool", std::string("bank.transfer")}, {"amount", std::int64_t(5000)}}));
  engine.ingest(make_event("e3", "a", 70'000, "db.read"));   // watermark passes the deadline
  engine.ingest(make_event("e4", "a", 71'000, "api.call", {{"endpoint", std::string("quotes")}}));
  engine.ingest(make_event("e5", "a", 72'000, "tool.invoke", {{"tool", std::string("quote_scan")}}));
  engine.finish();

  CHECK(engine.level_of("a") == ContainmentLevel::ExecutionIsolation);

  // Effect consistency: no Allow decisions for the agent after isolation.
  std::int64_t isolated_at = -1;
  for (const auto& esc : engine.report().escalations) {
    if (esc.agent_id == "a" && esc.to_level == "execution_isolation") isolated_at = esc.at_ms;
  }
  REQUIRE(isolated_at >= 0);
  bool saw_denied_after = false;
  for (const auto& d : engine.report().decisions) {
    if (d.at_ms > isolated_at) {
      CHECK(d.verdict == "deny");
      CHECK(d.reason_code == "isolated");
      saw_denied_after = true;
    }
  }
  CHECK(saw_denied_after);

  bool simulated = false;
  for (const auto& iv : engine.report().interventions) {
    simulated |= iv.kind == "simulated_response";
  }
  CHECK(simulated);
  bool termination_marker = false;
  for (const auto& iv : engine.report().interventions) {
    termination_marker |= iv.kind == "session_termination_marker";
  }
  CHECK(termination_marker);
}

TEST_CASE("planning intervention blocks goal changes in enforce mode only") {
  for (EnforcementMode mode : {EnforcementMode::Observe, EnforcementMode::Enforce}) {
    Policy p = tiny_policy();
    AriPolicy ari;
    ari.initial.scores = {{{2, 2, 2, 2}, {2, 2, 2, 2}, {2, 2, 2, 0}}};  // total 22 -> tier 3
    p.ari_scores.emplace("a", ari);
    // Thresholds tuned so the critical violation lands exactly in the
    // planning band: tier 3 * factors 3 * critical = 0.75 * 1 * 1 = 0.75.
    p.containment_thresholds = {0.1, 0.5, 0.8, 0.9};

    GovernanceEngine engine(p, mode, 0);
    engine.ingest(make_event("e1", "a", 1000, "goal.set", {{"goal", std::string("original")}}));
    engine.ingest(make_event("e2", "a", 2000, "tool.invoke",
                             {{"tool", std::string("bank.transfer")}}));
    engine.ingest(make_event("e3", "a", 70'000, "db.read"));  // deadline violation -> planning
    REQUIRE(engine.level_of("a") == ContainmentLevel::PlanningIntervention);
    engine.ingest(make_event("e4", "a", 71'000, "goal.set", {{"goal", std::string("hijacked")}}));
    engine.finish();

    bool blocked = false;
    for (const auto& iv : engine.report().interventions) {
      blocked |= iv.kind == "planning_block" && iv.event_id == "e4";
    }
    CHECK(blocked);
    if (mode == EnforcementMode::Enforce) {
      CHECK(engine.goal_of("a") == "original");
      CHECK(engine.report().events_suppressed > 0);
    } else {
      CHECK(engine.goal_of("a") == "hijacked");
    }
  }
}

TEST_CASE("monitoring level adds human checkpoints on planning events") {
  Policy p = tiny_policy();
  AriPolicy ari;
  ari.initial.scores = {{{1, 1, 1, 1}, {1, 1, 1, 1}, {1, 1, 1, 1}}};  // tier 2
  p.ari_scores.emplace("a", ari);
  p.context_factors.clear();  // defaults (all 2): 0.5*(10/15)*1.0 = 0.333 -> monitoring band
  p.containment_thresholds = {0.3, 0.5, 0.7, 0.9};

  GovernanceEngine engine(p, EnforcementMode::Observe, 0);
  engine.ingest(make_event("e1", "a", 1000, "tool.invoke", {{"tool", std::string("bank.transfer")}}));
  engine.ingest(make_event("e2", "a", 70'000, "db.read"));
  REQUIRE(engine.level_of("a") == ContainmentLevel::Monitoring);
  engine.ingest(make_event("e3", "a", 71'000, "plan.checkpoint"));
  engine.finish();

  bool checkpoint = false, enhanced = false;
  for (const auto& iv : engine.report().interventions) {
    checkpoint |= iv.kind == "human_checkpoint" && iv.event_id == "e3";
    enhanced |= iv.kind == "enhanced_monitoring";
  }
  CHECK(checkpoint);
  CHECK(enhanced);
  // Monitoring is state-preserving: zero authorization changes.
  for (const auto& d : engine.report().decisions) CHECK(d.verdict != "deny");
}

TEST_CASE("human.release de-escalates and the ratchet restarts") {
  Policy p = tiny_policy();
  AriPolicy ari;
  ari.initial.scores = {{{3, 3, 3, 3}, {3, 3, 3, 3}, {3, 3, 3, 3}}};
  p.ari_scores.emplace("a", ari);

  GovernanceEngine engine(p, EnforcementMode::Observe, 0);
  engine.ingest(make_event("e1", "a", 1000, "tool.invoke", {{"tool", std::string("bank.transfer")}}));
  engine.ingest(make_event("e2", "a", 70'000, "db.read"));
  REQUIRE(engine.level_of("a") == ContainmentLevel::ExecutionIsolation);

  engine.ingest(make_event("e3", "a", 71'000, "human.release"));
  CHECK(engine.level_of("a") == ContainmentLevel::None);
  engine.ingest(make_event("e4", "a", 72'000, "db.read"));
  engine.finish();

  bool released = false;
  for (const auto& iv : engine.report().interventions) released |= iv.kind == "release";
  CHECK(released);
  // Post-release actions are evaluated normally again.
  bool allowed_after = false;
  for (const auto& d : engine.report().decisions) {
    if (d.event_id == "e4") allowed_after = d.verdict == "allow";
  }
  CHECK(allowed_after);
}

TEST_CASE("denial burst escalates via its own signal") {
  Policy p = tiny_policy();
  p.permissions.clear();  // nothing granted: every action denies
  p.denial_burst_threshold = 3;
  AriPolicy ari;
  ari.initial.scores = {{{3, 3, 3, 3}, {3, 3, 3, 3}, {3, 3, 3, 3}}};
  p.ari_scores.emplace("a", ari);

  GovernanceEngine engine(p, EnforcementMode::Observe, 0);
  for (int i = 0; i < 3; ++i) {
    engine.ingest(make_event("e" + std::to_string(i), "a", 1000 + i * 100, "db.read"));
  }
  engine.finish();

  bool burst = false;
  for (const auto& esc : engine.report().escalations) {
    for (const auto& [kind, id] : esc.signals) burst |= kind == "authz_denial_burst";
  }
  CHECK(burst);
  CHECK(engine.level_of("a") >= ContainmentLevel::Monitoring);
}

TEST_CASE("cascade reaches spawned subagents through the engine") {
  Policy p = tiny_policy();
  AriPolicy ari;
  ari.initial.scores = {{{3, 3, 3, 3}, {3, 3, 3, 3}, {3, 3, 3, 3}}};
  p.ari_scores.emplace("parent", ari);

  GovernanceEngine engine(p, EnforcementMode::Observe, 0);
  engine.ingest(make_event("e1", "parent", 1000, "subagent.spawn",
                           {{"child", std::string("kid")},
                            {"grants", std::string("db.read")},
                            {"role", std::string("manager")}}));
  engine.ingest(make_event("e2", "kid", 2000, "db.read"));
  engine.ingest(make_event("e3", "parent", 3000, "tool.invoke",
                           {{"tool", std::string("bank.transfer")}}));
  engine.ingest(make_event("e4", "parent", 70'000, "db.read"));
  engine.finish();

  CHECK(engine.level_of("parent") == ContainmentLevel::ExecutionIsolation);
  CHECK(engine.level_of("kid") >= ContainmentLevel::ToolRestriction);
  bool cascaded = false;
  for (const auto& esc : engine.report().escalations) {
    if (esc.agent_id == "kid" && esc.cascaded_from == "parent") cascaded = true;
  }
  CHECK(cascaded);
}

TEST_CASE("zero-grant spawns still link the family for cascade") {
  Policy p = tiny_policy();
  AriPolicy ari;
  ari.initial.scores = {{{3, 3, 3, 3}, {3, 3, 3, 3}, {3, 3, 3, 3}}};
  p.ari_scores.emplace("parent", ari);

  GovernanceEngine engine(p, EnforcementMode::Observe, 0);
  engine.ingest(make_event("e1", "parent", 1000, "subagent.spawn",
                           {{"child", std::string("kid")}}));  // no grants payload
  engine.ingest(make_event("e2", "kid", 2000, "memory.read"));
  engine.ingest(make_event("e3", "parent", 3000, "tool.invoke",
                           {{"tool", std::string("bank.transfer")}}));
  engine.ingest(make_event("e4", "parent", 70'000, "db.read"));
  engine.finish();

  REQUIRE(engine.report().delegations.size() == 1);
  CHECK(engine.report().delegations[0].ok);
  CHECK(engine.report().delegations[0].grant_ids.empty());
  CHECK(engine.authz().permissions("kid").empty());
  // The relationship alone is enough for containment to cascade.
  CHECK(engine.level_of("kid") >= ContainmentLevel::ToolRestriction);
  for (const auto& d : engine.report().detections) {
    CHECK(d.event_ids != std::vector<std::string>{"e1"});
  }
}

TEST_CASE("a spawn without a child id is a malformed-event warning") {
  GovernanceEngine engine(tiny_policy(), EnforcementMode::Observe, 0);
  engine.ingest(make_event("e1", "parent", 1000, "subagent.spawn",
                           {{"grants", std::string("db.read")}}));
  engine.finish();
  CHECK(engine.report().delegations.empty());
  CHECK(engine.report().detections.empty());
  bool warned = false;
  for (const auto& w : engine.report().warnings) warned |= w.kind == "malformed_spawn";
  CHECK(warned);
}

TEST_CASE("subagent violation draws the parent into monitoring") {
  Policy p = tiny_policy();
  GovernanceEngine engine(p, EnforcementMode::Observe, 0);
  engine.ingest(make_event("e1", "parent", 1000, "subagent.spawn",
                           {{"child", std::string("kid")},
                            {"grants", std::string("tool.invoke")},
                            {"role", std::string("manager")}}));
  engine.ingest(make_event("e2", "kid", 2000, "tool.invoke",
                           {{"tool", std::string("bank.transfer")}}));
  engine.ingest(make_event("e3", "kid", 70'000, "db.read"));
  engine.finish();

  CHECK(engine.level_of("parent") >= ContainmentLevel::Monitoring);
  bool via_child = false;
  for (const auto& esc : engine.report().escalations) {
    if (esc.agent_id == "parent" && esc.cascaded_from == "kid") via_child = true;
  }
  CHECK(via_child);
}

TEST_CASE("joint containment for coordinated multi-agent patterns") {
  Policy p = default_policy();
  GovernanceEngine engine(p, EnforcementMode::Observe, 0);
  // Parent spawns two siblings; each contributes one step of the coordinated
  // pattern.
  engine.ingest(make_event("e1", "boss", 1000, "subagent.spawn",
                           {{"child", std::string("sib_a")},
                            {"grants", std::string("db.read")},
                            {"role", std::string("manager")}}));
  engine.ingest(make_event("e2", "boss", 1500, "subagent.spawn",
                           {{"child", std::string("sib_b")},
                            {"grants", std::string("api.call:external_upload")},
                            {"role", std::string("manager")}}));
  engine.ingest(make_event("e3", "sib_a", 2000, "memory.read",
                           {{"sensitivity", std::string("high")}}));
  engine.ingest(make_event("e4", "sib_b", 3000, "api.call",
                           {{"endpoint", std::string("external_upload")}}));
  engine.finish();

  bool coordinated_violation = false;
  for (const auto& v : engine.report().violations) {
    if (v.rule_id == "coordinated-exfiltration") {
      coordinated_violation = true;
      CHECK(v.coordinated);
      CHECK(v.participant_agents == std::vector<std::string>{"sib_a", "sib_b"});
    }
  }
  REQUIRE(coordinated_violation);
  CHECK(engine.level_of("sib_a") >= ContainmentLevel::PlanningIntervention);
  CHECK(engine.level_of("sib_b") >= ContainmentLevel::PlanningIntervention);
}

TEST_CASE("the same pattern by unlinked agents stays per-agent") {
  Policy p = default_policy();
  GovernanceEngine engine(p, EnforcementMode::Observe, 0);
  engine.ingest(make_event("e1", "solo_a", 2000, "memory.read",
                           {{"sensitivity", std::string("high")}}));
  engine.ingest(make_event("e2", "solo_b", 3000, "api.call",
                           {{"endpoint", std::string("external_upload")}}));
  engine.finish();
  for (const auto& v : engine.report().violations) {
    CHECK(v.rule_id != "coordinated-exfiltration");
  }
}

TEST_CASE("enforce mode suppresses denied actions from later monitors") {
  Policy p = default_policy();
  // Remove the external upload grant so the exfiltration finale is denied.
  auto& grants = p.permissions.at("default");
  grants.erase(std::remove_if(grants.begin(), grants.end(),
                              [](const Permission& g) {
                                return g.resource == "api.call:external_upload";
                              }),
               grants.end());

  auto run = [&](EnforcementMode mode) {
    GovernanceEngine engine(p, mode, 0);
    engine.ingest(make_event("e1", "a", 1000, "plan.start"));
    engine.ingest(make_event("e2", "a", 2000, "memory.read", {{"sensitivity", std::string("high")}}));
    engine.ingest(make_event("e3", "a", 3000, "tool.invoke", {{"tool", std::string("export_data")}}));
    engine.ingest(make_event("e4", "a", 4000, "api.call",
                             {{"endpoint", std::string("external_upload")}}));
    engine.finish();
    return engine;
  };

  {
    GovernanceEngine observed = run(EnforcementMode::Observe);
    bool sequence_completed = false;
    for (const auto& v : observed.report().violations) {
      sequence_completed |= v.rule_id == "data-exfiltration";
    }
    CHECK(sequence_completed);  // observe mode records but does not stop it
  }
  {
    GovernanceEngine enforced = run(EnforcementMode::Enforce);
    for (const auto& v : enforced.report().violations) {
      CHECK(v.rule_id != "data-exfiltration");  // the final step never executed
    }
    bool denied = false, prevented = false;
    for (const auto& d : enforced.report().detections) {
      if (d.kind == "deny" && d.commit_event_id == "e4") {
        denied = true;
        prevented = d.prevented;
      }
    }
    CHECK(denied);
    CHECK(prevented);
    CHECK(enforced.report().events_suppressed == 1);
  }
}

TEST_CASE("session change clears pattern state") {
  Policy p = tiny_policy();
  GovernanceEngine engine(p, EnforcementMode::Observe, 0);
  engine.ingest(make_event("e1", "a", 1000, "tool.invoke", {{"tool", std::string("bank.transfer")}}));
  Event next_session = make_event("e2", "a", 2000, "db.read");
  next_session.session_id = "s2";
  engine.ingest(next_session);
  Event later = make_event("e3", "a", 70'000, "db.read");
  later.session_id = "s2";
  engine.ingest(later);
  engine.finish();
  CHECK(engine.report().violations.empty());  // anchor died with the session
}

TEST_CASE("escalation attempts are flagged and the grant refused") {
  Policy p = default_policy();
  GovernanceEngine engine(p, EnforcementMode::Observe, 0);
  engine.ingest(make_event("e1", "analyst_one", 1000, "plan.start"));
  engine.ingest(make_event("e2", "analyst_one", 2000, "subagent.spawn",
                           {{"child", std::string("minion")},
                            {"grants", std::string("tool.invoke:system.configure")},
                            {"role", std::string("analyst")}}));
  engine.finish();

  REQUIRE(engine.report().delegations.size() == 1);
  CHECK_FALSE(engine.report().delegations[0].ok);
  CHECK(engine.report().delegations[0].reason_code == "escalation_attempt");
  bool detection = false;
  for (const auto& d : engine.report().detections) {
    if (d.kind == "escalation_attempt") {
      detection = true;
      CHECK(d.prevented);
      CHECK(d.event_ids == std::vector<std::string>{"e2"});
    }
  }
  CHECK(detection);
  CHECK(engine.authz().permissions("minion").empty());
}

TEST_CASE("replay output files are byte-identical across runs") {
  namespace fs = std::filesystem;
  const std::string base = fs::temp_directory_path() / "mi9_determinism";
  fs::remove_all(base);

  for (const char* run : {"r1", "r2"}) {
    GovernanceEngine engine(default_policy());
    replay_file(engine, fixtures_dir() + "/dual_control_late.jsonl");
    engine.report().trace_paths = {"dual_control_late.jsonl"};
    engine.report().write_directory(base + "/" + run);
  }

  for (const auto& entry : fs::directory_iterator(base + "/r1")) {
    const std::string name = entry.path().filename();
    std::ifstream a(entry.path(), std::ios::binary);
    std::ifstream b(base + "/r2/" + name, std::ios::binary);
    REQUIRE(b.good());
    std::stringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    INFO(name);
    CHECK(sa.str() == sb.str());
  }
}

TEST_CASE("log files come out sorted by timestamp") {
  namespace fs = std::filesystem;
  const std::string dir = fs::temp_directory_path() / "mi9_sorted_logs";
  fs::remove_all(dir);

  ScenarioSpec spec;
  spec.seed = 616;
  spec.length = 400;
  AgentSpec a1, a2;
  a1.agent_id = "alpha";
  a1.goals = {{"data analysis", "analysis", 0.0}};
  a2.agent_id = "beta";
  a2.goals = {{"execute retail transfers", "trading", 0.0}};
  spec.agents = {a1, a2};
  spec.attacks.push_back({AttackType::DualControlBypass, "beta", 200});
  GeneratedScenario scenario = generate_scenario(spec);

  GovernanceEngine engine(default_policy());
  for (const Event& e : scenario.events) engine.ingest(e);
  engine.finish();
  engine.report().write_directory(dir);

  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".jsonl") continue;
    std::ifstream in(entry.path());
    std::string line;
    std::int64_t prev = std::numeric_limits<std::int64_t>::min();
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto j = nlohmann::json::parse(line);
      std::int64_t ts = j.value("at_ms", j.value("detected_at_ms", j.value("emitted_at_ms",
                        static_cast<std::int64_t>(0))));
      INFO(entry.path().filename() << ": " << line);
      CHECK(ts >= prev);
      prev = ts;
    }
  }
}

TEST_CASE("late events are flagged and never fabricate violations") {
  Policy p = tiny_policy();
  GovernanceEngine engine(p, EnforcementMode::Observe, 1000);
  engine.ingest(make_event("e1", "a", 1000, "db.read"));
  engine.ingest(make_event("e2", "a", 50'000, "db.read"));
  // Way out of order: transfer stamped long ago arrives now.
  engine.ingest(make_event("e0", "a", 10, "tool.invoke", {{"tool", std::string("bank.transfer")}}));
  engine.ingest(make_event("e3", "a", 80'000, "db.read"));
  engine.finish();

  bool late_warning = false;
  for (const auto& w : engine.report().warnings) late_warning |= w.kind == "late_event";
  CHECK(late_warning);
  CHECK(engine.report().events_late == 1);
}
