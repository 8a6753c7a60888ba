#include <catch2/catch_amalgamated.hpp>

#include <algorithm>

#include "mi9/conformance.hpp"
#include "mi9/reorder.hpp"
#include "mi9/rng.hpp"

using namespace mi9;

namespace {

Event make_event(std::string id, std::string agent, std::int64_t ts, std::string verb,
                 std::map<std::string, PayloadValue> payload = {}) {
  Event e;
  e.event_id = std::move(id);
  e.agent_id = std::move(agent);
  e.session_id = "s1";
  e.timestamp_ms = ts;
  e.verb = std::move(verb);
  e.category = classify_verb(e.verb);
  e.risk_tier = 2;
  e.payload = std::move(payload);
  return e;
}

RuleSpec dual_control_spec() {
  RuleSpec r;
  r.rule_id = "dual-control-transfer";
  r.priority = 0;
  r.mode = RuleMode::RequiredFollowUp;
  r.critical = true;
  r.deadline_ms = 60'000;
  StepSpec transfer;
  transfer.predicate.atoms = {verb_eq("tool.invoke"), payload_eq("tool", std::string("bank.transfer"))};
  StepSpec approval;
  approval.predicate.atoms = {verb_eq("approve.action"), payload_eq("role", std::string("manager"))};
  r.steps = {transfer, approval};
  return r;
}

RuleSpec forbidden_trade_spec() {
  RuleSpec r;
  r.rule_id = "trade-sequence";
  r.priority = 1;
  r.mode = RuleMode::ForbiddenSequence;
  r.window_ms = 600'000;
  for (const char* tool : {"market_analysis", "client_outreach", "trade_execution"}) {
    StepSpec step;
    step.predicate.atoms = {verb_eq("tool.invoke"), payload_eq("tool", std::string(tool))};
    r.steps.push_back(step);
  }
  return r;
}

Event transfer_event(std::string id, std::int64_t ts, std::string agent = "a1") {
  return make_event(std::move(id), std::move(agent), ts, "tool.invoke",
                    {{"tool", std::string("bank.transfer")}, {"amount", std::int64_t(50000)}});
}

Event approval_event(std::string id, std::int64_t ts, std::string agent = "a1") {
  return make_event(std::move(id), std::move(agent), ts, "approve.action",
                    {{"role", std::string("manager")}});
}

}  // namespace

TEST_CASE("rule compilation validates shape") {
  CHECK(CompiledRule(dual_control_spec()).state_count() == 3);
  CHECK(CompiledRule(forbidden_trade_spec()).state_count() == 4);

  RuleSpec too_many = forbidden_trade_spec();
  StepSpec filler;
  filler.predicate.atoms = {verb_eq("db.read")};
  while (too_many.steps.size() <= 10) too_many.steps.push_back(filler);
  CHECK_THROWS_MATCHES(CompiledRule(too_many), Error,
                       Catch::Matchers::Predicate<Error>(
                           [](const Error& e) { return e.code() == Errc::TooManySteps; }));

  RuleSpec no_deadline = dual_control_spec();
  no_deadline.deadline_ms.reset();
  CHECK_THROWS_MATCHES(CompiledRule(no_deadline), Error,
                       Catch::Matchers::Predicate<Error>(
                           [](const Error& e) { return e.code() == Errc::MissingDeadline; }));

  RuleSpec empty_pred = dual_control_spec();
  empty_pred.steps[1].predicate.atoms.clear();
  CHECK_THROWS_MATCHES(CompiledRule(empty_pred), Error,
                       Catch::Matchers::Predicate<Error>(
                           [](const Error& e) { return e.code() == Errc::EmptyPredicate; }));

  // The cap is configurable.
  CHECK_NOTHROW(CompiledRule(too_many, 16));
}

TEST_CASE("dual control: approval in time resets to idle") {
  ConformanceEngine engine({CompiledRule(dual_control_spec())});
  auto first = engine.process(transfer_event("e1", 0), "a1", RuleScope::Agent);
  CHECK(first.violations.empty());
  REQUIRE(first.warnings.size() == 1);
  CHECK(first.warnings[0].state_index == 1);

  auto second = engine.process(approval_event("e2", 30'000), "a1", RuleScope::Agent);
  CHECK(second.violations.empty());
  REQUIRE(second.compliant_completions.size() == 1);
  CHECK(second.compliant_completions[0].first == "dual-control-transfer");
  CHECK(engine.live_instances("a1") == 0);

  CHECK(engine.expire_timeouts(120'000).empty());
}

TEST_CASE("dual control: deadline expiry emits exactly one violation") {
  ConformanceEngine engine({CompiledRule(dual_control_spec())});
  engine.process(transfer_event("e1", 0), "a1", RuleScope::Agent);

  CHECK(engine.expire_timeouts(59'999).empty());
  CHECK(engine.expire_timeouts(60'000).empty());  // deadline not yet strictly passed
  auto violations = engine.expire_timeouts(60'001);
  REQUIRE(violations.size() == 1);
  CHECK(violations[0].kind == ViolationKind::DeadlineExpired);
  CHECK(violations[0].rule_id == "dual-control-transfer");
  CHECK(violations[0].agent_id == "a1");
  CHECK(violations[0].triggering_event_ids == std::vector<std::string>{"e1"});
  CHECK(violations[0].detected_at_ms == 60'001);
  // Instance reset; no second report.
  CHECK(engine.expire_timeouts(70'000).empty());
}

TEST_CASE("approval exactly at the deadline is compliant") {
  ConformanceEngine engine({CompiledRule(dual_control_spec())});
  engine.process(transfer_event("e1", 0), "a1", RuleScope::Agent);
  CHECK(engine.expire_timeouts(60'000).empty());
  auto out = engine.process(approval_event("e2", 60'000), "a1", RuleScope::Agent);
  CHECK(out.compliant_completions.size() == 1);
}

TEST_CASE("unrelated events in idle state are NoChange") {
  ConformanceEngine engine({CompiledRule(dual_control_spec())});
  auto out = engine.process(make_event("e1", "a1", 10, "memory.read"), "a1", RuleScope::Agent);
  CHECK(out.violations.empty());
  CHECK(out.warnings.empty());
  CHECK(engine.live_instances("a1") == 0);
}

TEST_CASE("forbidden sequence completes to a violation") {
  ConformanceEngine engine({CompiledRule(forbidden_trade_spec())});
  auto mk = [&](std::string id, std::int64_t ts, const char* tool) {
    return make_event(std::move(id), "a1", ts, "tool.invoke", {{"tool", std::string(tool)}});
  };
  CHECK(engine.process(mk("e1", 1000, "market_analysis"), "a1", RuleScope::Agent).violations.empty());
  // Interleaved benign event leaves state unchanged.
  CHECK(engine.process(make_event("e2", "a1", 1500, "db.read"), "a1", RuleScope::Agent).violations.empty());
  CHECK(engine.process(mk("e3", 2000, "client_outreach"), "a1", RuleScope::Agent).violations.empty());
  auto out = engine.process(mk("e4", 3000, "trade_execution"), "a1", RuleScope::Agent);
  REQUIRE(out.violations.size() == 1);
  CHECK(out.violations[0].kind == ViolationKind::SequenceCompleted);
  CHECK(out.violations[0].triggering_event_ids == std::vector<std::string>{"e1", "e3", "e4"});
  CHECK(engine.live_instances("a1") == 0);
}

TEST_CASE("forbidden sequence window reset is silent") {
  RuleSpec spec = forbidden_trade_spec();
  spec.window_ms = 10'000;
  ConformanceEngine engine({CompiledRule(spec)});
  auto mk = [&](std::string id, std::int64_t ts, const char* tool) {
    return make_event(std::move(id), "a1", ts, "tool.invoke", {{"tool", std::string(tool)}});
  };
  engine.process(mk("e1", 0, "market_analysis"), "a1", RuleScope::Agent);
  engine.process(mk("e2", 5000, "client_outreach"), "a1", RuleScope::Agent);
  CHECK(engine.expire_timeouts(20'000).empty());  // window elapsed; no report
  CHECK(engine.live_instances("a1") == 0);
  // Final step alone after the reset cannot complete anything.
  CHECK(engine.process(mk("e3", 21'000, "trade_execution"), "a1", RuleScope::Agent).violations.empty());
}

TEST_CASE("latest anchor re-arms the deadline") {
  ConformanceEngine engine({CompiledRule(dual_control_spec())});
  engine.process(transfer_event("e1", 0), "a1", RuleScope::Agent);
  engine.process(transfer_event("e2", 40'000), "a1", RuleScope::Agent);  // re-anchor
  CHECK(engine.expire_timeouts(60'001).empty());  // original deadline superseded
  auto violations = engine.expire_timeouts(100'001);
  REQUIRE(violations.size() == 1);
  CHECK(violations[0].triggering_event_ids == std::vector<std::string>{"e2"});
}

TEST_CASE("correlation keys track independent instances") {
  RuleSpec spec = dual_control_spec();
  spec.correlate_on = "transfer_id";
  ConformanceEngine engine({CompiledRule(spec)});

  auto transfer = [&](std::string id, std::int64_t ts, const char* tid) {
    return make_event(std::move(id), "a1", ts, "tool.invoke",
                      {{"tool", std::string("bank.transfer")}, {"transfer_id", std::string(tid)}});
  };
  auto approval = [&](std::string id, std::int64_t ts, const char* tid) {
    return make_event(std::move(id), "a1", ts, "approve.action",
                      {{"role", std::string("manager")}, {"transfer_id", std::string(tid)}});
  };

  engine.process(transfer("e1", 0, "t1"), "a1", RuleScope::Agent);
  engine.process(transfer("e2", 1000, "t2"), "a1", RuleScope::Agent);
  CHECK(engine.live_instances("a1") == 2);
  engine.process(approval("e3", 30'000, "t1"), "a1", RuleScope::Agent);
  CHECK(engine.live_instances("a1") == 1);
  auto violations = engine.expire_timeouts(61'001);
  REQUIRE(violations.size() == 1);
  CHECK(violations[0].triggering_event_ids == std::vector<std::string>{"e2"});
  // Events lacking the correlation key cannot touch correlated rules.
  auto out = engine.process(approval_event("e4", 1500), "a1", RuleScope::Agent);
  CHECK(out.violations.empty());
  CHECK(out.warnings.empty());
}

TEST_CASE("per-agent isolation and lazy instance creation") {
  ConformanceEngine engine({CompiledRule(dual_control_spec())});
  engine.process(transfer_event("e1", 0, "alice"), "alice", RuleScope::Agent);
  auto out = engine.process(approval_event("e2", 1000, "bob"), "bob", RuleScope::Agent);
  CHECK(out.violations.empty());
  CHECK(engine.live_instances("alice") == 1);
  CHECK(engine.live_instances("bob") == 0);

  auto violations = engine.expire_timeouts(60'001);
  REQUIRE(violations.size() == 1);
  CHECK(violations[0].agent_id == "alice");
}

TEST_CASE("two agents, one expired deadline, exactly one violation") {
  // Brute-force over which agents anchor in a 3-agent fixture.
  for (int mask = 0; mask < 8; ++mask) {
    ConformanceEngine engine({CompiledRule(dual_control_spec())});
    const char* agents[] = {"a", "b", "c"};
    std::vector<std::string> anchored;
    for (int i = 0; i < 3; ++i) {
      if (mask & (1 << i)) {
        engine.process(transfer_event(std::string("t") + agents[i], 1000 * i, agents[i]),
                       agents[i], RuleScope::Agent);
        anchored.push_back(agents[i]);
      }
    }
    // Approve all but the lexically first anchored agent.
    for (std::size_t i = 1; i < anchored.size(); ++i) {
      engine.process(approval_event("ap" + anchored[i], 30'000, anchored[i]), anchored[i],
                     RuleScope::Agent);
    }
    auto violations = engine.expire_timeouts(70'000);
    if (anchored.empty()) {
      CHECK(violations.empty());
    } else {
      REQUIRE(violations.size() == 1);
      CHECK(violations[0].agent_id == anchored[0]);
    }
  }
}

TEST_CASE("k-linearity probe: 3 idle rules evaluate exactly 3 predicates") {
  std::vector<CompiledRule> rules;
  for (int i = 0; i < 3; ++i) {
    RuleSpec spec = forbidden_trade_spec();
    spec.rule_id = "rule-" + std::to_string(i);
    rules.emplace_back(spec);
  }
  ConformanceEngine engine(std::move(rules));
  const std::uint64_t before = engine.predicate_evaluations();
  auto out = engine.process(make_event("e1", "a1", 0, "memory.read"), "a1", RuleScope::Agent);
  CHECK(out.violations.empty());
  CHECK(engine.predicate_evaluations() - before == 3);
}

TEST_CASE("overlapping violations report in priority order, deterministically") {
  RuleSpec low = forbidden_trade_spec();
  low.rule_id = "zz-low-priority";
  low.priority = 1;
  RuleSpec high = forbidden_trade_spec();
  high.rule_id = "aa-high-priority";
  high.priority = 0;

  for (bool reversed : {false, true}) {
    std::vector<CompiledRule> rules;
    if (reversed) {
      rules.emplace_back(low);
      rules.emplace_back(high);
    } else {
      rules.emplace_back(high);
      rules.emplace_back(low);
    }
    ConformanceEngine engine(std::move(rules));
    auto mk = [&](std::string id, std::int64_t ts, const char* tool) {
      return make_event(std::move(id), "a1", ts, "tool.invoke", {{"tool", std::string(tool)}});
    };
    engine.process(mk("e1", 0, "market_analysis"), "a1", RuleScope::Agent);
    engine.process(mk("e2", 1000, "client_outreach"), "a1", RuleScope::Agent);
    auto out = engine.process(mk("e3", 2000, "trade_execution"), "a1", RuleScope::Agent);
    REQUIRE(out.violations.size() == 2);
    CHECK(out.violations[0].rule_id == "aa-high-priority");
    CHECK(out.violations[1].rule_id == "zz-low-priority");
  }
}

TEST_CASE("instance count stays bounded by rules plus correlation values") {
  RuleSpec plain = forbidden_trade_spec();
  RuleSpec correlated = dual_control_spec();
  correlated.correlate_on = "transfer_id";
  ConformanceEngine engine({CompiledRule(plain), CompiledRule(correlated)});

  SplitMix64 rng(5);
  std::set<std::string> correlation_values;
  for (int i = 0; i < 400; ++i) {
    std::int64_t ts = i * 100;
    if (rng.bounded(3) == 0) {
      std::string tid = "t" + std::to_string(rng.bounded(5));
      correlation_values.insert(tid);
      engine.process(make_event("e" + std::to_string(i), "a1", ts, "tool.invoke",
                                {{"tool", std::string("bank.transfer")},
                                 {"transfer_id", tid}}),
                     "a1", RuleScope::Agent);
    } else {
      engine.process(make_event("e" + std::to_string(i), "a1", ts, "tool.invoke",
                                {{"tool", std::string("market_analysis")}}),
                     "a1", RuleScope::Agent);
    }
    CHECK(engine.live_instances("a1") <= 1 + correlation_values.size());
  }
}

TEST_CASE("predicates match on tier, category, and payload comparisons") {
  RuleSpec spec;
  spec.rule_id = "high-tier-writes";
  spec.mode = RuleMode::ForbiddenSequence;
  StepSpec s1;
  s1.predicate.atoms = {make_atom(Atom::Field::RiskTier, CmpOp::Ge, std::int64_t(3)),
                        make_atom(Atom::Field::Category, CmpOp::Eq, std::string("action")),
                        make_atom(Atom::Field::Payload, CmpOp::Ge, std::int64_t(10'000), "amount")};
  StepSpec s2;
  s2.predicate.atoms = {make_atom(Atom::Field::Verb, CmpOp::Prefix, std::string("db."))};
  spec.steps = {s1, s2};
  ConformanceEngine engine({CompiledRule(spec)});

  Event low_tier = make_event("e1", "a1", 0, "tool.invoke", {{"amount", std::int64_t(20'000)}});
  low_tier.risk_tier = 2;
  CHECK(engine.process(low_tier, "a1", RuleScope::Agent).warnings.empty());

  Event small = make_event("e2", "a1", 10, "tool.invoke", {{"amount", std::int64_t(500)}});
  small.risk_tier = 4;
  CHECK(engine.process(small, "a1", RuleScope::Agent).warnings.empty());

  Event anchor = make_event("e3", "a1", 20, "tool.invoke", {{"amount", std::int64_t(20'000)}});
  anchor.risk_tier = 4;
  CHECK(engine.process(anchor, "a1", RuleScope::Agent).warnings.size() == 1);

  Event closing = make_event("e4", "a1", 30, "db.write");
  closing.risk_tier = 4;
  auto out = engine.process(closing, "a1", RuleScope::Agent);
  REQUIRE(out.violations.size() == 1);
  CHECK(out.violations[0].triggering_event_ids == std::vector<std::string>{"e3", "e4"});
}

TEST_CASE("reorder buffer releases sorted within the window") {
  ReorderBuffer buffer(5000);
  std::vector<std::string> released;
  auto drain = [&](std::vector<ReleasedEvent> batch) {
    for (auto& r : batch) {
      CHECK_FALSE(r.late);
      released.push_back(r.event.event_id);
    }
  };
  drain(buffer.push(make_event("e2", "a1", 2000, "db.read")));
  drain(buffer.push(make_event("e1", "a1", 1000, "db.read")));
  drain(buffer.push(make_event("e3", "a1", 7000, "db.read")));   // releases e1, e2
  drain(buffer.push(make_event("e4", "a1", 13'000, "db.read")));  // releases e3
  drain(buffer.flush());
  CHECK(released == std::vector<std::string>{"e1", "e2", "e3", "e4"});
}

TEST_CASE("reorder buffer flags events beyond the window as late") {
  ReorderBuffer buffer(1000);
  buffer.push(make_event("e1", "a1", 1000, "db.read"));
  buffer.push(make_event("e9", "a1", 50'000, "db.read"));  // releases e1
  auto batch = buffer.push(make_event("e0", "a1", 10, "db.read"));
  REQUIRE(batch.size() == 1);
  CHECK(batch[0].late);
  CHECK(buffer.late_count() == 1);
}

namespace {

struct MiniTrace {
  std::vector<Event> events;
};

// Random small traces over the two default rule shapes.
MiniTrace random_trace(SplitMix64& rng, int n_events) {
  MiniTrace t;
  const char* agents[] = {"a1", "a2"};
  std::int64_t ts = 1000;
  for (int i = 0; i < n_events; ++i) {
    ts += rng.range(50, 2500);
    std::string agent = agents[rng.bounded(2)];
    std::string id = "e" + std::to_string(100000 + i);
    switch (rng.bounded(6)) {
      case 0:
        t.events.push_back(make_event(id, agent, ts, "tool.invoke",
                                      {{"tool", std::string("bank.transfer")},
                                       {"amount", std::int64_t(rng.bounded(90000))}}));
        break;
      case 1:
        t.events.push_back(make_event(id, agent, ts, "approve.action",
                                      {{"role", std::string(rng.bounded(2) ? "manager" : "analyst")}}));
        break;
      case 2:
        t.events.push_back(make_event(id, agent, ts, "tool.invoke",
                                      {{"tool", std::string("market_analysis")}}));
        break;
      case 3:
        t.events.push_back(make_event(id, agent, ts, "tool.invoke",
                                      {{"tool", std::string("client_outreach")}}));
        break;
      case 4:
        t.events.push_back(make_event(id, agent, ts, "tool.invoke",
                                      {{"tool", std::string("trade_execution")}}));
        break;
      default:
        t.events.push_back(make_event(id, agent, ts, "memory.read"));
        break;
    }
  }
  return t;
}

struct ViolationKey {
  std::string rule_id;
  std::string agent_id;
  int kind;
  std::vector<std::string> ids;
  auto operator<=>(const ViolationKey&) const = default;
};

std::vector<ViolationKey> run_pipeline(const std::vector<Event>& arrival_order,
                                       std::int64_t window_ms) {
  ConformanceEngine engine({CompiledRule(dual_control_spec()), CompiledRule(forbidden_trade_spec())});
  ReorderBuffer buffer(window_ms);
  std::vector<ViolationKey> out;
  std::int64_t watermark = 0;
  auto handle = [&](std::vector<ReleasedEvent> batch) {
    for (ReleasedEvent& r : batch) {
      if (!r.late) watermark = std::max(watermark, r.event.timestamp_ms);
      for (const Violation& v : engine.expire_timeouts(watermark)) {
        out.push_back({v.rule_id, v.agent_id, static_cast<int>(v.kind), v.triggering_event_ids});
      }
      auto res = engine.process(r.event, r.event.agent_id, RuleScope::Agent);
      for (const Violation& v : res.violations) {
        out.push_back({v.rule_id, v.agent_id, static_cast<int>(v.kind), v.triggering_event_ids});
      }
    }
  };
  for (const Event& e : arrival_order) handle(buffer.push(e));
  handle(buffer.flush());
  watermark = std::max(watermark, buffer.watermark_ms());
  for (const Violation& v : engine.expire_timeouts(watermark)) {
    out.push_back({v.rule_id, v.agent_id, static_cast<int>(v.kind), v.triggering_event_ids});
  }
  return out;
}

}  // namespace

TEST_CASE("bounded reordering never adds violations") {
  const std::int64_t window = 5000;
  SplitMix64 rng(20250810);
  int traces_with_violations = 0;
  for (int trial = 0; trial < 150; ++trial) {
    MiniTrace trace = random_trace(rng, 120);
    std::stable_sort(trace.events.begin(), trace.events.end(),
                     [](const Event& a, const Event& b) { return a.order_key() < b.order_key(); });

    auto sorted_violations = run_pipeline(trace.events, window);
    if (!sorted_violations.empty()) traces_with_violations++;

    // Jitter each event by less than the window and re-sort by jittered time:
    // every event is displaced by strictly less than window_ms.
    std::vector<std::pair<std::int64_t, std::size_t>> jittered;
    for (std::size_t i = 0; i < trace.events.size(); ++i) {
      jittered.emplace_back(trace.events[i].timestamp_ms + rng.range(0, window - 1), i);
    }
    std::stable_sort(jittered.begin(), jittered.end());
    std::vector<Event> scrambled;
    for (const auto& [jts, idx] : jittered) scrambled.push_back(trace.events[idx]);

    auto scrambled_violations = run_pipeline(scrambled, window);

    auto sorted_copy = sorted_violations;
    auto scrambled_copy = scrambled_violations;
    std::sort(sorted_copy.begin(), sorted_copy.end());
    std::sort(scrambled_copy.begin(), scrambled_copy.end());
    // Within the bounded window the released stream re-sorts exactly, so the
    // violation sets are equal (subset in particular).
    CHECK(sorted_copy == scrambled_copy);
    CHECK(std::includes(sorted_copy.begin(), sorted_copy.end(), scrambled_copy.begin(),
                        scrambled_copy.end()));
  }
  CHECK(traces_with_violations > 10);  // the property is not vacuous
}

TEST_CASE("sorted replay is deterministic byte for byte") {
  SplitMix64 rng(77);
  MiniTrace trace = random_trace(rng, 200);
  std::stable_sort(trace.events.begin(), trace.events.end(),
                   [](const Event& a, const Event& b) { return a.order_key() < b.order_key(); });
  auto first = run_pipeline(trace.events, 5000);
  auto second = run_pipeline(trace.events, 5000);
  CHECK(first == second);
}
