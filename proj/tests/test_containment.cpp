#include <catch2/catch_amalgamated.hpp>

#include "mi9/authorization.hpp"
#include "mi9/containment.hpp"
#include "mi9/rng.hpp"

using namespace mi9;

namespace {

Signal violation_signal(bool critical = false) { return {SignalKind::Violation, "v1", critical}; }
Signal drift_signal() { return {SignalKind::DriftAlert, "ds1", false}; }

ContextFactors factors(int v) { return {v, v, v, v, v}; }

}  // namespace

TEST_CASE("score closed form") {
  // tier 4, all factors 3, critical violation: everything maxes out.
  CHECK(score_signals({violation_signal(true)}, RiskTier(4), factors(3)) == 1.0);

  // tier 2, all factors 1, drift alert: 0.5 * (5/15) * 0.45 = 0.075.
  double low = score_signals({drift_signal()}, RiskTier(2), factors(1));
  CHECK_THAT(low, Catch::Matchers::WithinAbs(0.075, 1e-12));
  CHECK(select_level(low) == ContainmentLevel::None);

  // Linear tier weighting: tier 4 doubles tier 2.
  double t2 = score_signals({violation_signal()}, RiskTier(2), factors(2));
  double t4 = score_signals({violation_signal()}, RiskTier(4), factors(2));
  CHECK_THAT(t4, Catch::Matchers::WithinAbs(2.0 * t2, 1e-12));

  // Strongest signal dominates.
  double combined = score_signals({drift_signal(), violation_signal(true)}, RiskTier(4), factors(3));
  CHECK(combined == 1.0);

  CHECK_THROWS_AS(score_signals({}, RiskTier(2), factors(2)), Error);
  ContextFactors bad = factors(2);
  bad.regulatory_scope = 4;
  CHECK_THROWS_AS(score_signals({drift_signal()}, RiskTier(2), bad), Error);
}

TEST_CASE("level thresholds are inclusive at boundaries") {
  CHECK(select_level(0.05) == ContainmentLevel::None);
  CHECK(select_level(0.1) == ContainmentLevel::Monitoring);
  CHECK(select_level(0.3) == ContainmentLevel::PlanningIntervention);
  CHECK(select_level(0.5) == ContainmentLevel::ToolRestriction);
  CHECK(select_level(0.75) == ContainmentLevel::ExecutionIsolation);
  CHECK(select_level(0.749999) == ContainmentLevel::ToolRestriction);
  CHECK_THROWS_MATCHES(select_level(1.5), Error, Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.code() == Errc::OutOfRange;
                       }));
}

TEST_CASE("tier monotonicity with fixed signals and factors") {
  for (int low = 1; low <= 4; ++low) {
    for (int high = low; high <= 4; ++high) {
      for (int f = 1; f <= 3; ++f) {
        for (bool critical : {false, true}) {
          double s_low = score_signals({violation_signal(critical)}, RiskTier(low), factors(f));
          double s_high = score_signals({violation_signal(critical)}, RiskTier(high), factors(f));
          CHECK(select_level(s_high) >= select_level(s_low));
        }
      }
    }
  }
}

TEST_CASE("ratchet: levels never decrease without an operator release") {
  EscalationController controller;
  SplitMix64 rng(8080);
  ContainmentLevel previous = ContainmentLevel::None;
  for (int i = 0; i < 1000; ++i) {
    std::vector<Signal> signals;
    switch (rng.bounded(3)) {
      case 0: signals.push_back(drift_signal()); break;
      case 1: signals.push_back(violation_signal()); break;
      default: signals.push_back(violation_signal(true)); break;
    }
    RiskTier tier(1 + static_cast<int>(rng.bounded(4)));
    auto esc = controller.ingest("agent", signals, tier, factors(1 + static_cast<int>(rng.bounded(3))), i);
    ContainmentLevel now = controller.level_of("agent");
    CHECK(now >= previous);
    if (esc) {
      CHECK(esc->to_level == now);
      CHECK(esc->to_level != esc->from_level);
      CHECK(esc->from_level == previous);
    }
    previous = now;
  }

  auto released = controller.release("agent", 5000);
  if (previous != ContainmentLevel::None) {
    REQUIRE(released.has_value());
    CHECK(released->to_level == ContainmentLevel::None);
  }
  CHECK(controller.level_of("agent") == ContainmentLevel::None);
  CHECK_FALSE(controller.release("agent", 5001).has_value());
}

TEST_CASE("weaker signals after an escalation do not emit events") {
  EscalationController controller;
  auto first = controller.ingest("a", {violation_signal(true)}, RiskTier(4), factors(3), 1);
  REQUIRE(first.has_value());
  CHECK(first->to_level == ContainmentLevel::ExecutionIsolation);
  auto second = controller.ingest("a", {drift_signal()}, RiskTier(1), factors(1), 2);
  CHECK_FALSE(second.has_value());
  CHECK(controller.level_of("a") == ContainmentLevel::ExecutionIsolation);
}

TEST_CASE("cascade: descendants of a restricted parent are raised") {
  AuthorizationMonitor authz;
  authz.register_agent("parent");
  Permission p;
  p.resource = "db.read";
  authz.grant_direct("parent", p);
  REQUIRE(authz.record_delegation("parent", "kid_a", {"db.read"}, "", std::nullopt, 0).ok);
  REQUIRE(authz.record_delegation("parent", "kid_b", {"db.read"}, "", std::nullopt, 0).ok);
  REQUIRE(authz.record_delegation("kid_a", "grandkid", {"db.read"}, "", std::nullopt, 0).ok);

  EscalationController controller;
  auto esc = controller.ingest("parent", {violation_signal(true)}, RiskTier(4), factors(3), 10);
  REQUIRE(esc.has_value());
  REQUIRE(esc->to_level >= ContainmentLevel::ToolRestriction);

  auto cascaded = controller.cascade(authz.graph(), "parent", 10);
  REQUIRE(cascaded.size() == 3);
  for (const EscalationEvent& e : cascaded) {
    CHECK(e.to_level == ContainmentLevel::ToolRestriction);
    CHECK(e.cascaded_from == "parent");
    CHECK(controller.level_of(e.agent_id) >= ContainmentLevel::ToolRestriction);
  }

  // Cascade soundness against the graph's own descendant enumeration.
  for (const std::string& d : authz.graph().descendants("parent")) {
    CHECK(controller.level_of(d) >= ContainmentLevel::ToolRestriction);
  }
}

TEST_CASE("cascade only fires at tool restriction and above") {
  AuthorizationMonitor authz;
  authz.register_agent("parent");
  Permission p;
  p.resource = "db.read";
  authz.grant_direct("parent", p);
  REQUIRE(authz.record_delegation("parent", "kid", {"db.read"}, "", std::nullopt, 0).ok);

  EscalationController controller;
  // Monitoring-level escalation: no cascade.
  auto esc = controller.ingest("parent", {drift_signal()}, RiskTier(2), factors(2), 5);
  REQUIRE(esc.has_value());
  CHECK(esc->to_level == ContainmentLevel::Monitoring);
  CHECK(controller.cascade(authz.graph(), "parent", 5).empty());
  CHECK(controller.level_of("kid") == ContainmentLevel::None);
}

TEST_CASE("cascade matches exhaustive descendant traversal on random small graphs") {
  SplitMix64 rng(3344);
  for (int trial = 0; trial < 200; ++trial) {
    AuthorizationMonitor authz;
    const int n = 2 + static_cast<int>(rng.bounded(4));  // up to 5 nodes
    std::vector<std::string> nodes;
    for (int i = 0; i < n; ++i) {
      nodes.push_back("n" + std::to_string(i));
      authz.register_agent(nodes.back());
    }
    Permission p;
    p.resource = "db.read";
    authz.grant_direct(nodes[0], p);
    std::map<std::string, std::vector<std::string>> children;
    for (int i = 1; i < n; ++i) {
      const std::string parent = nodes[rng.bounded(static_cast<std::uint64_t>(i))];
      if (authz.record_delegation(parent, nodes[static_cast<std::size_t>(i)], {"db.read"}, "",
                                  std::nullopt, 0)
              .ok) {
        children[parent].push_back(nodes[static_cast<std::size_t>(i)]);
      }
    }

    EscalationController controller;
    controller.ingest(nodes[0], {violation_signal(true)}, RiskTier(4), factors(3), 1);
    controller.cascade(authz.graph(), nodes[0], 1);

    // Oracle: BFS over the recorded child lists.
    std::set<std::string> expected;
    std::vector<std::string> stack{nodes[0]};
    while (!stack.empty()) {
      std::string cur = stack.back();
      stack.pop_back();
      for (const auto& child : children[cur]) {
        if (expected.insert(child).second) stack.push_back(child);
      }
    }
    for (const auto& node : nodes) {
      if (node == nodes[0]) continue;
      if (expected.count(node)) {
        CHECK(controller.level_of(node) >= ContainmentLevel::ToolRestriction);
      } else {
        CHECK(controller.level_of(node) == ContainmentLevel::None);
      }
    }
  }
}

TEST_CASE("subagent violation places the parent under monitoring") {
  EscalationController controller;
  auto esc = controller.notify_parent("parent", "child", 7);
  REQUIRE(esc.has_value());
  CHECK(esc->to_level == ContainmentLevel::Monitoring);
  CHECK(esc->cascaded_from == "child");
  // Already monitored parents are untouched.
  CHECK_FALSE(controller.notify_parent("parent", "child", 8).has_value());
}

TEST_CASE("joint containment raises every participant to planning intervention") {
  EscalationController controller;
  auto events = controller.joint_containment({"b_agent", "a_agent", "b_agent"}, violation_signal(), 9);
  REQUIRE(events.size() == 2);
  CHECK(events[0].agent_id == "a_agent");  // deterministic sorted order
  CHECK(events[1].agent_id == "b_agent");
  for (const auto& e : events) CHECK(e.to_level == ContainmentLevel::PlanningIntervention);

  // Participants already at or above the floor are untouched.
  auto again = controller.joint_containment({"a_agent"}, violation_signal(), 10);
  CHECK(again.empty());
}
