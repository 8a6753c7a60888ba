#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mi9/containment_level.hpp"
#include "mi9/errors.hpp"
#include "mi9/event.hpp"
#include "mi9/predicate.hpp"

namespace mi9 {

enum class Effect { Allow, AllowReadOnly };
enum class Provenance { Direct, Delegated };

// Resource identifiers are "verb" or "verb:qualifier" where the qualifier is
// the event's tool/endpoint attribute. Grants may end in '*' for prefix
// coverage; a bare verb covers every qualified form of that verb.
inline std::string resource_of(const Event& e) { return e.action_symbol(); }

inline bool resource_matches(const std::string& pattern, const std::string& resource) {
  if (!pattern.empty() && pattern.back() == '*') {
    std::string stem = pattern.substr(0, pattern.size() - 1);
    return resource.compare(0, stem.size(), stem) == 0;
  }
  if (pattern == resource) return true;
  // Bare verb covers "verb:<qualifier>".
  return resource.size() > pattern.size() && resource.compare(0, pattern.size(), pattern) == 0 &&
         resource[pattern.size()] == ':' && pattern.find(':') == std::string::npos;
}

// Pattern coverage for delegation subset checks: does `broad` grant at least
// everything `narrow` grants?
inline bool resource_covers(const std::string& broad, const std::string& narrow) {
  if (broad == narrow) return true;
  const bool broad_wild = !broad.empty() && broad.back() == '*';
  const bool narrow_wild = !narrow.empty() && narrow.back() == '*';
  std::string broad_stem = broad_wild ? broad.substr(0, broad.size() - 1) : broad;
  std::string narrow_stem = narrow_wild ? narrow.substr(0, narrow.size() - 1) : narrow;
  if (broad_wild) return narrow_stem.compare(0, broad_stem.size(), broad_stem) == 0;
  if (narrow_wild) return false;  // a literal grant never covers a wildcard
  return resource_matches(broad, narrow);
}

struct Permission {
  std::string resource;
  Effect effect = Effect::Allow;
  std::vector<Atom> constraints;  // payload predicates, all must hold
  std::optional<std::string> goal_scope;  // exact goal or trailing-'*' pattern
  std::optional<std::int64_t> expires_at_ms;
  Provenance provenance = Provenance::Direct;
  std::string granted_by;      // delegating agent for delegated grants
  int depth = 0;               // chain length from the direct root; >=1 when delegated
  std::uint64_t grant_id = 0;  // unique, assigned by the monitor
  std::uint64_t parent_grant_id = 0;  // 0 for direct grants

  bool expired(std::int64_t now_ms) const { return expires_at_ms && *expires_at_ms < now_ms; }

  bool goal_scope_matches(const std::string& goal) const {
    if (!goal_scope) return true;
    const std::string& pattern = *goal_scope;
    if (!pattern.empty() && pattern.back() == '*') {
      std::string stem = pattern.substr(0, pattern.size() - 1);
      return goal.compare(0, stem.size(), stem) == 0;
    }
    return goal == pattern;
  }
};

// Live view of one agent used by authorization decisions.
struct AgentContext {
  std::string agent_id;
  std::string goal_id;
  int risk_tier = 1;
  ContainmentLevel active_containment = ContainmentLevel::None;
  int recent_signals = 0;  // drift/violation signals in the trailing window
  std::string role;
};

enum class Verdict { Allow, AllowReadOnly, Deny };

inline std::string_view verdict_name(Verdict v) {
  switch (v) {
    case Verdict::Allow: return "allow";
    case Verdict::AllowReadOnly: return "allow_read_only";
    case Verdict::Deny: return "deny";
  }
  return "deny";
}

struct Decision {
  Verdict verdict = Verdict::Deny;
  std::string reason_code;  // machine-readable; always present for Deny
  std::string reason;
  std::int64_t evaluated_at_ms = 0;
  std::string resource;            // requested resource (substituted variant for read-only)
  std::uint64_t grant_id = 0;      // grant behind an allow
  bool simulated_response = false; // isolation substituted an inert response
};

enum class PermissionAction { Retained, Narrowed, Revoked };

inline std::string_view permission_action_name(PermissionAction a) {
  switch (a) {
    case PermissionAction::Retained: return "retained";
    case PermissionAction::Narrowed: return "narrowed";
    case PermissionAction::Revoked: return "revoked";
  }
  return "retained";
}

enum class ShiftTrigger { GoalChange, TierReassessment, ContainmentChange, DriftAlert };

// Parent->child grant edges with provenance. Grants always reference the
// covering parent grant, so the chain from any delegated permission back to a
// direct root is explicit and auditable.
class DelegationGraph {
 public:
  struct Edge {
    std::string parent;
    std::string child;
    std::vector<std::uint64_t> grant_ids;
    std::int64_t granted_at_ms = 0;
    std::optional<std::int64_t> expires_at_ms;
  };

  bool would_create_cycle(const std::string& parent, const std::string& child) const {
    if (parent == child) return true;
    // Adding parent->child cycles iff parent is reachable from child.
    std::set<std::string> seen;
    std::vector<std::string> stack{child};
    while (!stack.empty()) {
      std::string cur = stack.back();
      stack.pop_back();
      if (cur == parent) return true;
      if (!seen.insert(cur).second) continue;
      auto it = children_.find(cur);
      if (it == children_.end()) continue;
      for (const auto& next : it->second) stack.push_back(next);
    }
    return false;
  }

  void add_edge(Edge edge) {
    children_[edge.parent].insert(edge.child);
    parents_[edge.child].insert(edge.parent);
    edges_.push_back(std::move(edge));
  }

  // Deterministic (sorted, deduplicated) transitive descendants.
  std::vector<std::string> descendants(const std::string& agent) const {
    std::set<std::string> seen;
    std::vector<std::string> stack{agent};
    while (!stack.empty()) {
      std::string cur = stack.back();
      stack.pop_back();
      auto it = children_.find(cur);
      if (it == children_.end()) continue;
      for (const auto& child : it->second) {
        if (seen.insert(child).second) stack.push_back(child);
      }
    }
    return {seen.begin(), seen.end()};
  }

  // Stable key for the delegation component: the lexically smallest root
  // reachable upward. Agents with no delegation edges key to themselves.
  std::string component_root(const std::string& agent) const {
    std::set<std::string> roots;
    std::set<std::string> seen;
    std::vector<std::string> stack{agent};
    while (!stack.empty()) {
      std::string cur = stack.back();
      stack.pop_back();
      if (!seen.insert(cur).second) continue;
      auto it = parents_.find(cur);
      if (it == parents_.end() || it->second.empty()) {
        roots.insert(cur);
        continue;
      }
      for (const auto& p : it->second) stack.push_back(p);
    }
    return roots.empty() ? agent : *roots.begin();
  }

  bool linked(const std::string& a, const std::string& b) const {
    return component_root(a) == component_root(b);
  }

  const std::vector<Edge>& edges() const { return edges_; }
  bool has_edges(const std::string& agent) const {
    return children_.count(agent) || parents_.count(agent);
  }

 private:
  std::map<std::string, std::set<std::string>> children_;
  std::map<std::string, std::set<std::string>> parents_;
  std::vector<Edge> edges_;
};

struct AuthorityMatrix {
  // role -> resource patterns the role may delegate. Empty matrix = no
  // role-based restriction.
  std::map<std::string, std::vector<std::string>> delegable;

  bool allows(const std::string& role, const std::string& resource) const {
    if (delegable.empty()) return true;
    auto it = delegable.find(role);
    if (it == delegable.end()) return false;
    for (const auto& pattern : it->second) {
      if (resource_covers(pattern, resource)) return true;
    }
    return false;
  }
};

struct AuthzConfig {
  std::vector<std::string> write_class = {"db.write", "bank.transfer", "system.*", "file.write"};
  std::map<std::string, std::string> read_only_variants;  // e.g. db.write -> db.read
  AuthorityMatrix authority;
  std::int64_t default_delegation_expiry_ms = 3'600'000;
};

inline constexpr std::uint64_t kNoGrant = 0;

// Continuous authorization: context-dependent permission evaluation,
// delegation with provenance, and revocation that cascades along grant
// lineage.
class AuthorizationMonitor {
 public:
  explicit AuthorizationMonitor(AuthzConfig config = {}) : config_(std::move(config)) {}

  AgentContext& context(const std::string& agent_id) {
    auto it = contexts_.find(agent_id);
    if (it == contexts_.end()) throw Error(Errc::UnknownAgent, "no context registered: " + agent_id);
    return it->second;
  }

  const AgentContext* find_context(const std::string& agent_id) const {
    auto it = contexts_.find(agent_id);
    return it == contexts_.end() ? nullptr : &it->second;
  }

  bool has_agent(const std::string& agent_id) const { return contexts_.count(agent_id) > 0; }

  AgentContext& register_agent(const std::string& agent_id) {
    auto [it, inserted] = contexts_.emplace(agent_id, AgentContext{});
    if (inserted) it->second.agent_id = agent_id;
    return it->second;
  }

  std::uint64_t grant_direct(const std::string& agent_id, Permission p) {
    register_agent(agent_id);
    p.provenance = Provenance::Direct;
    p.depth = 0;
    p.parent_grant_id = kNoGrant;
    p.grant_id = next_grant_id_++;
    grant_index_[p.grant_id] = agent_id;
    permissions_[agent_id].push_back(std::move(p));
    return next_grant_id_ - 1;
  }

  const std::vector<Permission>& permissions(const std::string& agent_id) const {
    static const std::vector<Permission> empty;
    auto it = permissions_.find(agent_id);
    return it == permissions_.end() ? empty : it->second;
  }

  bool write_class(const std::string& resource) const {
    std::string qualifier = resource;
    auto colon = resource.find(':');
    if (colon != std::string::npos) qualifier = resource.substr(colon + 1);
    for (const auto& pattern : config_.write_class) {
      if (resource_matches(pattern, qualifier) || resource_matches(pattern, resource)) return true;
    }
    return false;
  }

  // Evaluates an action request against the agent's unexpired grants, the
  // current goal context, and the active containment level.
  Decision evaluate(const Event& request, std::int64_t now_ms) const {
    auto ctx_it = contexts_.find(request.agent_id);
    if (ctx_it == contexts_.end()) {
      throw Error(Errc::UnknownAgent, "no context registered: " + request.agent_id);
    }
    const AgentContext& ctx = ctx_it->second;
    const std::string resource = resource_of(request);

    Decision d;
    d.evaluated_at_ms = now_ms;
    d.resource = resource;

    if (ctx.active_containment >= ContainmentLevel::ExecutionIsolation) {
      d.verdict = Verdict::Deny;
      d.reason_code = "isolated";
      d.reason = "agent is execution-isolated; external resources are denied";
      d.simulated_response = request.verb == "tool.invoke" || request.verb == "api.call";
      return d;
    }

    bool saw_goal_mismatch = false;
    bool saw_expired = false;
    bool saw_constraint_failure = false;
    auto perms_it = permissions_.find(request.agent_id);
    if (perms_it != permissions_.end()) {
      for (const Permission& p : perms_it->second) {
        if (!resource_matches(p.resource, resource)) continue;
        if (p.expired(now_ms)) {
          saw_expired = true;
          continue;
        }
        if (!p.goal_scope_matches(ctx.goal_id)) {
          saw_goal_mismatch = true;
          continue;
        }
        bool constraints_ok = true;
        for (const Atom& a : p.constraints) {
          if (!a.eval(request)) {
            constraints_ok = false;
            break;
          }
        }
        if (!constraints_ok) {
          saw_constraint_failure = true;
          continue;
        }
        return finish_allow(d, p, ctx, resource);
      }
    }

    d.verdict = Verdict::Deny;
    if (saw_goal_mismatch) {
      d.reason_code = "goal_context_mismatch";
      d.reason = "grant exists but is scoped to a different goal than '" + ctx.goal_id + "'";
    } else if (saw_expired) {
      d.reason_code = "expired";
      d.reason = "matching grant has expired";
    } else if (saw_constraint_failure) {
      d.reason_code = "constraint_violation";
      d.reason = "matching grant constraints are not satisfied";
    } else if (holds_goal_scoped_grant(request.agent_id, ctx.goal_id, now_ms)) {
      // The agent operates under goal-scoped grants and this request falls
      // outside what the current goal context authorizes.
      d.reason_code = "goal_context_mismatch";
      d.reason = "request is outside the permissions of goal context '" + ctx.goal_id + "'";
    } else {
      d.reason_code = "no_permission";
      d.reason = "no grant matches resource " + resource;
    }
    return d;
  }

  struct DelegationOutcome {
    bool ok = false;
    std::string reason_code;  // escalation_attempt | cycle_detected | "" on success
    std::string detail;
    std::vector<std::uint64_t> grant_ids;
  };

  // Adds a delegation edge iff every requested resource is covered by an
  // unexpired parent grant (and the authority matrix, when configured, lets
  // the acting role delegate it) and no cycle would form.
  DelegationOutcome record_delegation(const std::string& parent, const std::string& child,
                                      const std::vector<std::string>& resources,
                                      const std::string& acting_role,
                                      std::optional<std::int64_t> expires_at_ms,
                                      std::int64_t now_ms) {
    DelegationOutcome out;
    if (graph_.would_create_cycle(parent, child)) {
      out.reason_code = "cycle_detected";
      out.detail = "delegation " + parent + "->" + child + " would close a cycle";
      return out;
    }

    std::vector<const Permission*> covering;
    auto perms_it = permissions_.find(parent);
    for (const std::string& resource : resources) {
      if (!config_.authority.allows(acting_role, resource)) {
        out.reason_code = "escalation_attempt";
        out.detail = "role '" + acting_role + "' may not delegate " + resource;
        return out;
      }
      const Permission* cover = nullptr;
      if (perms_it != permissions_.end()) {
        for (const Permission& p : perms_it->second) {
          if (!p.expired(now_ms) && resource_covers(p.resource, resource)) {
            cover = &p;
            break;
          }
        }
      }
      if (!cover) {
        out.reason_code = "escalation_attempt";
        out.detail = "grant for " + resource + " exceeds the effective permissions of " + parent;
        return out;
      }
      covering.push_back(cover);
    }

    register_agent(child);
    std::int64_t expiry = expires_at_ms ? *expires_at_ms : now_ms + config_.default_delegation_expiry_ms;
    DelegationGraph::Edge edge;
    edge.parent = parent;
    edge.child = child;
    edge.granted_at_ms = now_ms;
    edge.expires_at_ms = expiry;
    for (std::size_t i = 0; i < resources.size(); ++i) {
      const Permission& src = *covering[i];
      Permission p;
      p.resource = resources[i];
      p.effect = src.effect;
      p.constraints = src.constraints;
      p.goal_scope = src.goal_scope;
      p.expires_at_ms = src.expires_at_ms ? std::min(*src.expires_at_ms, expiry) : expiry;
      p.provenance = Provenance::Delegated;
      p.granted_by = parent;
      p.depth = src.depth + 1;
      p.parent_grant_id = src.grant_id;
      p.grant_id = next_grant_id_++;
      grant_index_[p.grant_id] = child;
      out.grant_ids.push_back(p.grant_id);
      permissions_[child].push_back(std::move(p));
    }
    edge.grant_ids = out.grant_ids;
    graph_.add_edge(std::move(edge));
    out.ok = true;
    return out;
  }

  struct ShiftAction {
    std::string agent_id;
    Permission permission;
    PermissionAction action = PermissionAction::Retained;
  };

  // Re-evaluates grants after a significant context shift. Goal changes
  // revoke grants scoped to other goals (cascading along delegated copies);
  // a containment change reports write-class grants Narrowed (enforced
  // dynamically in evaluate); other triggers retain.
  std::vector<ShiftAction> on_context_shift(const std::string& agent_id,
                                            const std::string& new_goal_id, ShiftTrigger trigger,
                                            std::int64_t now_ms) {
    std::vector<ShiftAction> actions;
    auto perms_it = permissions_.find(agent_id);
    if (perms_it == permissions_.end()) return actions;

    if (trigger == ShiftTrigger::GoalChange) {
      std::vector<std::uint64_t> to_revoke;
      for (const Permission& p : perms_it->second) {
        if (p.goal_scope && !p.goal_scope_matches(new_goal_id)) {
          actions.push_back({agent_id, p, PermissionAction::Revoked});
          to_revoke.push_back(p.grant_id);
        } else {
          actions.push_back({agent_id, p, PermissionAction::Retained});
        }
      }
      for (std::uint64_t grant : to_revoke) revoke_cascade(grant, actions);
      return actions;
    }

    for (const Permission& p : perms_it->second) {
      const bool narrowed = trigger == ShiftTrigger::ContainmentChange && write_class(p.resource);
      actions.push_back({agent_id, p,
                         narrowed ? PermissionAction::Narrowed : PermissionAction::Retained});
    }
    (void)now_ms;
    return actions;
  }

  // Removes a grant and every delegated copy derived from it. Descendant
  // revocations are appended to `actions`.
  void revoke_cascade(std::uint64_t grant_id, std::vector<ShiftAction>& actions) {
    auto holder_it = grant_index_.find(grant_id);
    if (holder_it == grant_index_.end()) return;
    const std::string holder = holder_it->second;

    auto perms_it = permissions_.find(holder);
    if (perms_it != permissions_.end()) {
      auto& perms = perms_it->second;
      perms.erase(std::remove_if(perms.begin(), perms.end(),
                                 [&](const Permission& p) { return p.grant_id == grant_id; }),
                  perms.end());
    }
    grant_index_.erase(holder_it);

    // Children of this grant, in deterministic grant order.
    std::vector<std::pair<std::uint64_t, std::string>> derived;
    for (const auto& [agent, perms] : permissions_) {
      for (const Permission& p : perms) {
        if (p.parent_grant_id == grant_id) derived.emplace_back(p.grant_id, agent);
      }
    }
    for (const auto& [child_grant, agent] : derived) {
      auto it = permissions_.find(agent);
      if (it == permissions_.end()) continue;
      for (const Permission& p : it->second) {
        if (p.grant_id == child_grant) {
          actions.push_back({agent, p, PermissionAction::Revoked});
          break;
        }
      }
      revoke_cascade(child_grant, actions);
    }
  }

  // Expands a grant to its provenance chain, ending at a direct root.
  std::vector<Permission> audit_chain(std::uint64_t grant_id) const {
    std::vector<Permission> chain;
    std::uint64_t cur = grant_id;
    while (cur != kNoGrant) {
      auto holder_it = grant_index_.find(cur);
      if (holder_it == grant_index_.end()) break;
      auto perms_it = permissions_.find(holder_it->second);
      if (perms_it == permissions_.end()) break;
      const Permission* found = nullptr;
      for (const Permission& p : perms_it->second) {
        if (p.grant_id == cur) {
          found = &p;
          break;
        }
      }
      if (!found) break;
      chain.push_back(*found);
      cur = found->parent_grant_id;
    }
    return chain;
  }

  DelegationGraph& graph() { return graph_; }
  const DelegationGraph& graph() const { return graph_; }
  const AuthzConfig& config() const { return config_; }
  const std::map<std::string, AgentContext>& contexts() const { return contexts_; }

 private:
  Decision finish_allow(Decision d, const Permission& p, const AgentContext& ctx,
                        const std::string& resource) const {
    d.grant_id = p.grant_id;
    const bool writes = write_class(resource);
    const bool restricted = ctx.active_containment >= ContainmentLevel::ToolRestriction;
    if (writes && (restricted || p.effect == Effect::AllowReadOnly)) {
      std::string qualifier = resource;
      auto colon = resource.find(':');
      std::string verb_part;
      if (colon != std::string::npos) {
        verb_part = resource.substr(0, colon + 1);
        qualifier = resource.substr(colon + 1);
      }
      auto variant = config_.read_only_variants.find(qualifier);
      if (variant == config_.read_only_variants.end()) {
        variant = config_.read_only_variants.find(resource);
        if (variant != config_.read_only_variants.end()) verb_part.clear();
      }
      if (variant == config_.read_only_variants.end()) {
        d.verdict = Verdict::Deny;
        d.reason_code = "write_restricted";
        d.reason = "write access is restricted and no read-only variant is declared for " + resource;
        return d;
      }
      d.verdict = Verdict::AllowReadOnly;
      d.reason_code = "read_only_substitution";
      d.reason = "write access replaced with read-only variant " + variant->second;
      d.resource = verb_part + variant->second;
      return d;
    }
    if (p.effect == Effect::AllowReadOnly) {
      d.verdict = Verdict::AllowReadOnly;
      d.reason_code = "read_only_grant";
      d.reason = "grant is read-only";
      return d;
    }
    d.verdict = Verdict::Allow;
    d.reason_code = "granted";
    d.reason = "grant " + std::to_string(p.grant_id) + " matches " + resource;
    return d;
  }

  bool holds_goal_scoped_grant(const std::string& agent_id, const std::string& goal,
                               std::int64_t now_ms) const {
    auto it = permissions_.find(agent_id);
    if (it == permissions_.end()) return false;
    for (const Permission& p : it->second) {
      if (p.goal_scope && !p.expired(now_ms) && p.goal_scope_matches(goal)) return true;
    }
    return false;
  }

  AuthzConfig config_;
  std::map<std::string, AgentContext> contexts_;
  std::map<std::string, std::vector<Permission>> permissions_;
  std::map<std::uint64_t, std::string> grant_index_;  // grant -> holder
  DelegationGraph graph_;
  std::uint64_t next_grant_id_ = 1;
};

}  // namespace mi9
