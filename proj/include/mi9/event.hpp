#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

namespace mi9 {

// Scalar payload attribute. Traces carry flat string->scalar maps; nested
// structures are out of scope for the wire format.
using PayloadValue = std::variant<bool, std::int64_t, double, std::string>;

enum class EventCategory { Cognitive, Action, Coordination, Extension };

inline std::string_view category_name(EventCategory c) {
  switch (c) {
    case EventCategory::Cognitive: return "cognitive";
    case EventCategory::Action: return "action";
    case EventCategory::Coordination: return "coordination";
    case EventCategory::Extension: return "extension";
  }
  return "action";
}

inline std::optional<EventCategory> category_from_name(std::string_view s) {
  if (s == "cognitive") return EventCategory::Cognitive;
  if (s == "action") return EventCategory::Action;
  if (s == "coordination") return EventCategory::Coordination;
  if (s == "extension") return EventCategory::Extension;
  return std::nullopt;
}

// Dotted lowercase identifier: [a-z][a-z0-9_]*(\.[a-z0-9_]+)+
inline bool verb_is_valid(std::string_view verb) {
  if (verb.empty() || verb[0] < 'a' || verb[0] > 'z') return false;
  bool saw_dot = false;
  bool segment_open = true;  // current segment has at least one char
  for (std::size_t i = 1; i < verb.size(); ++i) {
    char c = verb[i];
    if (c == '.') {
      if (!segment_open) return false;  // empty segment
      saw_dot = true;
      segment_open = false;
    } else if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_') {
      segment_open = true;
    } else {
      return false;
    }
  }
  return saw_dot && segment_open;
}

struct VerbClass {
  EventCategory category;
  bool known_prefix;  // false when no prefix matched and the lenient default applied
};

// Prefix table for the base taxonomy. "x." is reserved for organization
// extensions; unmatched prefixes default to Action, the most conservatively
// monitored category.
inline VerbClass classify_verb_ex(std::string_view verb) {
  static constexpr struct {
    std::string_view prefix;
    EventCategory category;
  } kTable[] = {
      {"plan.", EventCategory::Cognitive},
      {"goal.", EventCategory::Cognitive},
      {"memory.", EventCategory::Cognitive},
      {"tool.", EventCategory::Action},
      {"api.", EventCategory::Action},
      {"auth.", EventCategory::Action},
      {"db.", EventCategory::Action},
      {"approve.", EventCategory::Action},
      {"agent.", EventCategory::Coordination},
      {"subagent.", EventCategory::Coordination},
      {"human.", EventCategory::Coordination},
      {"x.", EventCategory::Extension},
  };
  for (const auto& row : kTable) {
    if (verb.substr(0, row.prefix.size()) == row.prefix) {
      return {row.category, true};
    }
  }
  return {EventCategory::Action, false};
}

// Total in lenient mode and a pure function of the verb string.
inline EventCategory classify_verb(std::string_view verb) {
  return classify_verb_ex(verb).category;
}

// One telemetry record. `category` is derived from `verb` and is not part of
// the wire format. `goal_id` is maintained by the engine (most recent prior
// goal.set for the agent), not trusted from the producer.
struct Event {
  std::string event_id;
  std::string agent_id;
  std::string session_id;
  std::int64_t timestamp_ms = 0;
  std::string verb;
  EventCategory category = EventCategory::Action;
  int risk_tier = 1;
  std::string goal_id;
  std::optional<std::string> parent_agent_id;
  std::map<std::string, PayloadValue> payload;

  const PayloadValue* find(std::string_view key) const {
    auto it = payload.find(std::string(key));
    return it == payload.end() ? nullptr : &it->second;
  }

  std::optional<std::string> payload_string(std::string_view key) const {
    const PayloadValue* v = find(key);
    if (!v) return std::nullopt;
    if (const auto* s = std::get_if<std::string>(v)) return *s;
    return std::nullopt;
  }

  std::optional<double> payload_number(std::string_view key) const {
    const PayloadValue* v = find(key);
    if (!v) return std::nullopt;
    if (const auto* i = std::get_if<std::int64_t>(v)) return static_cast<double>(*i);
    if (const auto* d = std::get_if<double>(v)) return *d;
    return std::nullopt;
  }

  // Behavioral symbol: the verb refined by its tool/endpoint attribute when
  // present, e.g. "tool.invoke:bank.transfer". Distinguishes tool usage that
  // shares a verb; used for drift distributions and resource identifiers.
  std::string action_symbol() const {
    if (auto tool = payload_string("tool")) return verb + ":" + *tool;
    if (auto endpoint = payload_string("endpoint")) return verb + ":" + *endpoint;
    return verb;
  }

  // Deterministic intra-trace ordering.
  std::pair<std::int64_t, std::string_view> order_key() const {
    return {timestamp_ms, std::string_view(event_id)};
  }

  friend bool operator==(const Event& a, const Event& b) {
    return a.event_id == b.event_id && a.agent_id == b.agent_id &&
           a.session_id == b.session_id && a.timestamp_ms == b.timestamp_ms &&
           a.verb == b.verb && a.category == b.category &&
           a.risk_tier == b.risk_tier && a.goal_id == b.goal_id &&
           a.parent_agent_id == b.parent_agent_id && a.payload == b.payload;
  }
};

}  // namespace mi9
