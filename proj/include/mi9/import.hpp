#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mi9/event.hpp"
#include "mi9/trace.hpp"

namespace mi9 {

struct ImportResult {
  std::vector<Event> events;
  std::vector<std::pair<std::size_t, std::string>> line_errors;  // (line number, message)
  std::size_t lines_read = 0;
};

namespace import_detail {

inline std::string pick_string(const nlohmann::json& j, std::initializer_list<const char*> keys) {
  for (const char* k : keys) {
    if (j.contains(k) && j[k].is_string()) return j[k].get<std::string>();
  }
  return {};
}

inline std::int64_t pick_int(const nlohmann::json& j, std::initializer_list<const char*> keys,
                             std::int64_t fallback) {
  for (const char* k : keys) {
    if (j.contains(k) && j[k].is_number()) return j[k].get<std::int64_t>();
  }
  return fallback;
}

inline std::string sanitize_verb(std::string v) {
  for (char& c : v) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    if (c == '-' || c == ' ' || c == '/') c = '_';
  }
  return v;
}

}  // namespace import_detail

// Best-effort mapping of external JSON-lines records onto the trace format.
// Records that cannot be mapped are reported per line and skipped, never
// fatal. Recognized keys: event_id/id, agent_id/agent, session_id/session,
// timestamp_ms/timestamp/time, verb/action/event_type, risk_tier/tier,
// payload/attributes.
inline ImportResult import_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open dataset: " + path);

  ImportResult out;
  std::string line;
  std::size_t line_no = 0;
  std::size_t synthetic_id = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    out.lines_read++;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      out.line_errors.emplace_back(line_no, e.what());
      continue;
    }
    if (!j.is_object()) {
      out.line_errors.emplace_back(line_no, "record is not a JSON object");
      continue;
    }
    if (j.contains("ats_version")) continue;  // already a trace header

    using namespace import_detail;
    Event e;
    e.event_id = pick_string(j, {"event_id", "id"});
    if (e.event_id.empty()) e.event_id = "imp" + std::to_string(++synthetic_id);
    e.agent_id = pick_string(j, {"agent_id", "agent"});
    e.session_id = pick_string(j, {"session_id", "session"});
    if (e.session_id.empty()) e.session_id = "s1";
    e.timestamp_ms = pick_int(j, {"timestamp_ms", "timestamp", "time"}, -1);
    e.verb = sanitize_verb(pick_string(j, {"verb", "action", "event_type"}));
    e.risk_tier = static_cast<int>(pick_int(j, {"risk_tier", "tier"}, 2));

    if (e.agent_id.empty()) {
      out.line_errors.emplace_back(line_no, "no agent identifier");
      continue;
    }
    if (e.timestamp_ms < 0) {
      out.line_errors.emplace_back(line_no, "no usable timestamp");
      continue;
    }
    if (!verb_is_valid(e.verb)) {
      out.line_errors.emplace_back(line_no, "no usable verb: '" + e.verb + "'");
      continue;
    }
    if (e.risk_tier < 1 || e.risk_tier > 4) e.risk_tier = 2;
    e.category = classify_verb(e.verb);

    const char* payload_key = j.contains("payload") ? "payload" : "attributes";
    if (j.contains(payload_key) && j[payload_key].is_object()) {
      for (auto it = j[payload_key].begin(); it != j[payload_key].end(); ++it) {
        const auto& v = it.value();
        if (v.is_boolean()) {
          e.payload.emplace(it.key(), v.get<bool>());
        } else if (v.is_number_integer()) {
          e.payload.emplace(it.key(), v.get<std::int64_t>());
        } else if (v.is_number_float()) {
          e.payload.emplace(it.key(), v.get<double>());
        } else if (v.is_string()) {
          e.payload.emplace(it.key(), v.get<std::string>());
        }
        // non-scalar attributes are dropped
      }
    }
    out.events.push_back(std::move(e));
  }

  std::stable_sort(out.events.begin(), out.events.end(),
                   [](const Event& a, const Event& b) { return a.order_key() < b.order_key(); });
  return out;
}

}  // namespace mi9
