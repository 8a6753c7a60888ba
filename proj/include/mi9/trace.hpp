#pragma once

#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <utility>

#include <json.hpp>

#include "mi9/errors.hpp"
#include "mi9/event.hpp"

namespace mi9 {

inline constexpr std::string_view kAtsVersion = "1.0";

inline nlohmann::ordered_json payload_to_json(const std::map<std::string, PayloadValue>& payload) {
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  for (const auto& [key, value] : payload) {
    std::visit([&](const auto& v) { out[key] = v; }, value);
  }
  return out;
}

inline PayloadValue payload_value_from_json(const nlohmann::json& j) {
  if (j.is_boolean()) return j.get<bool>();
  if (j.is_number_integer()) return j.get<std::int64_t>();
  if (j.is_number_float()) return j.get<double>();
  if (j.is_string()) return j.get<std::string>();
  throw Error(Errc::SchemaViolation, "payload values must be scalars");
}

inline std::string payload_value_to_string(const PayloadValue& v) {
  return std::visit(
      [](const auto& x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, std::string>) {
          return x;
        } else if constexpr (std::is_same_v<T, bool>) {
          return x ? "true" : "false";
        } else {
          return nlohmann::json(x).dump();
        }
      },
      v);
}

struct ParsedEvent {
  Event event;
  bool unknown_verb = false;  // lenient default-to-Action applied
};

// Parses one trace line into a validated Event. In strict mode an
// unrecognized verb prefix is an error; otherwise the event is classified
// Action and flagged for a warning record.
inline ParsedEvent parse_event_ex(std::string_view line, bool strict_verbs = false) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::MalformedLine, e.what());
  }
  if (!j.is_object()) throw Error(Errc::MalformedLine, "event line is not a JSON object");

  auto require_string = [&](const char* key) -> std::string {
    if (!j.contains(key) || !j[key].is_string() || j[key].get<std::string>().empty()) {
      throw Error(Errc::SchemaViolation, std::string("missing or invalid field: ") + key);
    }
    return j[key].get<std::string>();
  };

  Event e;
  e.event_id = require_string("event_id");
  e.agent_id = require_string("agent_id");
  e.session_id = require_string("session_id");
  e.verb = require_string("verb");
  if (!verb_is_valid(e.verb)) {
    throw Error(Errc::SchemaViolation, "verb does not match the dotted identifier form: " + e.verb);
  }
  if (!j.contains("timestamp_ms") || !j["timestamp_ms"].is_number_integer()) {
    throw Error(Errc::SchemaViolation, "missing or invalid field: timestamp_ms");
  }
  e.timestamp_ms = j["timestamp_ms"].get<std::int64_t>();
  if (e.timestamp_ms < 0) throw Error(Errc::SchemaViolation, "timestamp_ms must be nonnegative");
  if (!j.contains("risk_tier") || !j["risk_tier"].is_number_integer()) {
    throw Error(Errc::SchemaViolation, "missing or invalid field: risk_tier");
  }
  e.risk_tier = j["risk_tier"].get<int>();
  if (e.risk_tier < 1 || e.risk_tier > 4) {
    throw Error(Errc::SchemaViolation, "risk_tier must be in 1..4");
  }
  if (j.contains("goal_id")) {
    if (!j["goal_id"].is_string()) throw Error(Errc::SchemaViolation, "goal_id must be a string");
    e.goal_id = j["goal_id"].get<std::string>();
  }
  if (j.contains("parent_agent_id") && !j["parent_agent_id"].is_null()) {
    if (!j["parent_agent_id"].is_string()) {
      throw Error(Errc::SchemaViolation, "parent_agent_id must be a string");
    }
    e.parent_agent_id = j["parent_agent_id"].get<std::string>();
  }
  if (j.contains("payload")) {
    if (!j["payload"].is_object()) throw Error(Errc::SchemaViolation, "payload must be an object");
    for (auto it = j["payload"].begin(); it != j["payload"].end(); ++it) {
      e.payload.emplace(it.key(), payload_value_from_json(it.value()));
    }
  }

  VerbClass vc = classify_verb_ex(e.verb);
  if (!vc.known_prefix && strict_verbs) {
    throw Error(Errc::UnknownVerb, "no category prefix matches verb: " + e.verb);
  }
  e.category = vc.category;
  return {std::move(e), !vc.known_prefix};
}

inline Event parse_event(std::string_view line, bool strict_verbs = false) {
  return parse_event_ex(line, strict_verbs).event;
}

// Serializes with a fixed key order so replay output is byte-stable.
inline std::string serialize_event(const Event& e) {
  nlohmann::ordered_json j;
  j["event_id"] = e.event_id;
  j["agent_id"] = e.agent_id;
  j["session_id"] = e.session_id;
  j["timestamp_ms"] = e.timestamp_ms;
  j["verb"] = e.verb;
  j["risk_tier"] = e.risk_tier;
  if (!e.goal_id.empty()) j["goal_id"] = e.goal_id;
  if (e.parent_agent_id) j["parent_agent_id"] = *e.parent_agent_id;
  if (!e.payload.empty()) j["payload"] = payload_to_json(e.payload);
  return j.dump();
}

// Streams events from a JSON Lines trace file. The first line must be the
// trace header {"ats_version":"1.0"}. Duplicate event ids are rejected.
class TraceReader {
 public:
  TraceReader(const std::string& path, bool strict_verbs = false)
      : path_(path), in_(path), strict_verbs_(strict_verbs) {
    if (!in_) throw Error(Errc::IoError, "cannot open trace file: " + path);
    std::string header;
    if (!std::getline(in_, header)) {
      throw Error(Errc::SchemaViolation, diag(1, "empty trace file, header line required"));
    }
    ++line_no_;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(header);
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::MalformedLine, diag(1, e.what()));
    }
    if (!j.is_object() || !j.contains("ats_version") || !j["ats_version"].is_string()) {
      throw Error(Errc::SchemaViolation, diag(1, "first line must carry ats_version"));
    }
    if (j["ats_version"].get<std::string>() != kAtsVersion) {
      throw Error(Errc::SchemaViolation,
                  diag(1, "unsupported ats_version: " + j["ats_version"].get<std::string>()));
    }
    if (j.contains("trace_id") && j["trace_id"].is_string()) {
      trace_id_ = j["trace_id"].get<std::string>();
    }
  }

  struct Entry {
    Event event;
    bool unknown_verb = false;
    std::size_t line_no = 0;
  };

  // Returns nullopt at end of file. Blank trailing lines are skipped.
  std::optional<Entry> next() {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (line.empty()) continue;
      ParsedEvent parsed;
      try {
        parsed = parse_event_ex(line, strict_verbs_);
      } catch (const Error& e) {
        throw Error(e.code(), diag(line_no_, e.what()));
      }
      if (!seen_ids_.insert(parsed.event.event_id).second) {
        throw Error(Errc::SchemaViolation,
                    diag(line_no_, "duplicate event_id: " + parsed.event.event_id));
      }
      return Entry{std::move(parsed.event), parsed.unknown_verb, line_no_};
    }
    return std::nullopt;
  }

  const std::string& trace_id() const { return trace_id_; }
  const std::string& path() const { return path_; }

 private:
  std::string diag(std::size_t line, const std::string& msg) const {
    return path_ + ":" + std::to_string(line) + ": " + msg;
  }

  std::string path_;
  std::ifstream in_;
  bool strict_verbs_ = false;
  std::size_t line_no_ = 0;
  std::set<std::string> seen_ids_;
  std::string trace_id_;
};

class TraceWriter {
 public:
  explicit TraceWriter(const std::string& path, const std::string& trace_id = "")
      : out_(path) {
    if (!out_) throw Error(Errc::IoError, "cannot open trace file for writing: " + path);
    nlohmann::ordered_json header;
    header["ats_version"] = std::string(kAtsVersion);
    if (!trace_id.empty()) header["trace_id"] = trace_id;
    out_ << header.dump() << "\n";
  }

  void write(const Event& e) { out_ << serialize_event(e) << "\n"; }

 private:
  std::ofstream out_;
};

}  // namespace mi9
