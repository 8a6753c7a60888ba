#pragma once

#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "mi9/drift.hpp"
#include "mi9/errors.hpp"

namespace mi9 {

// Baseline snapshots for warm restarts. Only the learned distributions move;
// adaptive-threshold state and open windows are rebuilt from fresh traffic.

inline nlohmann::ordered_json baseline_to_json(const GoalBaseline& b) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json verbs = nlohmann::ordered_json::object();
  for (const auto& [k, v] : b.verb_counts) verbs[k] = v;
  j["verb_counts"] = verbs;
  nlohmann::ordered_json bigrams = nlohmann::ordered_json::object();
  for (const auto& [k, v] : b.bigram_counts) bigrams[k] = v;
  j["bigram_counts"] = bigrams;
  nlohmann::ordered_json continuous = nlohmann::ordered_json::object();
  for (const auto& [metric, reservoir] : b.continuous) {
    continuous[metric] = {{"samples", reservoir.samples}, {"seen", reservoir.seen}};
  }
  j["continuous"] = continuous;
  j["total_events"] = b.total_events;
  j["native_events"] = b.native_events;
  j["established"] = b.established;
  if (b.seeded_from) j["seeded_from"] = *b.seeded_from;
  return j;
}

inline GoalBaseline baseline_from_json(const nlohmann::json& j) {
  GoalBaseline b;
  if (j.contains("verb_counts")) {
    for (auto it = j["verb_counts"].begin(); it != j["verb_counts"].end(); ++it) {
      b.verb_counts.emplace(it.key(), it.value().get<std::uint64_t>());
    }
  }
  if (j.contains("bigram_counts")) {
    for (auto it = j["bigram_counts"].begin(); it != j["bigram_counts"].end(); ++it) {
      b.bigram_counts.emplace(it.key(), it.value().get<std::uint64_t>());
    }
  }
  if (j.contains("continuous")) {
    for (auto it = j["continuous"].begin(); it != j["continuous"].end(); ++it) {
      Reservoir r;
      r.samples = it.value().value("samples", std::vector<double>{});
      r.seen = it.value().value("seen", static_cast<std::uint64_t>(r.samples.size()));
      b.continuous.emplace(it.key(), std::move(r));
    }
  }
  b.total_events = j.value("total_events", static_cast<std::uint64_t>(0));
  b.native_events = j.value("native_events", static_cast<std::uint64_t>(0));
  b.established = j.value("established", false);
  if (j.contains("seeded_from")) b.seeded_from = j["seeded_from"].get<std::string>();
  return b;
}

inline void save_baselines(const DriftDetector& detector, const std::string& path) {
  nlohmann::ordered_json j;
  j["ats_baselines"] = "1.0";
  nlohmann::ordered_json agents = nlohmann::ordered_json::object();
  for (const auto& [agent_id, goals] : detector.snapshot_baselines()) {
    nlohmann::ordered_json per_goal = nlohmann::ordered_json::object();
    for (const auto& [goal, baseline] : goals) {
      per_goal[goal] = baseline_to_json(baseline);
    }
    agents[agent_id] = per_goal;
  }
  j["agents"] = agents;
  std::ofstream out(path);
  if (!out) throw Error(Errc::IoError, "cannot write baselines: " + path);
  out << j.dump(2) << "\n";
}

inline void load_baselines(DriftDetector& detector, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open baselines: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::MalformedLine, path + ": " + e.what());
  }
  if (!j.contains("ats_baselines")) {
    throw Error(Errc::SchemaViolation, path + ": missing ats_baselines marker");
  }
  if (j.contains("agents")) {
    for (auto agent_it = j["agents"].begin(); agent_it != j["agents"].end(); ++agent_it) {
      for (auto goal_it = agent_it.value().begin(); goal_it != agent_it.value().end(); ++goal_it) {
        detector.restore_baseline(agent_it.key(), goal_it.key(),
                                  baseline_from_json(goal_it.value()));
      }
    }
  }
}

}  // namespace mi9
