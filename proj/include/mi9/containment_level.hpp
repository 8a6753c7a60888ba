#pragma once

#include <optional>
#include <string_view>

namespace mi9 {

// Graduated intervention ladder. Ordinals are totally ordered and effects are
// cumulative with level.
enum class ContainmentLevel : int {
  None = 0,
  Monitoring = 1,
  PlanningIntervention = 2,
  ToolRestriction = 3,
  ExecutionIsolation = 4,
};

inline std::string_view containment_level_name(ContainmentLevel level) {
  switch (level) {
    case ContainmentLevel::None: return "none";
    case ContainmentLevel::Monitoring: return "monitoring";
    case ContainmentLevel::PlanningIntervention: return "planning_intervention";
    case ContainmentLevel::ToolRestriction: return "tool_restriction";
    case ContainmentLevel::ExecutionIsolation: return "execution_isolation";
  }
  return "none";
}

inline std::optional<ContainmentLevel> containment_level_from_name(std::string_view s) {
  if (s == "none") return ContainmentLevel::None;
  if (s == "monitoring") return ContainmentLevel::Monitoring;
  if (s == "planning_intervention") return ContainmentLevel::PlanningIntervention;
  if (s == "tool_restriction") return ContainmentLevel::ToolRestriction;
  if (s == "execution_isolation") return ContainmentLevel::ExecutionIsolation;
  return std::nullopt;
}

}  // namespace mi9
