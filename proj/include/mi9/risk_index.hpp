#pragma once

#include <array>
#include <compare>
#include <string_view>

#include "mi9/errors.hpp"

namespace mi9 {

inline constexpr int kRiskDimensions = 3;  // autonomy, adaptability, continuity
inline constexpr int kRiskCriteria = 4;
inline constexpr int kMaxCriterionScore = 3;
inline constexpr int kSheetDenominator = kRiskDimensions * kRiskCriteria * kMaxCriterionScore;  // 36

enum class RiskDimension { Autonomy = 0, Adaptability = 1, Continuity = 2 };

inline std::string_view risk_dimension_name(RiskDimension d) {
  switch (d) {
    case RiskDimension::Autonomy: return "autonomy";
    case RiskDimension::Adaptability: return "adaptability";
    case RiskDimension::Continuity: return "continuity";
  }
  return "autonomy";
}

// Governance tier 1..4.
class RiskTier {
 public:
  RiskTier() = default;
  explicit RiskTier(int value) : value_(value) {
    if (value < 1 || value > 4) throw Error(Errc::OutOfRange, "risk tier must be in 1..4");
  }

  int value() const { return value_; }

  std::string_view label() const {
    switch (value_) {
      case 1: return "Basic Agency";
      case 2: return "Semi-Agentic";
      case 3: return "Highly Capable";
      default: return "Fully Agentic";
    }
  }

  auto operator<=>(const RiskTier&) const = default;

 private:
  int value_ = 1;
};

// 3 dimensions x 4 criteria, each scored 0..3 by an operator against the
// capability rubric.
struct ScoreSheet {
  std::array<std::array<int, kRiskCriteria>, kRiskDimensions> scores{};

  void validate() const {
    for (const auto& row : scores) {
      for (int s : row) {
        if (s < 0 || s > kMaxCriterionScore) {
          throw Error(Errc::InvalidScore, "criterion scores must be in 0..3");
        }
      }
    }
  }

  int dimension_total(int d) const {
    int t = 0;
    for (int s : scores[static_cast<std::size_t>(d)]) t += s;
    return t;
  }

  int total() const {
    int t = 0;
    for (int d = 0; d < kRiskDimensions; ++d) t += dimension_total(d);
    return t;
  }

  friend bool operator==(const ScoreSheet&, const ScoreSheet&) = default;
};

struct RiskAssessment {
  double index = 0.0;  // normalized composite in [0,1]
  std::array<double, kRiskDimensions> dimension_scores{};
  RiskTier tier;
  int raw_total = 0;  // exact numerator over /36, used for boundary decisions
};

// Tier bands: <=0.25 -> 1, <=0.50 -> 2, <=0.75 -> 3, else 4. The sheet path
// compares the integer numerator against 9/18/27 so boundary sheets can never
// be misclassified by floating point.
inline RiskTier tier_for_total(int raw_total) {
  if (raw_total <= kSheetDenominator / 4) return RiskTier(1);
  if (raw_total <= kSheetDenominator / 2) return RiskTier(2);
  if (raw_total <= 3 * kSheetDenominator / 4) return RiskTier(3);
  return RiskTier(4);
}

inline RiskTier tier_for(double index) {
  if (index < 0.0 || index > 1.0) {
    throw Error(Errc::OutOfRange, "risk index must be in [0,1]");
  }
  if (index <= 0.25) return RiskTier(1);
  if (index <= 0.50) return RiskTier(2);
  if (index <= 0.75) return RiskTier(3);
  return RiskTier(4);
}

// Composite index: mean over dimensions of (criterion sum / 12); equivalently
// total/36. Dimensions weigh equally.
inline RiskAssessment compute_agency_risk(const ScoreSheet& sheet) {
  sheet.validate();
  RiskAssessment out;
  out.raw_total = sheet.total();
  for (int d = 0; d < kRiskDimensions; ++d) {
    out.dimension_scores[static_cast<std::size_t>(d)] =
        sheet.dimension_total(d) / static_cast<double>(kRiskCriteria * kMaxCriterionScore);
  }
  out.index = out.raw_total / static_cast<double>(kSheetDenominator);
  out.tier = tier_for_total(out.raw_total);
  return out;
}

}  // namespace mi9
