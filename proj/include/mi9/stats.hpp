#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mi9/errors.hpp"

namespace mi9 {

// Jensen-Shannon divergence with base-2 logarithms, so the value lies in
// [0,1] and disjoint supports score exactly 1. Inputs are nonnegative weights
// (typically counts) over a shared key space; they are normalized over the
// union support. 0*log(0) is taken as 0.
inline double js_divergence(const std::map<std::string, double>& p_weights,
                            const std::map<std::string, double>& q_weights) {
  double p_total = 0, q_total = 0;
  for (const auto& [k, w] : p_weights) p_total += w;
  for (const auto& [k, w] : q_weights) q_total += w;
  if (p_total <= 0 || q_total <= 0) {
    throw Error(Errc::EmptyDistribution, "distributions must carry positive mass");
  }

  auto weight = [](const std::map<std::string, double>& m, const std::string& k) {
    auto it = m.find(k);
    return it == m.end() ? 0.0 : it->second;
  };

  double sum = 0.0;
  auto accumulate_key = [&](const std::string& k) {
    double p = weight(p_weights, k) / p_total;
    double q = weight(q_weights, k) / q_total;
    double m = 0.5 * (p + q);
    if (p > 0) sum += 0.5 * p * std::log2(p / m);
    if (q > 0) sum += 0.5 * q * std::log2(q / m);
  };
  for (const auto& [k, w] : p_weights) accumulate_key(k);
  for (const auto& [k, w] : q_weights) {
    if (!p_weights.count(k)) accumulate_key(k);
  }
  return std::clamp(sum, 0.0, 1.0);
}

inline std::map<std::string, double> to_weight_map(const std::map<std::string, std::uint64_t>& counts) {
  std::map<std::string, double> out;
  for (const auto& [k, c] : counts) out.emplace(k, static_cast<double>(c));
  return out;
}

struct MannWhitneyResult {
  double u = 0;      // U statistic of the first (recent) sample
  double z = 0;      // normal approximation with tie-corrected variance
  bool reject = false;  // two-sided at alpha = 0.05
};

inline constexpr double kMwuZCritical = 1.96;
inline constexpr std::size_t kMwuMinSamples = 8;  // normal-approximation validity

// Rank-sum Mann-Whitney U with midrank ties. Degenerate variance (all values
// tied) yields z = 0.
inline MannWhitneyResult mann_whitney_u(std::span<const double> recent,
                                        std::span<const double> baseline) {
  const std::size_t n1 = recent.size();
  const std::size_t n2 = baseline.size();
  if (n1 < kMwuMinSamples || n2 < kMwuMinSamples) {
    throw Error(Errc::InsufficientSamples, "mann-whitney needs at least 8 samples per side");
  }

  struct Tagged {
    double value;
    bool from_recent;
  };
  std::vector<Tagged> all;
  all.reserve(n1 + n2);
  for (double v : recent) all.push_back({v, true});
  for (double v : baseline) all.push_back({v, false});
  std::stable_sort(all.begin(), all.end(),
                   [](const Tagged& a, const Tagged& b) { return a.value < b.value; });

  const double n = static_cast<double>(n1 + n2);
  double rank_sum_recent = 0;
  double tie_term = 0;  // sum of t^3 - t over tied groups
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j < all.size() && all[j].value == all[i].value) ++j;
    const double group = static_cast<double>(j - i);
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (all[k].from_recent) rank_sum_recent += midrank;
    }
    tie_term += group * group * group - group;
    i = j;
  }

  MannWhitneyResult out;
  out.u = rank_sum_recent - static_cast<double>(n1) * (static_cast<double>(n1) + 1.0) / 2.0;
  const double mean_u = static_cast<double>(n1) * static_cast<double>(n2) / 2.0;
  const double variance =
      (static_cast<double>(n1) * static_cast<double>(n2) / 12.0) *
      ((n + 1.0) - tie_term / (n * (n - 1.0)));
  out.z = variance > 0 ? (out.u - mean_u) / std::sqrt(variance) : 0.0;
  out.reject = std::abs(out.z) > kMwuZCritical;
  return out;
}

// Cosine similarity of two count vectors over the union key space.
inline double cosine_similarity(const std::map<std::string, std::uint64_t>& a,
                                const std::map<std::string, std::uint64_t>& b) {
  double dot = 0, na = 0, nb = 0;
  for (const auto& [k, v] : a) {
    na += static_cast<double>(v) * static_cast<double>(v);
    auto it = b.find(k);
    if (it != b.end()) dot += static_cast<double>(v) * static_cast<double>(it->second);
  }
  for (const auto& [k, v] : b) nb += static_cast<double>(v) * static_cast<double>(v);
  if (na == 0 || nb == 0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace mi9
