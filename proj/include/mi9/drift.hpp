#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mi9/event.hpp"
#include "mi9/rng.hpp"
#include "mi9/stats.hpp"

namespace mi9 {

inline constexpr char kBigramSep = '\x1f';

struct DriftConfig {
  std::size_t window_events = 100;        // W: events per assessment window
  std::size_t min_baseline_events = 50;   // N_min: native events before a baseline is established
  std::size_t reservoir_max = 512;        // R_max: bound per continuous metric
  double ewma_alpha = 0.1;
  double jsd_threshold_floor = 0.15;      // theta_min for the symbol-frequency channel
  double bigram_threshold_floor = 0.35;   // bigram support is quadratically larger, so its
                                          // empirical sampling noise needs a higher floor
  double mwu_threshold_floor = 3.0;       // |z| floor; stricter than the per-test 1.96 so
                                          // several channels per window keep noise alerts rare
  double adoption_margin = 0.25;          // divergence needed to accept a declared goal shift
  std::size_t probation_events = 100;     // parallel-monitoring span after a declared shift
  std::size_t min_probation_events = 20;  // evidence needed to issue a verdict at stream end
  std::size_t seed_check_events = 25;     // partial window used for transfer seeding
  double seed_similarity = 0.9;           // cosine similarity needed to clone a prior baseline
  std::uint64_t rng_seed = 1;
};

// Bounded uniform reservoir; replacement indices come from the owning goal
// state's seeded generator so replay is exact.
struct Reservoir {
  std::vector<double> samples;
  std::uint64_t seen = 0;

  void add(double v, std::size_t cap, SplitMix64& rng) {
    ++seen;
    if (samples.size() < cap) {
      samples.push_back(v);
      return;
    }
    std::uint64_t idx = rng.bounded(seen);
    if (idx < cap) samples[idx] = v;
  }
};

// Expected behavior for one (agent, goal): action-symbol frequencies, symbol
// bigrams, and reservoirs of continuous metrics (inter-event gap, payload
// amounts). `established` flips once enough events were observed natively
// under this goal; content cloned from a similar goal does not count.
struct GoalBaseline {
  std::map<std::string, std::uint64_t> verb_counts;
  std::map<std::string, std::uint64_t> bigram_counts;
  std::map<std::string, Reservoir> continuous;
  std::uint64_t total_events = 0;
  std::uint64_t native_events = 0;
  bool established = false;
  std::optional<std::string> seeded_from;

  bool empty() const { return total_events == 0; }
};

// threshold = max(floor, ewma_mean + 3*sqrt(ewma_var)). EWMA recursion:
// mean += a*incr; var = (1-a)*(var + a*incr^2). The floor keeps the detector
// conservative before variance estimates stabilize.
struct AdaptiveThreshold {
  double ewma_mean = 0;
  double ewma_var = 0;
  double alpha = 0.1;
  double floor = 0.15;
  bool primed = false;

  double value() const {
    if (!primed) return floor;
    return std::max(floor, ewma_mean + 3.0 * std::sqrt(std::max(0.0, ewma_var)));
  }

  void update(double score) {
    if (!primed) {
      ewma_mean = score;
      ewma_var = 0;
      primed = true;
      return;
    }
    const double incr = score - ewma_mean;
    ewma_mean += alpha * incr;
    ewma_var = (1.0 - alpha) * (ewma_var + alpha * incr * incr);
  }
};

enum class DriftMethod { JsDivergence, MannWhitneyU };
enum class DriftSeverity { Info, Alert };

inline std::string_view drift_method_name(DriftMethod m) {
  return m == DriftMethod::JsDivergence ? "js_divergence" : "mann_whitney_u";
}

inline std::string_view drift_severity_name(DriftSeverity s) {
  return s == DriftSeverity::Info ? "info" : "alert";
}

struct DriftSignal {
  std::string agent_id;
  std::string goal_id;
  DriftMethod method = DriftMethod::JsDivergence;
  std::string metric;  // verb_distribution | bigram_distribution | inter_event_gap_ms | amount
  double score = 0;
  double threshold = 0;
  DriftSeverity severity = DriftSeverity::Info;
  std::string window_first;
  std::string window_last;
  std::vector<std::string> window_event_ids;
  std::int64_t emitted_at_ms = 0;
};

enum class GoalShiftVerdict { AdoptNewBaseline, FlagSuspicious };

struct GoalShiftResult {
  std::string agent_id;
  std::string old_goal;
  std::string declared_goal;
  GoalShiftVerdict verdict = GoalShiftVerdict::AdoptNewBaseline;
  std::optional<double> jsd_vs_old;  // absent when the old goal had no established baseline
  bool matched_existing = false;     // adopted a prior baseline of the declared goal
  std::string goal_set_event_id;
  std::int64_t decided_at_ms = 0;
};

struct SeedInfo {
  std::string agent_id;
  std::string goal_id;
  std::string cloned_from;
  double similarity = 0;
};

struct DriftOutput {
  std::vector<DriftSignal> signals;
  std::optional<GoalShiftResult> shift_verdict;
  std::optional<SeedInfo> seeded;
};

// Goal-conditioned drift detection over the released stream. All state is
// per-agent; a single agent's events must arrive in order.
class DriftDetector {
 public:
  explicit DriftDetector(DriftConfig config = {}) : config_(config) {}

  const DriftConfig& config() const { return config_; }

  // Declared goal change. Starts a probation during which post-shift behavior
  // is compared against the old goal's baseline before the new label sticks.
  void on_goal_set(const std::string& agent_id, const std::string& new_goal,
                   const std::string& goal_set_event_id) {
    AgentState& st = agent(agent_id);
    if (st.has_goal && st.declared_goal == new_goal) return;

    const std::string old_behavioral = st.behavioral_goal;
    const bool had_goal = st.has_goal;
    st.declared_goal = new_goal;
    st.has_goal = true;
    // A shift during an open probation abandons it: the evidence was too thin
    // to call, so the intermediate label stays adopted and a fresh probation
    // starts against it.
    st.probation.reset();
    st.behavioral_goal = new_goal;
    if (!had_goal) return;  // first goal of the session needs no verification

    Probation p;
    p.old_goal = old_behavioral;
    p.declared_goal = new_goal;
    p.goal_set_event_id = goal_set_event_id;
    auto it = st.goals.find(new_goal);
    if (it != st.goals.end()) p.declared_snapshot = it->second;
    st.probation = std::move(p);
  }

  DriftOutput observe(const Event& e) {
    DriftOutput out;
    AgentState& st = agent(e.agent_id);

    std::optional<double> gap;
    if (st.has_last_ts) gap = static_cast<double>(e.timestamp_ms - st.last_ts);
    st.last_ts = e.timestamp_ms;
    st.has_last_ts = true;

    const std::string symbol = e.action_symbol();
    {
      GoalState& gs = goal_state(st, st.behavioral_goal);
      gs.window.verb_counts[symbol]++;
      gs.window.event_ids.push_back(e.event_id);
      if (gs.window.event_ids.size() == 1) gs.window.first_ts = e.timestamp_ms;
      gs.window.last_ts = e.timestamp_ms;
      if (!gs.prev_symbol.empty()) {
        gs.window.bigram_counts[gs.prev_symbol + kBigramSep + symbol]++;
      }
      gs.prev_symbol = symbol;
      if (gap) gs.window.gaps.push_back(*gap);
      if (auto amount = e.payload_number("amount")) gs.window.amounts.push_back(*amount);
    }

    if (st.probation) {
      st.probation->counts[symbol]++;
      st.probation->events++;
      if (st.probation->events >= config_.probation_events) {
        // May revert the behavioral goal and discard the probation window.
        out.shift_verdict = finalize_probation(st, e.timestamp_ms);
      }
    }

    GoalState& current = goal_state(st, st.behavioral_goal);
    if (current.baseline.empty() && !current.seed_checked &&
        current.window.event_ids.size() >= config_.seed_check_events) {
      current.seed_checked = true;
      out.seeded = seed_from_similar(st, st.behavioral_goal);
    }

    if (current.window.event_ids.size() >= config_.window_events) {
      auto signals = assess(st.agent_id, st.behavioral_goal, current);
      out.signals.insert(out.signals.end(), signals.begin(), signals.end());
    }
    return out;
  }

  // Issues a pending probation verdict at stream end when enough evidence
  // accumulated.
  std::optional<GoalShiftResult> finish_agent(const std::string& agent_id, std::int64_t at_ms) {
    auto it = agents_.find(agent_id);
    if (it == agents_.end() || !it->second.probation) return std::nullopt;
    if (it->second.probation->events < config_.min_probation_events) {
      it->second.probation.reset();
      return std::nullopt;
    }
    return finalize_probation(it->second, at_ms);
  }

  std::vector<std::string> agents_with_pending_probation() const {
    std::vector<std::string> out;
    for (const auto& [agent_id, st] : agents_) {
      if (st.probation) out.push_back(agent_id);
    }
    return out;
  }

  const GoalBaseline* baseline(const std::string& agent_id, const std::string& goal) const {
    auto it = agents_.find(agent_id);
    if (it == agents_.end()) return nullptr;
    auto git = it->second.goals.find(goal);
    return git == it->second.goals.end() ? nullptr : &git->second.baseline;
  }

  // Warm-restart support: snapshot and restore learned baselines. Threshold
  // state and open windows are not part of the snapshot.
  std::map<std::string, std::map<std::string, GoalBaseline>> snapshot_baselines() const {
    std::map<std::string, std::map<std::string, GoalBaseline>> out;
    for (const auto& [agent_id, st] : agents_) {
      for (const auto& [goal, gs] : st.goals) {
        if (!gs.baseline.empty()) out[agent_id].emplace(goal, gs.baseline);
      }
    }
    return out;
  }

  void restore_baseline(const std::string& agent_id, const std::string& goal, GoalBaseline b) {
    AgentState& st = agent(agent_id);
    GoalState& gs = goal_state(st, goal);
    b.established = b.native_events >= config_.min_baseline_events;
    gs.baseline = std::move(b);
    gs.seed_checked = true;  // restored content replaces transfer seeding
  }

  const std::string* behavioral_goal(const std::string& agent_id) const {
    auto it = agents_.find(agent_id);
    return it == agents_.end() ? nullptr : &it->second.behavioral_goal;
  }

 private:
  struct WindowState {
    std::map<std::string, std::uint64_t> verb_counts;
    std::map<std::string, std::uint64_t> bigram_counts;
    std::vector<double> gaps;
    std::vector<double> amounts;
    std::vector<std::string> event_ids;
    std::int64_t first_ts = 0;
    std::int64_t last_ts = 0;
  };

  struct GoalState {
    GoalBaseline baseline;
    WindowState window;
    std::map<std::string, AdaptiveThreshold> thresholds;
    std::string prev_symbol;
    bool seed_checked = false;
    SplitMix64 rng{0};
    bool rng_ready = false;
  };

  struct Probation {
    std::string old_goal;
    std::string declared_goal;
    std::string goal_set_event_id;
    std::map<std::string, std::uint64_t> counts;
    std::size_t events = 0;
    std::optional<GoalState> declared_snapshot;  // restored when the shift is flagged
  };

  struct AgentState {
    std::string agent_id;
    std::string declared_goal;
    std::string behavioral_goal;
    bool has_goal = false;
    std::map<std::string, GoalState> goals;
    std::optional<Probation> probation;
    std::int64_t last_ts = 0;
    bool has_last_ts = false;
  };

  AgentState& agent(const std::string& agent_id) {
    auto [it, inserted] = agents_.emplace(agent_id, AgentState{});
    if (inserted) it->second.agent_id = agent_id;
    return it->second;
  }

  GoalState& goal_state(AgentState& st, const std::string& goal) {
    auto [it, inserted] = st.goals.emplace(goal, GoalState{});
    return it->second;
  }

  SplitMix64& goal_rng(const AgentState& st, const std::string& goal, GoalState& gs) {
    if (!gs.rng_ready) {
      gs.rng = SplitMix64(config_.rng_seed ^ fnv1a64(st.agent_id) ^ (fnv1a64(goal) * 0x9e3779b9ull));
      gs.rng_ready = true;
    }
    return gs.rng;
  }

  AdaptiveThreshold& threshold(GoalState& gs, const std::string& channel, double floor) {
    auto [it, inserted] = gs.thresholds.emplace(channel, AdaptiveThreshold{});
    if (inserted) {
      it->second.alpha = config_.ewma_alpha;
      it->second.floor = floor;
    }
    return it->second;
  }

  DriftSignal make_signal(const std::string& agent_id, const std::string& goal,
                          const GoalState& gs, DriftMethod method, const std::string& metric,
                          double score, double threshold_value, bool established) const {
    DriftSignal s;
    s.agent_id = agent_id;
    s.goal_id = goal;
    s.method = method;
    s.metric = metric;
    s.score = score;
    s.threshold = threshold_value;
    s.severity =
        (established && score > threshold_value) ? DriftSeverity::Alert : DriftSeverity::Info;
    s.window_first = gs.window.event_ids.front();
    s.window_last = gs.window.event_ids.back();
    s.window_event_ids = gs.window.event_ids;
    s.emitted_at_ms = gs.window.last_ts;
    return s;
  }

  std::vector<DriftSignal> assess(const std::string& agent_id, const std::string& goal,
                                  GoalState& gs) {
    std::vector<DriftSignal> signals;
    GoalBaseline& base = gs.baseline;
    const bool established = base.established;

    if (!base.empty()) {
      auto window_w = to_weight_map(gs.window.verb_counts);
      {
        AdaptiveThreshold& th = threshold(gs, "verb_distribution", config_.jsd_threshold_floor);
        double score = js_divergence(window_w, to_weight_map(base.verb_counts));
        signals.push_back(make_signal(agent_id, goal, gs, DriftMethod::JsDivergence,
                                      "verb_distribution", score, th.value(), established));
        th.update(score);
      }
      if (!gs.window.bigram_counts.empty() && !base.bigram_counts.empty()) {
        AdaptiveThreshold& th = threshold(gs, "bigram_distribution", config_.bigram_threshold_floor);
        double score = js_divergence(to_weight_map(gs.window.bigram_counts),
                                     to_weight_map(base.bigram_counts));
        signals.push_back(make_signal(agent_id, goal, gs, DriftMethod::JsDivergence,
                                      "bigram_distribution", score, th.value(), established));
        th.update(score);
      }
      assess_continuous(agent_id, goal, gs, "inter_event_gap_ms", gs.window.gaps, signals,
                        established);
      assess_continuous(agent_id, goal, gs, "amount", gs.window.amounts, signals, established);
    } else {
      // Cold start with nothing prior: info-only marker for the window.
      signals.push_back(make_signal(agent_id, goal, gs, DriftMethod::JsDivergence,
                                    "verb_distribution", 0.0, config_.jsd_threshold_floor, false));
    }

    bool alerted = false;
    for (const DriftSignal& s : signals) {
      if (s.severity == DriftSeverity::Alert) alerted = true;
    }
    // Alert windows are quarantined so an attack cannot teach the detector
    // its own behavior.
    if (!alerted) merge_window(agent(agent_id), goal, gs);
    gs.window = WindowState{};
    return signals;
  }

  void assess_continuous(const std::string& agent_id, const std::string& goal, GoalState& gs,
                         const std::string& metric, const std::vector<double>& recent,
                         std::vector<DriftSignal>& signals, bool established) {
    auto it = gs.baseline.continuous.find(metric);
    if (it == gs.baseline.continuous.end()) return;
    if (recent.size() < kMwuMinSamples || it->second.samples.size() < kMwuMinSamples) return;
    MannWhitneyResult r = mann_whitney_u(recent, it->second.samples);
    AdaptiveThreshold& th = threshold(gs, metric, config_.mwu_threshold_floor);
    signals.push_back(make_signal(agent_id, goal, gs, DriftMethod::MannWhitneyU, metric,
                                  std::abs(r.z), th.value(), established));
    th.update(std::abs(r.z));
  }

  void merge_window(AgentState& st, const std::string& goal, GoalState& gs) {
    GoalBaseline& base = gs.baseline;
    for (const auto& [k, c] : gs.window.verb_counts) base.verb_counts[k] += c;
    for (const auto& [k, c] : gs.window.bigram_counts) base.bigram_counts[k] += c;
    SplitMix64& rng = goal_rng(st, goal, gs);
    for (double v : gs.window.gaps) {
      base.continuous["inter_event_gap_ms"].add(v, config_.reservoir_max, rng);
    }
    for (double v : gs.window.amounts) {
      base.continuous["amount"].add(v, config_.reservoir_max, rng);
    }
    base.total_events += gs.window.event_ids.size();
    base.native_events += gs.window.event_ids.size();
    if (base.native_events >= config_.min_baseline_events) base.established = true;
  }

  // Adopt when post-shift behavior matches an established prior baseline of
  // the declared goal, or diverges from the old baseline past the adoption
  // margin; flag when it is statistically indistinguishable from the old
  // goal (possible goal-label manipulation).
  GoalShiftResult finalize_probation(AgentState& st, std::int64_t at_ms) {
    Probation p = std::move(*st.probation);
    st.probation.reset();

    GoalShiftResult r;
    r.agent_id = st.agent_id;
    r.old_goal = p.old_goal;
    r.declared_goal = p.declared_goal;
    r.goal_set_event_id = p.goal_set_event_id;
    r.decided_at_ms = at_ms;

    if (p.counts.empty()) return r;  // nothing observed; adopt by default
    auto probation_w = to_weight_map(p.counts);

    // Only a baseline that existed before the shift counts as prior.
    if (p.declared_snapshot && p.declared_snapshot->baseline.established) {
      double jsd =
          js_divergence(probation_w, to_weight_map(p.declared_snapshot->baseline.verb_counts));
      if (jsd <= config_.adoption_margin) {
        r.verdict = GoalShiftVerdict::AdoptNewBaseline;
        r.matched_existing = true;
        return r;
      }
    }

    auto old_it = st.goals.find(p.old_goal);
    if (old_it == st.goals.end() || !old_it->second.baseline.established) {
      return r;  // no basis for suspicion; adopt
    }
    double jsd = js_divergence(probation_w, to_weight_map(old_it->second.baseline.verb_counts));
    r.jsd_vs_old = jsd;
    if (jsd > config_.adoption_margin) return r;

    r.verdict = GoalShiftVerdict::FlagSuspicious;
    // Re-attach monitoring to the old goal and drop what the probation
    // accumulated under the manipulated label.
    st.behavioral_goal = p.old_goal;
    if (p.declared_snapshot) {
      st.goals[p.declared_goal] = std::move(*p.declared_snapshot);
    } else {
      st.goals.erase(p.declared_goal);
    }
    return r;
  }

  std::optional<SeedInfo> seed_from_similar(AgentState& st, const std::string& new_goal) {
    auto target_it = st.goals.find(new_goal);
    if (target_it == st.goals.end()) return std::nullopt;
    GoalState& target = target_it->second;

    const GoalState* best = nullptr;
    std::string best_goal;
    double best_similarity = 0;
    for (const auto& [goal, gs] : st.goals) {  // ordered map: ties go to the lexically first goal
      if (goal == new_goal || !gs.baseline.established) continue;
      double sim = cosine_similarity(target.window.verb_counts, gs.baseline.verb_counts);
      if (sim > best_similarity) {
        best_similarity = sim;
        best = &gs;
        best_goal = goal;
      }
    }
    if (!best || best_similarity <= config_.seed_similarity) return std::nullopt;

    target.baseline.verb_counts = best->baseline.verb_counts;
    target.baseline.bigram_counts = best->baseline.bigram_counts;
    target.baseline.continuous = best->baseline.continuous;
    target.baseline.total_events = best->baseline.total_events;
    target.baseline.native_events = 0;
    target.baseline.established = false;
    target.baseline.seeded_from = best_goal;

    SeedInfo info;
    info.agent_id = st.agent_id;
    info.goal_id = new_goal;
    info.cloned_from = best_goal;
    info.similarity = best_similarity;
    return info;
  }

  DriftConfig config_;
  std::map<std::string, AgentState> agents_;
};

}  // namespace mi9
