// Command-line front end: replay traces through the governance pipeline,
// generate labeled scenarios, evaluate metrics, validate policies, and import
// foreign datasets.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mi9/baseline_io.hpp"
#include "mi9/engine.hpp"
#include "mi9/import.hpp"
#include "mi9/metrics.hpp"
#include "mi9/policy.hpp"
#include "mi9/scenario.hpp"
#include "mi9/trace.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitViolations = 2;

int run_replay(const std::vector<std::string>& traces, const std::string& policy_path,
               const std::string& out_dir, std::optional<std::int64_t> reorder_window_ms,
               bool enforce, bool strict_verbs, const std::string& ground_truth_path,
               const std::string& baselines_in, const std::string& baselines_out) {
  mi9::Policy policy = mi9::Policy::load(policy_path);
  mi9::GovernanceEngine engine(
      policy, enforce ? mi9::EnforcementMode::Enforce : mi9::EnforcementMode::Observe,
      reorder_window_ms);
  engine.report().trace_paths = traces;
  if (!baselines_in.empty()) mi9::load_baselines(engine.drift_detector(), baselines_in);

  for (const std::string& path : traces) {
    mi9::TraceReader reader(path, strict_verbs);
    if (engine.report().trace_id.empty()) engine.report().trace_id = reader.trace_id();
    while (auto entry = reader.next()) {
      if (entry->unknown_verb) engine.note_unknown_verb(entry->event);
      engine.ingest(std::move(entry->event));
    }
  }
  engine.finish();

  mi9::RunReport& report = engine.report();
  report.write_directory(out_dir);
  if (!baselines_out.empty()) mi9::save_baselines(engine.drift(), baselines_out);

  if (!ground_truth_path.empty()) {
    mi9::GroundTruth truth = mi9::GroundTruth::load(ground_truth_path);
    mi9::MetricsReport metrics =
        mi9::evaluate_metrics(truth, report.detections, report.warning_refs(), report.trace_id);
    std::ofstream mj(out_dir + "/metrics.json");
    mj << metrics.to_json().dump(2) << "\n";
    std::ofstream mt(out_dir + "/metrics.txt");
    mt << metrics.to_table();
    std::cout << metrics.to_table();
  }

  std::cout << "replayed " << report.events_total << " events, " << report.detections.size()
            << " detections, reports in " << out_dir << "\n";
  return report.detections.empty() ? kExitOk : kExitViolations;
}

int run_generate(const std::string& spec_path, std::optional<std::uint64_t> seed,
                 const std::string& out_dir) {
  mi9::ScenarioSpec spec = mi9::ScenarioSpec::load(spec_path);
  if (seed) spec.seed = *seed;
  mi9::GeneratedScenario scenario = mi9::generate_scenario(spec);
  std::filesystem::create_directories(out_dir);
  mi9::write_scenario(scenario, out_dir + "/trace.jsonl", out_dir + "/ground_truth.jsonl");
  std::cout << "generated " << scenario.events.size() << " events, "
            << scenario.truth.entries.size() << " labeled violations, trace_id "
            << scenario.trace_id << "\n";
  return kExitOk;
}

int run_evaluate(const std::string& ground_truth_path, const std::string& report_dir,
                 const std::string& out_path) {
  mi9::GroundTruth truth = mi9::GroundTruth::load(ground_truth_path);
  auto detections = mi9::RunReport::load_detections(report_dir);
  auto warnings = mi9::RunReport::load_warning_refs(report_dir);
  std::string trace_id = mi9::RunReport::load_trace_id(report_dir);
  mi9::MetricsReport metrics = mi9::evaluate_metrics(truth, detections, warnings, trace_id);
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    out << metrics.to_json().dump(2) << "\n";
  }
  std::cout << metrics.to_table();
  return kExitOk;
}

int run_validate(const std::string& policy_path) {
  mi9::Policy policy = mi9::Policy::load(policy_path);
  auto rules = policy.compile_rules();
  std::cout << "policy ok: " << rules.size() << " rules, " << policy.permissions.size()
            << " grant sets, " << policy.ari_scores.size() << " score sheets\n";
  for (const auto& rule : rules) {
    std::cout << "  rule " << rule.spec().rule_id << ": " << rule.step_count() << " steps, "
              << (rule.spec().mode == mi9::RuleMode::ForbiddenSequence ? "forbidden_sequence"
                                                                       : "required_follow_up")
              << (rule.spec().critical ? ", critical" : "") << "\n";
  }
  return kExitOk;
}

int run_import(const std::string& input_path, const std::string& out_path) {
  mi9::ImportResult result = mi9::import_dataset(input_path);
  for (const auto& [line, message] : result.line_errors) {
    std::cerr << input_path << ":" << line << ": skipped: " << message << "\n";
  }
  mi9::TraceWriter writer(out_path);
  std::set<std::string> seen;
  std::size_t dupes = 0;
  for (mi9::Event& e : result.events) {
    if (!seen.insert(e.event_id).second) {
      ++dupes;
      e.event_id += "-dup" + std::to_string(dupes);
      seen.insert(e.event_id);
    }
    writer.write(e);
  }
  std::cout << "imported " << result.events.size() << " of " << result.lines_read << " records ("
            << result.line_errors.size() << " skipped) into " << out_path << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"runtime governance engine for agent telemetry"};
  app.require_subcommand(1);

  // replay
  auto* replay = app.add_subcommand("replay", "replay traces through the monitor pipeline");
  std::vector<std::string> traces;
  std::string policy_path, out_dir, ground_truth_path;
  std::int64_t reorder_window = -1;
  std::string mode = "observe";
  bool strict_verbs = false;
  replay->add_option("--trace", traces, "trace file (repeatable)")->required()->expected(-1);
  replay->add_option("--policy", policy_path, "policy file")->required();
  replay->add_option("--out", out_dir, "output directory")->required();
  replay->add_option("--reorder-window-ms", reorder_window, "reordering window override");
  replay->add_option("--mode", mode, "observe|enforce")
      ->check(CLI::IsMember({"observe", "enforce"}));
  replay->add_flag("--strict-verbs", strict_verbs, "reject unknown verb prefixes");
  replay->add_option("--ground-truth", ground_truth_path, "labeled sidecar for metrics");
  std::string baselines_in, baselines_out;
  replay->add_option("--baselines", baselines_in, "warm-start baselines file");
  replay->add_option("--export-baselines", baselines_out, "write learned baselines here");

  // generate
  auto* generate = app.add_subcommand("generate", "generate a labeled scenario trace");
  std::string spec_path, gen_out;
  std::uint64_t seed = 0;
  bool seed_set = false;
  generate->add_option("--spec", spec_path, "scenario spec file")->required();
  generate->add_option("--out", gen_out, "output directory")->required();
  generate->add_option("--seed", seed, "seed override")->each([&](const std::string&) {
    seed_set = true;
  });

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "compute metrics from a replay report");
  std::string eval_truth, eval_report, eval_out;
  evaluate->add_option("--ground-truth", eval_truth, "labeled sidecar")->required();
  evaluate->add_option("--report-dir", eval_report, "replay output directory")->required();
  evaluate->add_option("--out", eval_out, "metrics json output path");

  // validate-policy
  auto* validate = app.add_subcommand("validate-policy", "compile and check a policy file");
  std::string validate_path;
  validate->add_option("--policy", validate_path, "policy file")->required();

  // import-dataset
  auto* import_cmd = app.add_subcommand("import-dataset", "map foreign records onto the trace format");
  std::string import_in, import_out;
  import_cmd->add_option("--input", import_in, "dataset file (JSON lines)")->required();
  import_cmd->add_option("--out", import_out, "trace output path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (replay->parsed()) {
      std::optional<std::int64_t> window;
      if (reorder_window >= 0) window = reorder_window;
      return run_replay(traces, policy_path, out_dir, window, mode == "enforce", strict_verbs,
                        ground_truth_path, baselines_in, baselines_out);
    }
    if (generate->parsed()) {
      return run_generate(spec_path, seed_set ? std::optional<std::uint64_t>(seed) : std::nullopt,
                          gen_out);
    }
    if (evaluate->parsed()) return run_evaluate(eval_truth, eval_report, eval_out);
    if (validate->parsed()) return run_validate(validate_path);
    if (import_cmd->parsed()) return run_import(import_in, import_out);
  } catch (const mi9::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
