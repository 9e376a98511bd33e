#include "distral/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "distral/metrics.hpp"
#include "distral/orchestrator.hpp"
#include "distral/serialize.hpp"
#include "json.hpp"

namespace distral {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string run_tag(const RunRecord& r) {
  std::string label = r.algo;
  for (char& c : label)
    if (c == '/' || c == ' ') c = '_';
  return label + "_h" + std::to_string(r.hyper_id) + "_s" + std::to_string(r.seed);
}

/// Per-task normalization factors from the best plain-A3C final scores, used
/// only when every factor is positive (negative grid returns would flip
/// signs under division).
std::optional<std::vector<double>> a3c_normalizers(const ExperimentPlan& plan,
                                                   std::span<const RunRecord> records) {
  std::vector<double> best(plan.n_tasks, -std::numeric_limits<double>::infinity());
  bool found = false;
  for (const auto& r : records) {
    if (!r.complete || r.algo != "A3C") continue;
    for (const auto& task : r.tasks) {
      if (task.points.empty()) continue;
      double s = task.points.back().eval_return;
      if (std::isfinite(s)) {
        best[task.task_id] = std::max(best[task.task_id], s);
        found = true;
      }
    }
  }
  if (!found) return std::nullopt;
  for (double b : best)
    if (!(b > 0.0)) return std::nullopt;
  return best;
}

}  // namespace

int cli_run(const CliRunOptions& opts) {
  ExperimentPlan plan;
  try {
    std::ifstream in(opts.config_path);
    if (!in) {
      std::cerr << "error: cannot read config " << opts.config_path << "\n";
      return kExitConfigError;
    }
    std::stringstream ss;
    ss << in.rdbuf();
    plan = plan_from_json(ss.str());
  } catch (const std::exception& e) {
    std::cerr << "error: invalid config: " << e.what() << "\n";
    return kExitConfigError;
  }

  if (opts.seed_override) plan.seeds = {*opts.seed_override};
  if (opts.workers_override) plan.workers.workers_per_task = std::max(1, *opts.workers_override);
  if (opts.serialized) plan.workers.staleness_mode = StalenessMode::serialized;
  if (!opts.algo_filter.empty()) {
    std::vector<AlgorithmEntry> kept;
    for (const auto& a : plan.algorithms)
      if (std::find(opts.algo_filter.begin(), opts.algo_filter.end(), a.label) != opts.algo_filter.end())
        kept.push_back(a);
    if (kept.empty()) {
      std::cerr << "error: --algos matched no plan algorithm\n";
      return kExitConfigError;
    }
    plan.algorithms = std::move(kept);
  }

  std::string out_dir = opts.out_dir;
  if (const char* env = std::getenv("DISTRAL_OUT"); env && *env) out_dir = env;

  try {
    fs::create_directories(fs::path(out_dir) / "runs");
  } catch (const std::exception& e) {
    std::cerr << "error: cannot create output directory: " << e.what() << "\n";
    return kExitConfigError;
  }

  std::vector<RunRecord> records;
  bool any_failed = false;
  for (const auto& algo : plan.algorithms)
    for (int h = 0; h < static_cast<int>(plan.hyper_grid.size()); ++h)
      for (uint64_t seed : plan.seeds) {
        RunArtifacts artifacts;
        RunRecord record;
        try {
          record = run_one(plan, algo, h, seed, &artifacts);
        } catch (const std::exception& e) {
          record.algo = algo.label.empty() ? to_string(algo.spec.name) : algo.label;
          record.hyper_id = h;
          record.seed = seed;
          record.complete = false;
          record.error = e.what();
          any_failed = true;
          std::cerr << "run " << run_tag(record) << " failed: " << e.what() << "\n";
          records.push_back(std::move(record));
          continue;
        }
        std::string tag = run_tag(record);
        write_run_csv((fs::path(out_dir) / "runs" / (tag + ".csv")).string(), record);
        if (!artifacts.tasks.empty()) {
          std::ofstream tj(fs::path(out_dir) / "runs" / (tag + "_tasks.json"));
          json tasks = json::array();
          for (const auto& t : artifacts.tasks) tasks.push_back(json::parse(grid_task_to_json(t)));
          tj << tasks.dump(2) << "\n";
        }
        if (artifacts.distilled) {
          std::ofstream pj(fs::path(out_dir) / "runs" / (tag + "_pi0.json"));
          pj << policy_to_json(*artifacts.distilled) << "\n";
          std::ofstream rt(fs::path(out_dir) / "runs" / (tag + "_corridor.txt"));
          rt << render_corridor_policy(*artifacts.distilled, artifacts.tasks.front());
          auto probs = corridor_policy_probs(*artifacts.distilled, artifacts.tasks.front());
          write_corridor_csv((fs::path(out_dir) / "runs" / (tag + "_corridor.csv")).string(), probs);
        }
        std::cout << tag << ": auc=" << record.auc << " final=" << record.final_score << "\n";
        records.push_back(std::move(record));
      }

  write_curves_csv((fs::path(out_dir) / "curves.csv").string(), records);
  write_robustness_csv((fs::path(out_dir) / "robustness.csv").string(),
                       build_robustness(records, plan.final_window_frac));

  json summary;
  summary["plan"] = json::parse(plan_to_json(plan));
  summary["runs"] = json::array();
  for (const auto& r : records) {
    json jr;
    jr["algo"] = r.algo;
    jr["hyper_id"] = r.hyper_id;
    jr["seed"] = r.seed;
    jr["complete"] = r.complete;
    if (!r.complete) jr["error"] = r.error;
    jr["auc"] = std::isfinite(r.auc) ? json(r.auc) : json();
    jr["final_score"] = std::isfinite(r.final_score) ? json(r.final_score) : json();
    jr["updates_applied"] = r.updates_applied;
    jr["steps_per_second"] = r.steps_per_second;
    summary["runs"].push_back(std::move(jr));
  }

  // per-algorithm hyper selection by mean AUC
  summary["best_hypers"] = json::object();
  for (const auto& algo : plan.algorithms) {
    std::vector<RunRecord> own;
    for (const auto& r : records)
      if (r.algo == algo.label && r.complete && std::isfinite(r.auc)) own.push_back(r);
    if (own.empty()) continue;
    try {
      HyperSelection sel = select_best_hypers(own, plan.hyper_grid);
      json js;
      js["hyper_id"] = sel.hyper_id;
      js["entropy_cost"] = sel.setting.entropy_cost;
      js["step_size"] = sel.setting.step_size;
      json curve = json::array();
      for (const auto& cp : sel.curve)
        curve.push_back({{"env_steps", cp.env_steps}, {"mean", cp.mean_return}, {"std", cp.std_over_tasks}});
      js["curve"] = std::move(curve);
      summary["best_hypers"][algo.label] = std::move(js);
    } catch (const std::exception&) {
      // selection needs at least one finite-AUC record
    }
  }

  auto normalizers = plan.normalize_scores ? a3c_normalizers(plan, records) : std::nullopt;
  summary["normalization"]["enabled"] = plan.normalize_scores;
  summary["normalization"]["applied"] = normalizers.has_value();
  if (normalizers) {
    summary["normalization"]["per_task_baseline"] = *normalizers;
    json normed = json::object();
    for (const auto& r : records) {
      if (!r.complete) continue;
      double sum = 0.0;
      int n = 0;
      for (const auto& task : r.tasks) {
        if (task.points.empty()) continue;
        double s = task.points.back().eval_return;
        if (std::isfinite(s)) {
          sum += s / (*normalizers)[task.task_id];
          ++n;
        }
      }
      if (n > 0) normed[run_tag(r)] = sum / n;
    }
    summary["normalization"]["normalized_final_scores"] = std::move(normed);
  }

  std::ofstream sj(fs::path(out_dir) / "summary.json");
  sj << summary.dump(2) << "\n";

  return any_failed ? kExitRuntimeError : kExitOk;
}

}  // namespace distral
