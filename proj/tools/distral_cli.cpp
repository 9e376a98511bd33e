#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "distral/cli.hpp"
#include "distral/gradcheck.hpp"
#include "distral/metrics.hpp"
#include "distral/serialize.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Multitask RL training and evaluation on tabular grid worlds"};
  app.require_subcommand(1);

  distral::CliRunOptions run_opts;
  uint64_t seed_value = 0;
  int workers_value = 0;
  auto* run = app.add_subcommand("run", "Execute an experiment plan");
  run->add_option("--config", run_opts.config_path, "Plan config (JSON)")->required();
  run->add_option("--out", run_opts.out_dir, "Output directory (DISTRAL_OUT overrides)");
  auto* seed_opt = run->add_option("--seed", seed_value, "Run only this seed");
  run->add_option("--algos", run_opts.algo_filter, "Only run these algorithm labels");
  auto* workers_opt = run->add_option("--workers", workers_value, "Workers per task");
  run->add_flag("--serialized", run_opts.serialized, "Force the deterministic serialized mode");

  std::string policy_path, task_path, corridor_csv;
  auto* render = app.add_subcommand("render-corridor", "Text rendering of a distilled policy in the corridor");
  render->add_option("--policy", policy_path, "Distilled policy (JSON)")->required();
  render->add_option("--task", task_path, "Grid task (JSON)")->required();
  render->add_option("--csv", corridor_csv, "Also write raw probabilities to this CSV");

  int gc_instances = 10, gc_tasks = 2, gc_points = 10;
  uint64_t gc_seed = 0;
  std::string gc_out = "gradcheck.csv";
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference verification of the policy gradients");
  gradcheck->add_option("--out", gc_out, "Report CSV path");
  gradcheck->add_option("--instances", gc_instances, "Random instances");
  gradcheck->add_option("--tasks", gc_tasks, "Tasks per instance");
  gradcheck->add_option("--points", gc_points, "Parameter points per instance");
  gradcheck->add_option("--seed", gc_seed, "Seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      if (!seed_opt->empty()) run_opts.seed_override = seed_value;
      if (!workers_opt->empty()) run_opts.workers_override = workers_value;
      return distral::cli_run(run_opts);
    }
    if (render->parsed()) {
      auto slurp = [](const std::string& p) {
        std::ifstream in(p);
        if (!in) throw std::runtime_error("cannot read " + p);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
      };
      distral::TabularPolicy pi0 = distral::policy_from_json(slurp(policy_path));
      distral::GridTask task = distral::grid_task_from_json(slurp(task_path));
      std::cout << distral::render_corridor_policy(pi0, task);
      if (!corridor_csv.empty())
        distral::write_corridor_csv(corridor_csv, distral::corridor_policy_probs(pi0, task));
      return 0;
    }
    if (gradcheck->parsed()) {
      auto summary = distral::run_gradient_check(gc_instances, gc_tasks, gc_points, gc_seed);
      distral::write_gradcheck_csv(gc_out, summary);
      std::cout << "checked " << summary.rows.size() << " gradient entries, max rel error " << summary.max_rel_error
                << "\n";
      return summary.max_rel_error <= 1e-5 ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
