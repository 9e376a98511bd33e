#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "distral/async.hpp"
#include "distral/grid.hpp"
#include "distral/policy_grad.hpp"
#include "distral/records.hpp"
#include "distral/regularization.hpp"
#include "distral/tabular.hpp"

namespace distral {

/// The seven jointly optimized configurations plus the alternating
/// soft-Q/distillation agent used for the grid-world study.
enum class AlgorithmName {
  a3c,
  a3c_multitask,
  a3c_2col,
  kl_1col,
  kl_2col,
  kl_ent_1col,
  kl_ent_2col,
  tabular_distral,
};

std::string to_string(AlgorithmName name);
std::optional<AlgorithmName> algorithm_from_string(const std::string& s);
std::vector<AlgorithmName> all_joint_algorithms();  // the seven-way comparison set

enum class Optimization { joint, alternating };

struct AlgorithmSpec {
  AlgorithmName name = AlgorithmName::kl_2col;
  RegularizationConfig cfg;
  Architecture architecture = Architecture::two_column;
  Optimization optimization = Optimization::joint;
};

/// Canonical spec for a named row: fixes alpha (0 for the A3C family, 1 for
/// KL, kl_ent_alpha in between), the architecture and the optimization mode.
AlgorithmSpec make_algorithm_spec(AlgorithmName name, double beta, double kl_ent_alpha = 0.5);

/// Throws std::invalid_argument naming the violated invariant.
void validate_algorithm_spec(const AlgorithmSpec& spec);

/// A trainer advances one task by one batch at a time and can snapshot its
/// policies. Implementations are thread-safe across distinct tasks.
class Trainer {
 public:
  virtual ~Trainer() = default;
  virtual int n_tasks() const = 0;
  /// Runs one training batch for `task` on `env`; returns env steps used.
  virtual int train_batch(int task, Env& env, Rng& rng, TrainingMonitor* monitor) = 0;
  virtual TabularPolicy task_policy(int task) const = 0;
  /// Empty when the algorithm maintains no distilled/common policy.
  virtual std::optional<TabularPolicy> distilled_policy() const = 0;
  /// Synchronization hook; alternating trainers refresh pi0 here.
  virtual void sync() {}
  /// Batches between sync() calls per task (alternating path; 0 = never).
  virtual int batches_per_sync() const { return 0; }
  virtual uint64_t updates_applied() const = 0;
};

/// Instantiates a runnable trainer for the spec over a task suite with the
/// given shared state/action space.
std::unique_ptr<Trainer> build_algorithm(const AlgorithmSpec& spec, int n_tasks, int n_states, int n_actions,
                                         const WorkerConfig& wcfg, double step_size, double value_l2 = 0.0,
                                         const TabularSchedule& tabular = {});

struct HyperSetting {
  double entropy_cost = 0.2;  // 1/beta
  double step_size = 0.1;
};

struct AlgorithmEntry {
  AlgorithmSpec spec;
  std::string label;    // curve label; defaults to the algorithm name
  bool distill = true;  // alternating path only; false = independent soft-Q
};

struct ExperimentPlan {
  std::string name = "plan";

  TwoRoomParams task_params;
  int n_tasks = 4;
  uint64_t task_seed_base = 0;
  bool distinct_goals = true;

  std::vector<AlgorithmEntry> algorithms;
  std::vector<HyperSetting> hyper_grid;
  std::vector<uint64_t> seeds;

  long long budget_steps_per_task = 100000;
  int eval_every = 1000;
  int eval_episodes = 10;

  WorkerConfig workers{1, 20, StalenessMode::serialized};

  // alternating-path schedule
  int rollout_len = 10;
  int rollouts_per_distill = 10;
  double pseudocount = 1.0;

  double kl_ent_alpha = 0.5;
  double value_l2_coeff = 0.0;
  bool normalize_scores = true;
  double final_window_frac = 0.05;
};

ExperimentPlan plan_from_json(const std::string& text);
std::string plan_to_json(const ExperimentPlan& plan);

/// Builds the plan's task suite for one run seed: goals are drawn per task
/// from seeds derived from (task_seed_base, run_seed), resampled to be
/// distinct when requested.
std::vector<GridTask> make_task_suite(const ExperimentPlan& plan, uint64_t run_seed);

/// Final parameters of a run, for dumps and rendering.
struct RunArtifacts {
  std::optional<TabularPolicy> distilled;
  std::vector<TabularPolicy> task_policies;
  std::vector<GridTask> tasks;
};

/// Executes one (algorithm, hyper, seed) run over the plan's task suite.
RunRecord run_one(const ExperimentPlan& plan, const AlgorithmEntry& algo, int hyper_id, uint64_t seed,
                  RunArtifacts* artifacts = nullptr);

/// Executes all seeds x hyper settings x algorithms. A failing run is
/// flagged incomplete (error recorded) and the remaining runs continue.
std::vector<RunRecord> run_plan(const ExperimentPlan& plan);

/// Setting with the highest mean AUC over tasks and seeds; ties break toward
/// the larger entropy cost. Also returns the aggregated eval curve of the
/// winning setting (mean and std over tasks and seeds).
struct HyperSelection {
  int hyper_id;
  HyperSetting setting;
  std::vector<CurvePoint> curve;
};
HyperSelection select_best_hypers(std::span<const RunRecord> records, std::span<const HyperSetting> grid);

}  // namespace distral
