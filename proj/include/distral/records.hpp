#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace distral {

/// One point of an aggregated learning curve.
struct CurvePoint {
  long long env_steps = 0;
  double mean_return = 0.0;
  double std_over_tasks = 0.0;
};

/// One evaluation point of a single task's curve. train_return is the mean
/// over recently finished training episodes; eval_return averages dedicated
/// evaluation episodes under the task policy; distilled_eval_return does the
/// same under the distilled policy (NaN when the algorithm has none).
struct EvalPoint {
  long long env_steps = 0;
  double train_return = std::numeric_limits<double>::quiet_NaN();
  double eval_return = std::numeric_limits<double>::quiet_NaN();
  double distilled_eval_return = std::numeric_limits<double>::quiet_NaN();
};

struct TaskCurve {
  int task_id = 0;
  std::vector<EvalPoint> points;
};

/// Everything recorded about one (algorithm, hyper setting, seed) run.
struct RunRecord {
  std::string algo;
  int hyper_id = 0;
  uint64_t seed = 0;
  std::map<std::string, double> hypers;

  std::vector<TaskCurve> tasks;

  bool complete = true;
  std::string error;

  double auc = std::numeric_limits<double>::quiet_NaN();          // mean over tasks
  double final_score = std::numeric_limits<double>::quiet_NaN();  // mean over last 5% of budget

  // async harness metrics
  uint64_t updates_applied = 0;
  double steps_per_second = 0.0;
};

}  // namespace distral
