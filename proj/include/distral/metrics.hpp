#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "distral/grid.hpp"
#include "distral/records.hpp"
#include "distral/tabular.hpp"

namespace distral {

/// Trapezoidal area under mean_return over env_steps, normalized by the step
/// span. Requires at least two points with strictly increasing env_steps.
double compute_auc(std::span<const CurvePoint> curve);

/// Eval-return curve of one task of a run, as CurvePoints.
std::vector<CurvePoint> task_eval_curve(const TaskCurve& task);

/// Mean/std over the tasks of one run at matching env_steps.
std::vector<CurvePoint> aggregate_run_curve(const RunRecord& record);

/// Mean AUC over the tasks of a run (eval-return curves).
double run_auc(const RunRecord& record);

/// Mean eval return over the last `window_frac` of the budget, over tasks.
double run_final_score(const RunRecord& record, double window_frac = 0.05);

/// Final scores per algorithm label, one per (hyper, seed) run, sorted
/// descending.
struct RobustnessTable {
  std::map<std::string, std::vector<double>> scores;
};
RobustnessTable build_robustness(std::span<const RunRecord> records, double window_frac = 0.05);

/// Raw corridor action probabilities: one row per (corridor cell,
/// prev_action in {left, right}, action), with prev_reward fixed at the step
/// penalty.
struct CorridorProb {
  Cell cell;
  int prev_action;
  int action;
  double prob;
};
std::vector<CorridorProb> corridor_policy_probs(const TabularPolicy& pi0, const GridTask& task);

/// Text depiction of the distilled policy in the corridor conditioned on the
/// previous action being left/right: per cell, one glyph per action repeated
/// by its probability bucket (round(p * 5), so zero-probability actions
/// vanish and certainty prints the maximal arrow).
std::string render_corridor_policy(const TabularPolicy& pi0, const GridTask& task);

// CSV / JSON emission ---------------------------------------------------------

void write_curves_csv(const std::string& path, std::span<const RunRecord> records);
void write_run_csv(const std::string& path, const RunRecord& record);
void write_robustness_csv(const std::string& path, const RobustnessTable& table);
void write_corridor_csv(const std::string& path, std::span<const CorridorProb> rows);

/// Reads back a curves.csv written by write_curves_csv; the round trip is
/// lossless (doubles emitted with round-trip precision).
std::vector<RunRecord> load_curves_csv(const std::string& path);

}  // namespace distral
