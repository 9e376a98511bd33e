#pragma once

#include <span>
#include <vector>

#include "distral/mdp.hpp"
#include "distral/regularization.hpp"
#include "distral/table.hpp"
#include "distral/tabular.hpp"
#include "distral/trajectory.hpp"

namespace distral {

/// How task-policy logits are composed from the shared column h and the
/// per-task column f:
///   separate     logits_i = f_i          (own network per policy)
///   shared_only  logits_i = h            (one shared policy for all tasks)
///   two_column   logits_i = alpha*h + f_i
/// f carries the inverse-temperature scale, so two_column realizes
/// pi_i = pi0^alpha * exp(beta * A_hat) with f = beta * (soft advantages).
enum class Architecture { separate, shared_only, two_column };

/// Logit tables for the distilled column and the per-task columns, plus the
/// per-task value baselines. `f` is empty under shared_only.
struct JointParams {
  Table h;
  std::vector<Table> f;
  std::vector<ValueTable> v;

  static JointParams zeros(int n_tasks, int n_states, int n_actions, Architecture arch);
  int n_tasks() const { return static_cast<int>(v.size()); }
};

struct GradientAccumulator {
  Table d_h;
  std::vector<Table> d_f;
  std::vector<ValueTable> d_v;
  long floored_logs = 0;  // diagnostic: probability floor hits inside logs

  static GradientAccumulator zeros_like(const JointParams& p);
  void zero();
  void add(const GradientAccumulator& other);
  bool all_finite() const;
};

struct PolicyGradOptions {
  Architecture architecture = Architecture::two_column;
  bool use_baseline = true;
  bool bootstrap_truncated = true;  // bootstrap v at step-cap/batch cuts
  double gamma = 0.95;              // task discount
};

/// Softmax of the distilled logits row, computed with max subtraction.
std::vector<double> distilled_policy_row(std::span<const double> h_row);

/// Two-column task policy, softmax over alpha*h + f.
std::vector<double> task_policy_row(std::span<const double> h_row, std::span<const double> f_row,
                                    const RegularizationConfig& cfg);

/// Beta-scaled soft advantages of the two-column parameterization:
///   beta * A_hat(a) = f(a) - log sum_a' pi0(a')^alpha * exp(f(a')).
std::vector<double> soft_advantage_row(std::span<const double> h_row, std::span<const double> f_row,
                                       const RegularizationConfig& cfg);

/// r + (alpha/beta) log pi0 - (1/beta) log pi_i, probabilities floored at
/// kLogProbFloor before the logarithms.
double regularized_reward(double r, double pi0_prob, double pii_prob, const RegularizationConfig& cfg);

/// Task-policy row under the given architecture.
std::vector<double> policy_row(const JointParams& params, int task, int state, const RegularizationConfig& cfg,
                               Architecture arch);

/// Full task-policy table (softmax row per state).
TabularPolicy policy_table(const JointParams& params, int task, const RegularizationConfig& cfg, Architecture arch);
TabularPolicy distilled_table(const JointParams& params);

/// Policy-gradient contribution of one trajectory to the task columns:
///   d_f(s_t, b) += (1[b = a_t] - pi_i(b|s_t)) * (G_t - gamma^t v(s_t))
/// with G_t = sum_{u >= t} gamma^u Rreg_u (episode-relative indices), plus
/// the Monte-Carlo value regression direction in d_v. Under shared_only the
/// score lands on d_h since h is the only policy column.
void task_gradient(const Trajectory& traj, int task, const JointParams& params, const RegularizationConfig& cfg,
                   const PolicyGradOptions& opt, GradientAccumulator& out);

/// Distilled-column gradient from one task's trajectory: the through-the-
/// softmax score term (two_column only, weight alpha) plus the probability
/// matching term
///   d_h(s_t, b) += (alpha/beta) * gamma^t * (pi_i(b|s_t) - pi0(b|s_t)).
void distilled_gradient(const Trajectory& traj, int task, const JointParams& params, const RegularizationConfig& cfg,
                        const PolicyGradOptions& opt, GradientAccumulator& out);

/// The matching term alone, over explicit probability tables. Exposed so the
/// centroid cancellation is checkable against arbitrary distilled rows.
void accumulate_matching_term(const Trajectory& traj, const Table& pi_task, const Table& pi_distilled,
                              double alpha_over_beta, double gamma, Table& d_h);

/// Ascent step on policy and value parameters. value_l2_coeff > 0 pulls the
/// per-task value tables toward their mean. Throws without touching params
/// if any gradient entry is non-finite.
void sgd_apply(JointParams& params, const GradientAccumulator& grads, double step_size, double value_l2_coeff = 0.0);

// --- exact-expectation forms (verification path) ---------------------------

/// Exact regularized action values Qreg under the current task policy.
Table regularized_action_values(const TabularMdp& mdp, const TabularPolicy& pi, const TabularPolicy& pi0,
                                const RegularizationConfig& cfg);

/// Exact-expectation gradient of the joint objective with respect to the
/// task column of `task`, computed via occupancy measures.
Table expected_task_gradient(const TabularMdp& mdp, const JointParams& params, int task,
                             const RegularizationConfig& cfg, std::span<const double> start, Architecture arch);

/// Exact-expectation gradient with respect to the distilled column, summed
/// over tasks (score term plus matching term).
Table expected_distilled_gradient(std::span<const TabularMdp> mdps, const JointParams& params,
                                  const RegularizationConfig& cfg, std::span<const double> start, Architecture arch);

}  // namespace distral
