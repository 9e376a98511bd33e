#pragma once

#include <optional>
#include <span>
#include <vector>

#include "distral/env.hpp"
#include "distral/mdp.hpp"
#include "distral/records.hpp"
#include "distral/regularization.hpp"
#include "distral/rng.hpp"
#include "distral/table.hpp"
#include "distral/trajectory.hpp"

namespace distral {

/// Per-state action distribution.
struct TabularPolicy {
  Table probs;

  static TabularPolicy uniform(int n_states, int n_actions) {
    TabularPolicy p;
    p.probs = Table(n_states, n_actions, 1.0 / n_actions);
    return p;
  }

  std::span<const double> row(int s) const { return probs.row(s); }

  /// Every row must sum to 1 within `tol` with nonnegative entries.
  void validate(double tol = 1e-9) const;
};

/// Discount-weighted state-action visitation accumulator.
struct VisitationCounts {
  Table counts;

  VisitationCounts() = default;
  VisitationCounts(int n_states, int n_actions) : counts(n_states, n_actions, 0.0) {}

  void scale(double factor) {
    for (double& c : counts.data()) c *= factor;
  }
};

/// Softened state value of one Q row under the prior row pi0:
///   (1/beta) * log sum_a pi0(a)^alpha * exp(beta * q(a)),
/// evaluated with max subtraction. A prior entry of exactly zero removes the
/// action when alpha > 0; if every action drops out the row is invalid.
double soft_state_value(std::span<const double> q_row, std::span<const double> pi0_row,
                        const RegularizationConfig& cfg);

/// Applies soft_state_value to every row of q.
ValueTable state_values(const QTable& q, const TabularPolicy& pi0, const RegularizationConfig& cfg);

/// One softened Bellman backup: V from the current Q row-wise (terminal
/// states pinned to zero), then Q'(s,a) = R(s,a) + gamma * E[V(s')].
struct BackupResult {
  ValueTable v;
  QTable q;
};
BackupResult soft_bellman_backup(const TabularMdp& mdp, const QTable& q, const TabularPolicy& pi0,
                                 const RegularizationConfig& cfg);

/// Iterates soft_bellman_backup from the given Q until the max-norm change
/// is at most tol. Throws on non-convergence, reporting the final residual.
struct ValueIterationResult {
  QTable q;
  ValueTable v;
  int iters;
  double residual;
};
ValueIterationResult soft_value_iteration(const TabularMdp& mdp, const TabularPolicy& pi0,
                                          const RegularizationConfig& cfg, double tol = 1e-9,
                                          int max_iters = 100000, const QTable* q_init = nullptr);

/// Boltzmann policy pi(a|s) = pi0(a|s)^alpha * exp(beta * (Q(s,a) - V(s))).
/// Requires v to agree with soft_state_value of q within consistency_tol;
/// a row that fails to normalize signals inconsistent (q, v) input.
TabularPolicy boltzmann_policy(const QTable& q, const ValueTable& v, const TabularPolicy& pi0,
                               const RegularizationConfig& cfg, double consistency_tol = 1e-6);

/// Convenience form using V computed from Q row-wise.
TabularPolicy boltzmann_policy_from_q(const QTable& q, const TabularPolicy& pi0, const RegularizationConfig& cfg);

/// Acts for `rollout_len` steps with the Boltzmann policy of the current Q,
/// applying the TD update
///   Q(s,a) += learn_rate * (r + gamma * V(s') - Q(s,a))
/// after each transition, with V(s') the softened value of the current Q row
/// (zero when the episode terminated; a step cap still bootstraps). Returns
/// the trajectory for distillation.
Trajectory soft_q_rollout_update(Env& env, QTable& q, const TabularPolicy& pi0, const RegularizationConfig& cfg,
                                 int rollout_len, double learn_rate, Rng& rng);

/// counts(s_t, a_t) += gamma^t for every step, t episode-relative.
void accumulate_visitations(VisitationCounts& counts, const Trajectory& traj, double gamma);

/// Adapts a policy table to the rollout interface. The policy must outlive
/// the returned function.
PolicyFn policy_fn(const TabularPolicy& p);

/// Mean undiscounted return of `episodes` episodes on a fresh clone of the
/// environment, acting by sampling from the policy.
double evaluate_policy(const Env& proto, const TabularPolicy& policy, int episodes, Rng& rng);

/// Maximum-likelihood distilled policy from pooled visitation counts,
/// smoothed by `pseudocount`:
///   pi0(a|s) = (pseudocount + sum_i counts_i(s,a)) / sum_a' (...).
/// With pseudocount zero an unvisited state gets a uniform row and its index
/// is reported in `flagged_states`.
struct DistillResult {
  TabularPolicy pi0;
  std::vector<int> flagged_states;
};
DistillResult distill_ml(std::span<const VisitationCounts> counts_per_task, double pseudocount);

/// Schedule for the alternating optimization loop.
struct TabularSchedule {
  int steps_per_task = 100000;      // environment step budget per task
  int rollout_len = 10;
  int rollouts_per_distill = 10;    // per task, between distillation refreshes
  double learn_rate = 0.1;
  double learn_rate_final = -1.0;   // <0: constant; otherwise linear anneal
  double pseudocount = 1.0;
  bool distill = true;              // false: pi0 stays uniform (independent soft-Q)
  double count_decay = 1.0;         // multiplies pooled counts at each refresh
  int eval_every = 1000;            // environment steps between eval points
  int eval_episodes = 10;
};

/// Alternating optimization: batches of soft Q-learning per task followed by
/// a maximum-likelihood refresh of the distilled policy. Returns the final
/// distilled policy, the per-task Q tables and one learning-curve record per
/// task (recorded in `record.tasks`).
struct AlternateResult {
  TabularPolicy pi0;
  std::vector<QTable> q_tables;
  RunRecord record;
};
AlternateResult alternate_optimize(std::span<Env* const> tasks, const RegularizationConfig& cfg,
                                   const TabularSchedule& schedule, Rng& rng);

}  // namespace distral
