#pragma once

#include <span>
#include <vector>

#include "distral/mdp.hpp"
#include "distral/regularization.hpp"
#include "distral/tabular.hpp"

namespace distral {

/// gamma-discounted state-action visitation under a fixed policy and start
/// distribution. Total mass is 1/(1-gamma) since terminal states are
/// absorbing rather than exiting.
struct OccupancyMeasure {
  Table mu;

  double total_mass() const {
    double m = 0.0;
    for (double v : mu.data()) m += v;
    return m;
  }

  std::vector<double> state_marginals() const {
    std::vector<double> d(mu.rows(), 0.0);
    for (int s = 0; s < mu.rows(); ++s)
      for (int a = 0; a < mu.cols(); ++a) d[s] += mu(s, a);
    return d;
  }
};

/// Uniform distribution over non-terminal states, matching the grid world's
/// uniform resets.
std::vector<double> default_start_distribution(const TabularMdp& mdp);

/// Solves the discounted flow equations mu = start (x) pi + gamma * P_pi^T mu
/// by a direct sparse linear solve; verifies the residual is at most 1e-10.
OccupancyMeasure exact_occupancy(const TabularMdp& mdp, const TabularPolicy& policy,
                                 std::span<const double> start);

/// Joint regularized objective evaluated exactly through occupancy measures:
///   J = sum_i sum_{s,a} mu_i(s,a) * [R_i(s,a) + (alpha/beta) log pi0(a|s)
///                                     - (1/beta) log pi_i(a|s)].
/// A state-action pair with positive occupancy but zero distilled-policy
/// probability makes the objective -infinity, which is returned explicitly.
double exact_objective(std::span<const TabularMdp> mdps, const TabularPolicy& pi0,
                       std::span<const TabularPolicy> pis, const RegularizationConfig& cfg,
                       std::span<const double> start);

/// Backward induction of the softened backups for `horizon` steps starting
/// from V = 0; terminal states stay pinned at zero.
ValueTable finite_horizon_dp(const TabularMdp& mdp, const TabularPolicy& pi0, const RegularizationConfig& cfg,
                             int horizon);

/// Exact policy evaluation of arbitrary per-(s,a) rewards under `policy`:
/// solves V = r_pi + gamma * P_pi V directly. Used to obtain regularized
/// action values for the exact-expectation gradients.
ValueTable policy_evaluation(const TabularMdp& mdp, const TabularPolicy& policy, const Table& rewards);

}  // namespace distral
