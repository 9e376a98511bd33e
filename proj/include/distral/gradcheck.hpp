#pragma once

#include <string>
#include <vector>

#include "distral/mdp.hpp"
#include "distral/policy_grad.hpp"
#include "distral/rng.hpp"

namespace distral {

struct RandomMdpOptions {
  int n_states = 4;
  int n_actions = 3;
  double discount = 0.95;
  double reward_scale = 1.0;
};

/// Ergodic MDP with dense random transition rows and uniform [-scale, scale]
/// rewards; no terminal states.
TabularMdp random_mdp(Rng& rng, const RandomMdpOptions& opts = {});

/// Joint parameters with logits drawn uniformly from [-scale, scale] and
/// value tables from [-scale, scale].
JointParams random_params(Rng& rng, int n_tasks, int n_states, int n_actions, Architecture arch,
                          double scale = 1.0);

struct GradCheckRow {
  int instance;
  int point;
  std::string param;
  double analytic;
  double numeric;
  double rel_error;
};

struct GradCheckSummary {
  std::vector<GradCheckRow> rows;
  double max_rel_error = 0.0;
};

/// Verifies the exact-expectation policy gradients against central finite
/// differences of the exact objective on random multi-task instances.
/// Relative errors use the per-point gradient scale
/// max(|analytic|_inf, |numeric|_inf) as the denominator.
GradCheckSummary run_gradient_check(int n_instances, int n_tasks, int points_per_instance, uint64_t seed,
                                    double eps = 1e-5, Architecture arch = Architecture::two_column);

void write_gradcheck_csv(const std::string& path, const GradCheckSummary& summary);

}  // namespace distral
