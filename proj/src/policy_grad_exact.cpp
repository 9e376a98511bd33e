#include <cmath>

#include "distral/oracles.hpp"
#include "distral/policy_grad.hpp"

namespace distral {

Table regularized_action_values(const TabularMdp& mdp, const TabularPolicy& pi, const TabularPolicy& pi0,
                                const RegularizationConfig& cfg) {
  const int S = mdp.n_states();
  const int A = mdp.n_actions();
  const double alpha = cfg.alpha();
  const double beta = cfg.beta();
  Table rreg(S, A);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) {
      double term = mdp.reward(s, a) - std::log(std::max(pi.probs(s, a), kLogProbFloor)) / beta;
      if (alpha > 0.0) term += alpha / beta * std::log(std::max(pi0.probs(s, a), kLogProbFloor));
      rreg(s, a) = term;
    }
  ValueTable v = policy_evaluation(mdp, pi, rreg);
  Table q(S, A);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) q(s, a) = rreg(s, a) + mdp.discount() * mdp.expected_next_value(s, a, v);
  return q;
}

namespace {

/// Score-function part sum_a mu(s,a) (1[b=a] - pi(b|s)) Qreg(s,a).
void add_score_term(const OccupancyMeasure& mu, const TabularPolicy& pi, const Table& qreg, double weight,
                    Table& out) {
  const int S = out.rows();
  const int A = out.cols();
  for (int s = 0; s < S; ++s) {
    double total = 0.0;
    for (int a = 0; a < A; ++a) total += mu.mu(s, a) * qreg(s, a);
    for (int b = 0; b < A; ++b) out(s, b) += weight * (mu.mu(s, b) * qreg(s, b) - pi.probs(s, b) * total);
  }
}

}  // namespace

Table expected_task_gradient(const TabularMdp& mdp, const JointParams& params, int task,
                             const RegularizationConfig& cfg, std::span<const double> start, Architecture arch) {
  TabularPolicy pi = policy_table(params, task, cfg, arch);
  TabularPolicy pi0 = distilled_table(params);
  OccupancyMeasure mu = exact_occupancy(mdp, pi, start);
  Table qreg = regularized_action_values(mdp, pi, pi0, cfg);
  Table g(params.h.rows(), params.h.cols());
  add_score_term(mu, pi, qreg, 1.0, g);
  return g;
}

Table expected_distilled_gradient(std::span<const TabularMdp> mdps, const JointParams& params,
                                  const RegularizationConfig& cfg, std::span<const double> start,
                                  Architecture arch) {
  const double alpha = cfg.alpha();
  const double beta = cfg.beta();
  Table g(params.h.rows(), params.h.cols());
  if (alpha == 0.0 || arch == Architecture::shared_only) return g;
  TabularPolicy pi0 = distilled_table(params);
  for (size_t i = 0; i < mdps.size(); ++i) {
    TabularPolicy pi = policy_table(params, static_cast<int>(i), cfg, arch);
    OccupancyMeasure mu = exact_occupancy(mdps[i], pi, start);
    if (arch == Architecture::two_column) {
      Table qreg = regularized_action_values(mdps[i], pi, pi0, cfg);
      add_score_term(mu, pi, qreg, alpha, g);
    }
    std::vector<double> d = mu.state_marginals();
    for (int s = 0; s < g.rows(); ++s)
      for (int b = 0; b < g.cols(); ++b)
        g(s, b) += alpha / beta * d[s] * (pi.probs(s, b) - pi0.probs(s, b));
  }
  return g;
}

}  // namespace distral
