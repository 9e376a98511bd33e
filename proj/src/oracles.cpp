#include "distral/oracles.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

namespace distral {

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/// Solves (I - gamma * M) x = b where M is supplied by its triplets.
Eigen::VectorXd solve_flow(int n, const std::vector<Triplet>& m_triplets, double gamma,
                           const Eigen::VectorXd& b, const char* who) {
  std::vector<Triplet> triplets;
  triplets.reserve(m_triplets.size() + n);
  for (int i = 0; i < n; ++i) triplets.emplace_back(i, i, 1.0);
  for (const auto& t : m_triplets) triplets.emplace_back(t.row(), t.col(), -gamma * t.value());
  SpMat mat(n, n);
  mat.setFromTriplets(triplets.begin(), triplets.end());
  Eigen::SparseLU<SpMat> solver;
  solver.compute(mat);
  if (solver.info() != Eigen::Success) throw std::runtime_error(std::string(who) + ": singular linear system");
  Eigen::VectorXd x = solver.solve(b);
  if (solver.info() != Eigen::Success) throw std::runtime_error(std::string(who) + ": linear solve failed");
  double residual = (mat * x - b).cwiseAbs().maxCoeff();
  if (!(residual <= 1e-10)) throw std::runtime_error(std::string(who) + ": solve residual exceeds 1e-10");
  return x;
}

}  // namespace

std::vector<double> default_start_distribution(const TabularMdp& mdp) {
  std::vector<double> start(mdp.n_states(), 0.0);
  int n = 0;
  for (int s = 0; s < mdp.n_states(); ++s)
    if (!mdp.is_terminal(s)) ++n;
  if (n == 0) throw std::invalid_argument("default_start_distribution: all states terminal");
  for (int s = 0; s < mdp.n_states(); ++s)
    if (!mdp.is_terminal(s)) start[s] = 1.0 / n;
  return start;
}

OccupancyMeasure exact_occupancy(const TabularMdp& mdp, const TabularPolicy& policy,
                                 std::span<const double> start) {
  const int S = mdp.n_states();
  const int A = mdp.n_actions();
  if (policy.probs.rows() != S || policy.probs.cols() != A)
    throw std::invalid_argument("exact_occupancy: policy shape mismatch");
  if (static_cast<int>(start.size()) != S) throw std::invalid_argument("exact_occupancy: start shape mismatch");
  if (!(mdp.discount() < 1.0)) throw std::invalid_argument("exact_occupancy: discount must be below 1");

  // state marginals d solve (I - gamma * P_pi^T) d = start
  std::vector<Triplet> trip;
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) {
      double pa = policy.probs(s, a);
      if (pa == 0.0) continue;
      for (const auto& tr : mdp.transitions(s, a)) trip.emplace_back(tr.next, s, pa * tr.prob);
    }
  Eigen::VectorXd b(S);
  for (int s = 0; s < S; ++s) b[s] = start[s];
  Eigen::VectorXd d = solve_flow(S, trip, mdp.discount(), b, "exact_occupancy");

  OccupancyMeasure out;
  out.mu = Table(S, A);
  for (int s = 0; s < S; ++s) {
    double ds = d[s];
    if (ds < 0.0) {
      if (ds < -1e-9) throw std::runtime_error("exact_occupancy: negative state marginal");
      ds = 0.0;
    }
    for (int a = 0; a < A; ++a) out.mu(s, a) = ds * policy.probs(s, a);
  }
  return out;
}

double exact_objective(std::span<const TabularMdp> mdps, const TabularPolicy& pi0,
                       std::span<const TabularPolicy> pis, const RegularizationConfig& cfg,
                       std::span<const double> start) {
  if (mdps.size() != pis.size() || mdps.empty())
    throw std::invalid_argument("exact_objective: need one policy per task");
  const double alpha = cfg.alpha();
  const double beta = cfg.beta();
  double j = 0.0;
  for (size_t i = 0; i < mdps.size(); ++i) {
    OccupancyMeasure occ = exact_occupancy(mdps[i], pis[i], start);
    for (int s = 0; s < mdps[i].n_states(); ++s)
      for (int a = 0; a < mdps[i].n_actions(); ++a) {
        double m = occ.mu(s, a);
        if (m == 0.0) continue;
        double p0 = pi0.probs(s, a);
        if (alpha > 0.0 && p0 == 0.0) return -std::numeric_limits<double>::infinity();
        double term = mdps[i].reward(s, a) - std::log(pis[i].probs(s, a)) / beta;
        if (alpha > 0.0) term += alpha / beta * std::log(p0);
        j += m * term;
      }
  }
  return j;
}

ValueTable finite_horizon_dp(const TabularMdp& mdp, const TabularPolicy& pi0, const RegularizationConfig& cfg,
                             int horizon) {
  if (horizon < 1) throw std::invalid_argument("finite_horizon_dp: horizon must be at least 1");
  const int S = mdp.n_states();
  const int A = mdp.n_actions();
  ValueTable v(S, 0.0);
  QTable q(S, A);
  const double gamma = mdp.discount();
  for (int k = 0; k < horizon; ++k) {
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) q(s, a) = mdp.reward(s, a) + gamma * mdp.expected_next_value(s, a, v);
    for (int s = 0; s < S; ++s) v[s] = mdp.is_terminal(s) ? 0.0 : soft_state_value(q.row(s), pi0.row(s), cfg);
  }
  return v;
}

ValueTable policy_evaluation(const TabularMdp& mdp, const TabularPolicy& policy, const Table& rewards) {
  const int S = mdp.n_states();
  const int A = mdp.n_actions();
  if (rewards.rows() != S || rewards.cols() != A) throw std::invalid_argument("policy_evaluation: reward shape mismatch");

  // (I - gamma * P_pi) V = r_pi
  std::vector<Triplet> trip;
  Eigen::VectorXd b(S);
  for (int s = 0; s < S; ++s) {
    double rs = 0.0;
    for (int a = 0; a < A; ++a) {
      double pa = policy.probs(s, a);
      if (pa == 0.0) continue;
      rs += pa * rewards(s, a);
      for (const auto& tr : mdp.transitions(s, a)) trip.emplace_back(s, tr.next, pa * tr.prob);
    }
    b[s] = rs;
  }
  Eigen::VectorXd v = solve_flow(S, trip, mdp.discount(), b, "policy_evaluation");
  return ValueTable(v.data(), v.data() + S);
}

}  // namespace distral
