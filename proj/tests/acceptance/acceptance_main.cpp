// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Each criterion pins its tolerances and runtime budget in code.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "distral/gradcheck.hpp"
#include "distral/grid.hpp"
#include "distral/metrics.hpp"
#include "distral/oracles.hpp"
#include "distral/orchestrator.hpp"
#include "distral/policy_grad.hpp"
#include "distral/tabular.hpp"

using namespace distral;

namespace {

struct Criterion {
  int id;
  std::string name;
  double time_limit_s;
  std::function<bool(std::string&)> run;
};

TabularPolicy random_policy(Rng& rng, int S, int A) {
  TabularPolicy p;
  p.probs = Table(S, A);
  for (int s = 0; s < S; ++s) {
    double sum = 0.0;
    for (int a = 0; a < A; ++a) {
      p.probs(s, a) = rng.uniform(0.05, 1.0);
      sum += p.probs(s, a);
    }
    for (int a = 0; a < A; ++a) p.probs(s, a) /= sum;
  }
  return p;
}

char detail_buf[512];

// 1. soft Bellman fixed points vs the horizon-1000 dynamic program
bool criterion_soft_bellman(std::string& detail) {
  Rng rng(1001);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    RandomMdpOptions opts;
    opts.n_states = 2 + rng.uniform_int(4);
    opts.n_actions = 2 + rng.uniform_int(2);
    opts.discount = 0.95;
    TabularMdp mdp = random_mdp(rng, opts);
    TabularPolicy pi0 = random_policy(rng, opts.n_states, opts.n_actions);
    double u = rng.uniform();
    double alpha = u < 0.25 ? 0.0 : (u < 0.5 ? 1.0 : rng.uniform(0.1, 0.9));
    auto cfg = RegularizationConfig::from_alpha_beta(alpha, rng.uniform(0.5, 8.0));

    auto vi = soft_value_iteration(mdp, pi0, cfg, 1e-10);
    ValueTable dp = finite_horizon_dp(mdp, pi0, cfg, 1000);
    for (int s = 0; s < opts.n_states; ++s) worst = std::max(worst, std::fabs(vi.v[s] - dp[s]));
  }
  std::snprintf(detail_buf, sizeof(detail_buf), "20 MDPs, max |V_vi - V_dp| = %.3e (tol 1e-6)", worst);
  detail = detail_buf;
  return worst <= 1e-6;
}

// 2. exact-expectation gradients vs finite differences of the objective
bool criterion_gradients(std::string& detail) {
  auto summary = run_gradient_check(10, 2, 10, 2002, 1e-5, Architecture::two_column);
  std::snprintf(detail_buf, sizeof(detail_buf), "%zu entries over 10 instances x 10 points, max rel err = %.3e (tol 1e-5)",
                summary.rows.size(), summary.max_rel_error);
  detail = detail_buf;
  return summary.max_rel_error <= 1e-5;
}

ExperimentPlan reference_two_room_plan() {
  ExperimentPlan plan;
  plan.name = "two_room_reference";
  plan.n_tasks = 4;
  plan.hyper_grid = {{0.2, 0.1}};  // beta = 5, learning rate 0.1
  plan.seeds = {0, 1, 2, 3};
  plan.budget_steps_per_task = 150000;
  plan.eval_every = 1000;
  plan.eval_episodes = 10;
  plan.workers = {1, 20, StalenessMode::serialized};
  plan.rollout_len = 10;
  plan.rollouts_per_distill = 10;
  plan.pseudocount = 1.0;
  return plan;
}

std::vector<RunArtifacts> g_transfer_artifacts;  // criterion 4 reuses criterion 3's training

// 3. two-room transfer: distral beats independent soft-Q on AUC
bool criterion_two_room_transfer(std::string& detail) {
  ExperimentPlan plan = reference_two_room_plan();
  AlgorithmEntry distral_entry;
  distral_entry.spec = make_algorithm_spec(AlgorithmName::tabular_distral, 5.0);
  distral_entry.label = "tabular_distral";
  AlgorithmEntry baseline_entry = distral_entry;
  baseline_entry.label = "soft_q_independent";
  baseline_entry.distill = false;

  g_transfer_artifacts.clear();
  int wins = 0;
  double mean_distral = 0.0, mean_baseline = 0.0;
  for (uint64_t seed : plan.seeds) {
    RunArtifacts artifacts;
    RunRecord rd = run_one(plan, distral_entry, 0, seed, &artifacts);
    RunRecord rb = run_one(plan, baseline_entry, 0, seed);
    if (!(std::isfinite(rd.auc) && std::isfinite(rb.auc))) return false;
    mean_distral += rd.auc / plan.seeds.size();
    mean_baseline += rb.auc / plan.seeds.size();
    if (rd.auc > rb.auc) ++wins;
    g_transfer_artifacts.push_back(std::move(artifacts));
  }
  std::snprintf(detail_buf, sizeof(detail_buf), "mean AUC distral %.3f vs baseline %.3f, per-seed wins %d/4",
                mean_distral, mean_baseline, wins);
  detail = detail_buf;
  return mean_distral > mean_baseline && wins >= 3;
}

// 4. distilled policy preserves the direction of travel in the corridor
bool criterion_corridor_direction(std::string& detail) {
  if (g_transfer_artifacts.empty()) {
    detail = "criterion 3 training unavailable";
    return false;
  }
  ExperimentPlan plan = reference_two_room_plan();
  double worst_ud = 0.0;
  bool all_continuation = true;
  for (size_t k = 0; k < g_transfer_artifacts.size(); ++k) {
    const auto& artifacts = g_transfer_artifacts[k];
    if (!artifacts.distilled) return false;
    auto rows = corridor_policy_probs(*artifacts.distilled, artifacts.tasks.front());
    for (const Cell& cell : artifacts.tasks.front().layout.corridor_cells)
      for (int prev : {static_cast<int>(kLeft), static_cast<int>(kRight)}) {
        int argmax = -1;
        double best = -1.0;
        for (const auto& r : rows)
          if (r.cell == cell && r.prev_action == prev) {
            if (r.prob > best) {
              best = r.prob;
              argmax = r.action;
            }
            if (r.action == kUp || r.action == kDown) worst_ud = std::max(worst_ud, r.prob);
          }
        if (argmax != prev) all_continuation = false;
      }
  }
  std::snprintf(detail_buf, sizeof(detail_buf),
                "4 seeds x 3 cells x {left,right}: continuation argmax %s, max up/down prob %.4f (< 0.15)",
                all_continuation ? "everywhere" : "VIOLATED", worst_ud);
  detail = detail_buf;
  return all_continuation && worst_ud < 0.15;
}

// test-local entropy-regularized policy-gradient reference (no KL terms)
void reference_entropy_pg(const Trajectory& traj, const Table& logits, const ValueTable& v, double beta,
                          double gamma, Table& d_logits) {
  const int A = logits.cols();
  for (const auto& seg : traj.segments) {
    if (seg.steps.empty()) continue;
    const size_t L = seg.steps.size();
    std::vector<std::vector<double>> pis(L);
    std::vector<double> rreg(L);
    for (size_t u = 0; u < L; ++u) {
      const auto& st = seg.steps[u];
      double best = -1e300;
      for (int a = 0; a < A; ++a) best = std::max(best, logits(st.state, a));
      std::vector<double> pi(A);
      double sum = 0.0;
      for (int a = 0; a < A; ++a) {
        pi[a] = std::exp(logits(st.state, a) - best);
        sum += pi[a];
      }
      for (double& p : pi) p /= sum;
      rreg[u] = st.reward - std::log(std::max(pi[st.action], kLogProbFloor)) / beta;
      pis[u] = std::move(pi);
    }
    double g = seg.terminated ? 0.0 : v[seg.end_state];
    std::vector<double> returns(L);
    for (size_t u = L; u-- > 0;) {
      g = rreg[u] + gamma * g;
      returns[u] = g;
    }
    for (size_t u = 0; u < L; ++u) {
      const auto& st = seg.steps[u];
      double coeff = std::pow(gamma, st.t) * (returns[u] - v[st.state]);
      for (int b = 0; b < A; ++b) d_logits(st.state, b) += (((b == st.action) ? 1.0 : 0.0) - pis[u][b]) * coeff;
    }
  }
}

// 5. alpha = 0 reductions and the centroid cancellation of the matching term
bool criterion_reductions(std::string& detail) {
  Rng rng(5005);
  RandomMdpOptions opts;
  opts.n_states = 5;
  opts.n_actions = 3;
  opts.discount = 0.9;
  TabularMdp mdp = random_mdp(rng, opts);
  auto cfg0 = RegularizationConfig::from_alpha_beta(0.0, 2.0);
  double worst_grad = 0.0, worst_dh = 0.0;

  for (Architecture arch : {Architecture::separate, Architecture::two_column, Architecture::shared_only}) {
    JointParams params = random_params(rng, 2, opts.n_states, opts.n_actions, arch, 1.0);
    if (arch == Architecture::two_column)
      for (double& x : params.h.data()) x = rng.uniform(-1.0, 1.0);  // inert under alpha = 0

    TabularMdpEnv env(mdp, 25);
    Rng roll_rng(42);
    PolicyFn fn = [&](int s, std::span<double> out) {
      auto row = policy_row(params, 0, s, cfg0, arch);
      std::copy(row.begin(), row.end(), out.begin());
    };
    Trajectory traj = rollout(env, fn, 60, roll_rng);

    GradientAccumulator g = GradientAccumulator::zeros_like(params);
    PolicyGradOptions opt{arch, true, true, opts.discount};
    task_gradient(traj, 0, params, cfg0, opt, g);
    distilled_gradient(traj, 0, params, cfg0, opt, g);

    const Table& logits = (arch == Architecture::shared_only) ? params.h : params.f[0];
    Table ref(opts.n_states, opts.n_actions);
    reference_entropy_pg(traj, logits, params.v[0], cfg0.beta(), opts.discount, ref);

    const Table& produced = (arch == Architecture::shared_only) ? g.d_h : g.d_f[0];
    worst_grad = std::max(worst_grad, produced.max_abs_diff(ref));
    if (arch != Architecture::shared_only) worst_dh = std::max(worst_dh, g.d_h.max_abs());
  }

  // matching term cancels when pi0 is the per-state mean of task policies
  auto cfg1 = RegularizationConfig::from_alpha_beta(1.0, 5.0);
  const int n_tasks = 3;
  JointParams params = random_params(rng, n_tasks, opts.n_states, opts.n_actions, Architecture::separate, 1.5);
  std::vector<TabularPolicy> pis;
  for (int i = 0; i < n_tasks; ++i) pis.push_back(policy_table(params, i, cfg1, Architecture::separate));
  for (int s = 0; s < opts.n_states; ++s)
    for (int a = 0; a < opts.n_actions; ++a) {
      double mean = 0.0;
      for (int i = 0; i < n_tasks; ++i) mean += pis[i].probs(s, a);
      params.h(s, a) = std::log(mean / n_tasks);
    }
  TabularMdpEnv env(mdp, 25);
  Rng roll_rng(43);
  PolicyFn fn = [&](int s, std::span<double> out) {
    auto row = policy_row(params, 0, s, cfg1, Architecture::separate);
    std::copy(row.begin(), row.end(), out.begin());
  };
  Trajectory shared_traj = rollout(env, fn, 50, roll_rng);
  GradientAccumulator g = GradientAccumulator::zeros_like(params);
  PolicyGradOptions opt{Architecture::separate, true, true, opts.discount};
  double match_norm = 0.0;
  for (int i = 0; i < n_tasks; ++i) distilled_gradient(shared_traj, i, params, cfg1, opt, g);
  match_norm = g.d_h.max_abs();

  std::snprintf(detail_buf, sizeof(detail_buf),
                "alpha=0 grad diff %.2e (tol 1e-12), distilled grad %.2e (tol 0), centroid matching term %.2e (tol 1e-9)",
                worst_grad, worst_dh, match_norm);
  detail = detail_buf;
  return worst_grad <= 1e-12 && worst_dh == 0.0 && match_norm <= 1e-9;
}

// 6. all seven algorithms train end to end in both execution modes
bool criterion_liveness(std::string& detail) {
  ExperimentPlan plan;
  plan.n_tasks = 2;
  plan.hyper_grid = {{0.2, 0.05}};
  plan.seeds = {0};
  plan.budget_steps_per_task = 100000;
  plan.eval_every = 1000;
  plan.eval_episodes = 10;
  plan.rollout_len = 10;
  plan.rollouts_per_distill = 10;

  int runs = 0;
  for (auto name : all_joint_algorithms()) {
    for (auto mode : {StalenessMode::serialized, StalenessMode::lock_free}) {
      plan.workers = {mode == StalenessMode::serialized ? 1 : 4, 20, mode};
      AlgorithmEntry e;
      e.spec = make_algorithm_spec(name, 5.0);
      e.label = to_string(name);
      RunRecord r = run_one(plan, e, 0, 0);  // run_one validates policy rows at every eval point
      if (!r.complete) return false;
      for (const auto& task : r.tasks) {
        if (task.points.size() != 100) return false;
        for (const auto& pt : task.points)
          if (!std::isfinite(pt.eval_return) || !std::isfinite(pt.distilled_eval_return)) return false;
      }
      ++runs;
    }
  }
  std::snprintf(detail_buf, sizeof(detail_buf),
                "%d runs (7 algorithms x serialized/4-worker lock-free), finite returns and normalized policies at every eval point",
                runs);
  detail = detail_buf;
  return runs == 14;
}

// 7. the distillation estimator reproduces the smoothed mixture exactly
bool criterion_distill_estimator(std::string& detail) {
  Rng rng(7007);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    int S = 1 + rng.uniform_int(6);
    int A = 2 + rng.uniform_int(4);
    int n_tasks = 1 + rng.uniform_int(3);
    double pc = rng.uniform() < 0.3 ? 0.0 : rng.uniform(0.0, 2.0);
    std::vector<VisitationCounts> counts(n_tasks, VisitationCounts(S, A));
    for (auto& c : counts)
      for (double& x : c.counts.data()) x = rng.uniform() < 0.3 ? 0.0 : rng.uniform(0.0, 10.0);

    auto out = distill_ml(counts, pc);
    for (int s = 0; s < S; ++s) {
      double denom = 0.0;
      for (int a = 0; a < A; ++a) {
        double total = pc;
        for (const auto& c : counts) total += c.counts(s, a);
        denom += total;
      }
      for (int a = 0; a < A; ++a) {
        double total = pc;
        for (const auto& c : counts) total += c.counts(s, a);
        double expect = denom == 0.0 ? 1.0 / A : total / denom;
        worst = std::max(worst, std::fabs(out.pi0.probs(s, a) - expect));
      }
    }
  }

  // all-zero counts with pseudocount 1: exactly uniform
  std::vector<VisitationCounts> zero(3, VisitationCounts(4, 5));
  auto uniform = distill_ml(zero, 1.0);
  for (int s = 0; s < 4; ++s)
    for (int a = 0; a < 5; ++a) worst = std::max(worst, std::fabs(uniform.pi0.probs(s, a) - 0.2));

  std::snprintf(detail_buf, sizeof(detail_buf), "closed-form mixture max err %.2e over 100 random count sets (tol 1e-12)",
                worst);
  detail = detail_buf;
  return worst <= 1e-12;
}

// 8. normalization, log-normalizer and occupancy-mass property sweep
bool criterion_property_sweep(std::string& detail) {
  Rng rng(8008);
  double worst_row = 0.0, worst_lognorm = 0.0, worst_mass = 0.0;

  for (int draw = 0; draw < 10000; ++draw) {
    int A = 2 + rng.uniform_int(5);
    std::vector<double> h(A), f(A), q(A);
    for (int a = 0; a < A; ++a) {
      h[a] = rng.uniform(-4.0, 4.0);
      f[a] = rng.uniform(-4.0, 4.0);
      q[a] = rng.uniform(-3.0, 3.0);
    }
    double u = rng.uniform();
    double alpha = u < 0.2 ? 0.0 : (u < 0.4 ? 1.0 : rng.uniform(0.05, 0.95));
    auto cfg = RegularizationConfig::from_alpha_beta(alpha, rng.uniform(0.3, 8.0));

    auto pi0 = distilled_policy_row(h);
    auto pi = task_policy_row(h, f, cfg);
    double s0 = 0.0, si = 0.0;
    for (int a = 0; a < A; ++a) {
      s0 += pi0[a];
      si += pi[a];
    }
    worst_row = std::max({worst_row, std::fabs(s0 - 1.0), std::fabs(si - 1.0)});

    // Eq-2 identity: the softened value is the exact log normalizer of the
    // Boltzmann row over the prior
    double v = soft_state_value(q, pi0, cfg);
    double z = 0.0;
    for (int a = 0; a < A; ++a) z += std::pow(pi0[a], alpha) * std::exp(cfg.beta() * (q[a] - v));
    worst_lognorm = std::max(worst_lognorm, std::fabs(z - 1.0));

    // Eq-7 identity for the parameterized advantages
    auto badv = soft_advantage_row(h, f, cfg);
    double z2 = 0.0;
    for (int a = 0; a < A; ++a) z2 += std::pow(pi0[a], alpha) * std::exp(badv[a]);
    worst_lognorm = std::max(worst_lognorm, std::fabs(z2 - 1.0));
  }

  for (int draw = 0; draw < 10000; ++draw) {
    RandomMdpOptions opts;
    opts.n_states = 2 + rng.uniform_int(4);
    opts.n_actions = 2 + rng.uniform_int(2);
    opts.discount = rng.uniform(0.5, 0.97);
    TabularMdp mdp = random_mdp(rng, opts);
    TabularPolicy pi = random_policy(rng, opts.n_states, opts.n_actions);
    auto start = default_start_distribution(mdp);
    auto occ = exact_occupancy(mdp, pi, start);
    worst_mass = std::max(worst_mass, std::fabs(occ.total_mass() - 1.0 / (1.0 - opts.discount)));
  }

  std::snprintf(detail_buf, sizeof(detail_buf),
                "10^4 draws: row-sum err %.2e (tol 1e-9), log-normalizer err %.2e (tol 1e-9), occupancy mass err %.2e (tol 1e-9)",
                worst_row, worst_lognorm, worst_mass);
  detail = detail_buf;
  return worst_row <= 1e-9 && worst_lognorm <= 1e-9 && worst_mass <= 1e-9;
}

}  // namespace

int main() {
  std::vector<Criterion> criteria = {
      {1, "soft-Bellman oracle equivalence", 5.0, criterion_soft_bellman},
      {2, "gradient correctness vs finite differences", 30.0, criterion_gradients},
      {3, "two-room transfer beats independent soft-Q", 600.0, criterion_two_room_transfer},
      {4, "distilled corridor policy preserves direction", 600.0, criterion_corridor_direction},
      {5, "alpha=0 reduction identities and centroid matching term", 60.0, criterion_reductions},
      {6, "seven-algorithm training matrix liveness", 900.0, criterion_liveness},
      {7, "distillation estimator closed form", 30.0, criterion_distill_estimator},
      {8, "normalization and occupancy property sweep", 10.0, criterion_property_sweep},
  };

  int failures = 0;
  for (auto& c : criteria) {
    auto t0 = std::chrono::steady_clock::now();
    bool pass = false;
    std::string detail;
    try {
      pass = c.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.time_limit_s) {
      pass = false;
      detail += " [over time budget]";
    }
    std::printf("[%s] %d. %s (%.1fs, limit %.0fs) - %s\n", pass ? "PASS" : "FAIL", c.id, c.name.c_str(), secs,
                c.time_limit_s, detail.c_str());
    if (!pass) ++failures;
  }
  std::printf("ACCEPTANCE: %zu/%zu criteria passed\n", criteria.size() - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
