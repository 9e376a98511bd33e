#include <cmath>

#include "doctest.h"
#include "distral/gradcheck.hpp"
#include "distral/oracles.hpp"
#include "distral/policy_grad.hpp"
#include "support/testutil.hpp"

using namespace distral;
using namespace distral::testutil;

namespace {

/// Independent entropy-regularized policy-gradient reference (the plain
/// actor-critic family): pi = softmax(f), reward shaped by the entropy term
/// only. Mirrors the contract of task_gradient at alpha = 0.
void a3c_reference_gradient(const Trajectory& traj, const Table& f, const ValueTable& v, double beta, double gamma,
                            Table& d_f, ValueTable& d_v) {
  const int A = f.cols();
  for (const auto& seg : traj.segments) {
    if (seg.steps.empty()) continue;
    const size_t L = seg.steps.size();
    std::vector<std::vector<double>> pis(L);
    std::vector<double> rreg(L);
    for (size_t u = 0; u < L; ++u) {
      const auto& st = seg.steps[u];
      double best = -1e300;
      for (int a = 0; a < A; ++a) best = std::max(best, f(st.state, a));
      std::vector<double> pi(A);
      double sum = 0.0;
      for (int a = 0; a < A; ++a) {
        pi[a] = std::exp(f(st.state, a) - best);
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
      for (int b = 0; b < A; ++b) d_f(st.state, b) += (((b == st.action) ? 1.0 : 0.0) - pis[u][b]) * coeff;
      d_v[st.state] += returns[u] - v[st.state];
    }
  }
}

Trajectory sample_trajectory(const TabularMdp& mdp, const JointParams& params, const RegularizationConfig& cfg,
                             Architecture arch, int task, int steps, uint64_t seed) {
  TabularMdpEnv env(mdp, 25);
  Rng rng(seed);
  PolicyFn fn = [&](int s, std::span<double> out) {
    auto row = policy_row(params, task, s, cfg, arch);
    std::copy(row.begin(), row.end(), out.begin());
  };
  return rollout(env, fn, steps, rng);
}

}  // namespace

TEST_CASE("distilled_policy softmax") {
  SUBCASE("zero logits are uniform") {
    double h[] = {0.0, 0.0, 0.0};
    auto p = distilled_policy_row(h);
    for (double x : p) CHECK(x == doctest::Approx(1.0 / 3).epsilon(1e-15));
  }
  SUBCASE("shift invariance") {
    Rng rng(1);
    for (int t = 0; t < 50; ++t) {
      std::vector<double> h(4), shifted(4);
      double c = rng.uniform(-5.0, 5.0);
      for (int a = 0; a < 4; ++a) {
        h[a] = rng.uniform(-2.0, 2.0);
        shifted[a] = h[a] + c;
      }
      auto p = distilled_policy_row(h);
      auto q = distilled_policy_row(shifted);
      for (int a = 0; a < 4; ++a) CHECK(p[a] == doctest::Approx(q[a]).epsilon(1e-13));
    }
  }
  SUBCASE("two-logit closed form") {
    double h[] = {1.0, 0.0};
    auto p = distilled_policy_row(h);
    double e = std::exp(1.0);
    CHECK(p[0] == doctest::Approx(e / (e + 1)).epsilon(1e-14));
    CHECK(p[1] == doctest::Approx(1 / (e + 1)).epsilon(1e-14));
  }
  SUBCASE("rows sum to one over random draws") {
    Rng rng(2);
    for (int t = 0; t < 1000; ++t) {
      std::vector<double> h(5);
      for (double& x : h) x = rng.uniform(-30.0, 30.0);
      auto p = distilled_policy_row(h);
      double sum = 0.0;
      for (double x : p) sum += x;
      CHECK(std::fabs(sum - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("task_policy two-column composition") {
  auto cfg_half = RegularizationConfig::from_alpha_beta(0.5, 3.0);

  SUBCASE("alpha=0 ignores the distilled column") {
    auto cfg = RegularizationConfig::from_alpha_beta(0.0, 3.0);
    Rng rng(3);
    std::vector<double> h(4), f(4);
    for (int a = 0; a < 4; ++a) {
      h[a] = rng.uniform(-3.0, 3.0);
      f[a] = rng.uniform(-3.0, 3.0);
    }
    auto p = task_policy_row(h, f, cfg);
    auto q = distilled_policy_row(f);
    for (int a = 0; a < 4; ++a) CHECK(p[a] == doctest::Approx(q[a]).epsilon(1e-14));
  }

  SUBCASE("constant f with alpha=1 returns the distilled policy exactly") {
    auto cfg = RegularizationConfig::from_alpha_beta(1.0, 2.0);
    Rng rng(4);
    std::vector<double> h(4), f(4, 0.37);
    for (double& x : h) x = rng.uniform(-2.0, 2.0);
    auto p = task_policy_row(h, f, cfg);
    auto q = distilled_policy_row(h);
    for (int a = 0; a < 4; ++a) CHECK(std::fabs(p[a] - q[a]) <= 1e-12);
  }

  SUBCASE("matches pi0^alpha * exp(beta advantages) elementwise") {
    Rng rng(5);
    for (int t = 0; t < 200; ++t) {
      std::vector<double> h(3), f(3);
      for (int a = 0; a < 3; ++a) {
        h[a] = rng.uniform(-2.0, 2.0);
        f[a] = rng.uniform(-2.0, 2.0);
      }
      auto pi = task_policy_row(h, f, cfg_half);
      auto pi0 = distilled_policy_row(h);
      auto badv = soft_advantage_row(h, f, cfg_half);
      for (int a = 0; a < 3; ++a) {
        double expect = std::pow(pi0[a], 0.5) * std::exp(badv[a]);
        CHECK(std::fabs(pi[a] - expect) <= 1e-12);
      }
    }
  }
}

TEST_CASE("soft_advantage") {
  SUBCASE("zero f with uniform distilled policy and alpha=1 vanishes") {
    auto cfg = RegularizationConfig::from_alpha_beta(1.0, 5.0);
    std::vector<double> h(4, 0.0), f(4, 0.0);
    auto badv = soft_advantage_row(h, f, cfg);
    for (double x : badv) CHECK(x == doctest::Approx(0.0).epsilon(1e-15));
  }

  SUBCASE("log-normalizer identity holds for random inputs") {
    Rng rng(6);
    for (int t = 0; t < 500; ++t) {
      int A = 2 + rng.uniform_int(4);
      std::vector<double> h(A), f(A);
      for (int a = 0; a < A; ++a) {
        h[a] = rng.uniform(-3.0, 3.0);
        f[a] = rng.uniform(-3.0, 3.0);
      }
      auto cfg = RegularizationConfig::from_alpha_beta(rng.uniform(), rng.uniform(0.3, 6.0));
      auto badv = soft_advantage_row(h, f, cfg);
      auto pi0 = distilled_policy_row(h);
      double sum = 0.0;
      for (int a = 0; a < A; ++a) sum += std::pow(pi0[a], cfg.alpha()) * std::exp(badv[a]);
      CHECK(std::fabs(sum - 1.0) <= 1e-12);
    }
  }

  SUBCASE("matches an extended-precision oracle") {
    auto cfg = RegularizationConfig::from_alpha_beta(0.5, 5.0);
    std::vector<double> h = {0.4, -1.2, 0.9};
    std::vector<double> f = {-0.3, 0.8, 0.1};
    auto badv = soft_advantage_row(h, f, cfg);

    long double z0 = 0.0L;
    for (double x : h) z0 += std::exp(static_cast<long double>(x));
    long double lse = 0.0L;
    for (int a = 0; a < 3; ++a) {
      long double pi0 = std::exp(static_cast<long double>(h[a])) / z0;
      lse += std::pow(pi0, 0.5L) * std::exp(static_cast<long double>(f[a]));
    }
    lse = std::log(lse);
    for (int a = 0; a < 3; ++a) CHECK(std::fabs(badv[a] - static_cast<double>(f[a] - lse)) <= 1e-12);
  }
}

TEST_CASE("regularized_reward") {
  SUBCASE("alpha=1 with matching policies returns the raw reward") {
    auto cfg = RegularizationConfig::from_alpha_beta(1.0, 5.0);
    CHECK(regularized_reward(0.7, 0.3, 0.3, cfg) == doctest::Approx(0.7).epsilon(1e-15));
  }
  SUBCASE("alpha=0 is the pure entropy bonus") {
    auto cfg = RegularizationConfig::from_alpha_beta(0.0, 2.0);
    CHECK(regularized_reward(1.0, 0.9, 0.25, cfg) == doctest::Approx(1.0 - std::log(0.25) / 2.0).epsilon(1e-15));
  }
  SUBCASE("direct arithmetic case") {
    auto cfg = RegularizationConfig::from_alpha_beta(1.0, 2.0);
    double expect = 1.0 + 0.5 * std::log(0.5) - 0.5 * std::log(0.25);
    CHECK(regularized_reward(1.0, 0.5, 0.25, cfg) == doctest::Approx(expect).epsilon(1e-15));
  }
  SUBCASE("zero probabilities are floored, not fatal") {
    auto cfg = RegularizationConfig::from_alpha_beta(0.5, 1.0);
    double r = regularized_reward(0.0, 0.0, 0.0, cfg);
    CHECK(std::isfinite(r));
  }
}

TEST_CASE("task_gradient") {
  auto cfg = RegularizationConfig::from_alpha_beta(0.0, 2.0);

  SUBCASE("zero regularized returns produce a zero gradient") {
    // uniform policy makes the entropy term constant; choose the reward to
    // cancel it exactly
    const int A = 4;
    JointParams params = JointParams::zeros(1, 3, A, Architecture::separate);
    double cancel = std::log(1.0 / A) / cfg.beta();
    Trajectory traj;
    traj.segments.push_back({{{0, 1, cancel, 0}, {1, 2, cancel, 1}, {2, 0, cancel, 2}}, 0, false});
    GradientAccumulator g = GradientAccumulator::zeros_like(params);
    PolicyGradOptions opt{Architecture::separate, true, true, 0.9};
    task_gradient(traj, 0, params, cfg, opt, g);
    CHECK(g.d_f[0].max_abs() <= 1e-15);
    for (double x : g.d_v[0]) CHECK(std::fabs(x) <= 1e-15);
  }

  SUBCASE("a near-deterministic policy has a vanishing score") {
    JointParams params = JointParams::zeros(1, 2, 2, Architecture::separate);
    params.f[0](0, 0) = 60.0;  // prob ~ 1 on action 0
    Trajectory traj;
    traj.segments.push_back({{{0, 0, 1.0, 0}}, 1, false});
    GradientAccumulator g = GradientAccumulator::zeros_like(params);
    PolicyGradOptions opt{Architecture::separate, false, false, 0.9};
    task_gradient(traj, 0, params, cfg, opt, g);
    CHECK(g.d_f[0].max_abs() <= 1e-9);
  }

  SUBCASE("alpha=0 equals the independent actor-critic reference exactly") {
    Rng rng(7);
    RandomMdpOptions opts;
    opts.n_states = 4;
    opts.n_actions = 3;
    opts.discount = 0.9;
    TabularMdp mdp = random_mdp(rng, opts);
    for (Architecture arch : {Architecture::separate, Architecture::two_column}) {
      JointParams params = random_params(rng, 1, 4, 3, arch, 1.0);
      Trajectory traj = sample_trajectory(mdp, params, cfg, arch, 0, 40, 99);

      GradientAccumulator g = GradientAccumulator::zeros_like(params);
      PolicyGradOptions opt{arch, true, true, 0.9};
      task_gradient(traj, 0, params, cfg, opt, g);
      distilled_gradient(traj, 0, params, cfg, opt, g);

      Table ref_df(4, 3);
      ValueTable ref_dv(4, 0.0);
      a3c_reference_gradient(traj, params.f[0], params.v[0], cfg.beta(), 0.9, ref_df, ref_dv);

      CHECK(g.d_f[0].max_abs_diff(ref_df) <= 1e-12);
      for (int s = 0; s < 4; ++s) CHECK(std::fabs(g.d_v[0][s] - ref_dv[s]) <= 1e-12);
      CHECK(g.d_h.max_abs() == 0.0);  // no distilled coupling at alpha=0
    }
  }
}

TEST_CASE("distilled_gradient") {
  SUBCASE("matching term cancels when pi0 is the mean of the task policies") {
    Rng rng(8);
    const int S = 4, A = 3, n_tasks = 3;
    auto cfg = RegularizationConfig::from_alpha_beta(1.0, 5.0);
    JointParams params = random_params(rng, n_tasks, S, A, Architecture::separate, 1.5);

    // set h = log(mean of task policies); softmax recovers the mean exactly
    std::vector<TabularPolicy> pis;
    for (int i = 0; i < n_tasks; ++i) pis.push_back(policy_table(params, i, cfg, Architecture::separate));
    for (int s = 0; s < S; ++s)
      for (int a = 0; a < A; ++a) {
        double mean = 0.0;
        for (int i = 0; i < n_tasks; ++i) mean += pis[i].probs(s, a);
        params.h(s, a) = std::log(mean / n_tasks);
      }

    RandomMdpOptions opts;
    opts.n_states = S;
    opts.n_actions = A;
    opts.discount = 0.9;
    TabularMdp mdp = random_mdp(rng, opts);

    // the pointwise cancellation sums over tasks at the same visited states,
    // so all tasks see one shared trajectory
    Trajectory traj = sample_trajectory(mdp, params, cfg, Architecture::separate, 0, 30, 100);
    GradientAccumulator g = GradientAccumulator::zeros_like(params);
    PolicyGradOptions opt{Architecture::separate, true, true, 0.9};
    for (int i = 0; i < n_tasks; ++i) distilled_gradient(traj, i, params, cfg, opt, g);
    CHECK(g.d_h.max_abs() <= 1e-9);
  }

  SUBCASE("matching term over explicit tables cancels to machine precision") {
    Rng rng(9);
    const int S = 3, A = 4;
    Table pi1(S, A), pi2(S, A), mean(S, A);
    for (int s = 0; s < S; ++s) {
      double s1 = 0.0, s2 = 0.0;
      for (int a = 0; a < A; ++a) {
        pi1(s, a) = rng.uniform(0.1, 1.0);
        s1 += pi1(s, a);
        pi2(s, a) = rng.uniform(0.1, 1.0);
        s2 += pi2(s, a);
      }
      for (int a = 0; a < A; ++a) {
        pi1(s, a) /= s1;
        pi2(s, a) /= s2;
        mean(s, a) = 0.5 * (pi1(s, a) + pi2(s, a));
      }
    }
    Trajectory traj;
    traj.segments.push_back({{{0, 0, 0.0, 0}, {1, 1, 0.0, 1}, {2, 2, 0.0, 2}}, 0, false});
    Table d_h(S, A);
    accumulate_matching_term(traj, pi1, mean, 0.2, 0.9, d_h);
    accumulate_matching_term(traj, pi2, mean, 0.2, 0.9, d_h);
    CHECK(d_h.max_abs() <= 1e-15);
  }
}

TEST_CASE("sgd_apply") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    JointParams p = JointParams::zeros(2, 3, 2, Architecture::two_column);
    p.h(0, 0) = 1.0;
    p.f[1](2, 1) = -2.0;
    JointParams before = p;
    GradientAccumulator g = GradientAccumulator::zeros_like(p);
    sgd_apply(p, g, 0.1);
    CHECK(p.h.max_abs_diff(before.h) == 0.0);
    CHECK(p.f[1].max_abs_diff(before.f[1]) == 0.0);
  }

  SUBCASE("without the coupling coefficient, value tables evolve independently") {
    JointParams p = JointParams::zeros(2, 2, 2, Architecture::two_column);
    p.v[0] = {1.0, 2.0};
    p.v[1] = {-1.0, 0.5};
    GradientAccumulator g = GradientAccumulator::zeros_like(p);
    g.d_v[0] = {0.5, 0.0};
    sgd_apply(p, g, 0.1, 0.0);
    CHECK(p.v[0][0] == doctest::Approx(1.05));
    CHECK(p.v[1][0] == doctest::Approx(-1.0));
  }

  SUBCASE("the value coupling contracts the tables toward each other") {
    // frozen policies: zero gradients, only the pull is applied; the gap
    // shrinks by exactly (1 - step * coeff) per step
    JointParams p = JointParams::zeros(2, 1, 2, Architecture::two_column);
    p.v[0] = {2.0};
    p.v[1] = {-1.0};
    GradientAccumulator g = GradientAccumulator::zeros_like(p);
    const double step = 0.5, coeff = 0.005;
    double gap = 3.0;
    for (int k = 0; k < 10; ++k) {
      sgd_apply(p, g, step, coeff);
      gap *= 1.0 - step * coeff;
      CHECK(p.v[0][0] - p.v[1][0] == doctest::Approx(gap).epsilon(1e-12));
      // the mean is preserved by the pull
      CHECK(p.v[0][0] + p.v[1][0] == doctest::Approx(1.0).epsilon(1e-12));
    }
  }

  SUBCASE("non-finite gradients abort without touching parameters") {
    JointParams p = JointParams::zeros(1, 2, 2, Architecture::separate);
    p.f[0](0, 0) = 3.0;
    GradientAccumulator g = GradientAccumulator::zeros_like(p);
    g.d_f[0](1, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(sgd_apply(p, g, 0.1), std::runtime_error);
    CHECK(p.f[0](0, 0) == 3.0);
  }
}

TEST_CASE("exact-expectation gradients match finite differences") {
  for (Architecture arch : {Architecture::two_column, Architecture::separate}) {
    auto summary = run_gradient_check(3, 2, 3, arch == Architecture::two_column ? 41 : 42, 1e-5, arch);
    CHECK(summary.max_rel_error <= 1e-5);
    CHECK_FALSE(summary.rows.empty());
  }
}
