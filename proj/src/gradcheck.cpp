#include "distral/gradcheck.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "distral/oracles.hpp"

namespace distral {

TabularMdp random_mdp(Rng& rng, const RandomMdpOptions& opts) {
  TabularMdp mdp(opts.n_states, opts.n_actions, opts.discount);
  for (int s = 0; s < opts.n_states; ++s)
    for (int a = 0; a < opts.n_actions; ++a) {
      std::vector<double> w(opts.n_states);
      double total = 0.0;
      for (int t = 0; t < opts.n_states; ++t) {
        w[t] = rng.uniform(0.05, 1.0);
        total += w[t];
      }
      std::vector<Transition> row;
      double acc = 0.0;
      for (int t = 0; t < opts.n_states - 1; ++t) {
        double p = w[t] / total;
        row.push_back({t, p});
        acc += p;
      }
      row.push_back({opts.n_states - 1, 1.0 - acc});  // exact row sum
      mdp.set_transition_row(s, a, std::move(row));
      mdp.set_reward(s, a, rng.uniform(-opts.reward_scale, opts.reward_scale));
    }
  mdp.validate();
  return mdp;
}

JointParams random_params(Rng& rng, int n_tasks, int n_states, int n_actions, Architecture arch, double scale) {
  JointParams p = JointParams::zeros(n_tasks, n_states, n_actions, arch);
  for (double& x : p.h.data()) x = rng.uniform(-scale, scale);
  for (auto& f : p.f)
    for (double& x : f.data()) x = rng.uniform(-scale, scale);
  for (auto& v : p.v)
    for (double& x : v) x = rng.uniform(-scale, scale);
  return p;
}

namespace {

std::string param_name(const char* prefix, int task, int s, int a) {
  char buf[48];
  if (task >= 0)
    std::snprintf(buf, sizeof(buf), "%s%d[%d,%d]", prefix, task, s, a);
  else
    std::snprintf(buf, sizeof(buf), "%s[%d,%d]", prefix, s, a);
  return buf;
}

}  // namespace

GradCheckSummary run_gradient_check(int n_instances, int n_tasks, int points_per_instance, uint64_t seed,
                                    double eps, Architecture arch) {
  if (arch == Architecture::shared_only)
    throw std::invalid_argument("run_gradient_check: shared_only has no distilled objective coupling to check");
  GradCheckSummary summary;
  Rng rng(seed);

  for (int inst = 0; inst < n_instances; ++inst) {
    RandomMdpOptions mopts;
    mopts.n_states = 2 + rng.uniform_int(4);   // 2..5
    mopts.n_actions = 2 + rng.uniform_int(2);  // 2..3
    std::vector<TabularMdp> mdps;
    for (int i = 0; i < n_tasks; ++i) mdps.push_back(random_mdp(rng, mopts));
    std::vector<double> start = default_start_distribution(mdps[0]);

    // cover the pure-entropy, pure-KL and mixed regimes
    double u = rng.uniform();
    double alpha = u < 0.2 ? 0.0 : (u < 0.4 ? 1.0 : rng.uniform(0.1, 0.9));
    double beta = rng.uniform(0.5, 5.0);
    RegularizationConfig cfg = RegularizationConfig::from_alpha_beta(alpha, beta);

    for (int pt = 0; pt < points_per_instance; ++pt) {
      JointParams params = random_params(rng, n_tasks, mopts.n_states, mopts.n_actions, arch, 1.0);

      auto objective = [&]() {
        TabularPolicy pi0 = distilled_table(params);
        std::vector<TabularPolicy> pis;
        for (int i = 0; i < n_tasks; ++i) pis.push_back(policy_table(params, i, cfg, arch));
        return exact_objective(mdps, pi0, pis, cfg, start);
      };

      auto fd = [&](double& x) {
        double saved = x;
        x = saved + eps;
        double up = objective();
        x = saved - eps;
        double down = objective();
        x = saved;
        return (up - down) / (2.0 * eps);
      };

      struct Block {
        std::string prefix;
        int task;
        Table analytic;
        Table* param;
      };
      std::vector<Block> blocks;
      for (int i = 0; i < n_tasks; ++i)
        blocks.push_back({"f", i, expected_task_gradient(mdps[i], params, i, cfg, start, arch), &params.f[i]});
      blocks.push_back({"h", -1, expected_distilled_gradient(mdps, params, cfg, start, arch), &params.h});

      std::vector<GradCheckRow> point_rows;
      double scale = 0.0;
      for (auto& blk : blocks) {
        for (int s = 0; s < blk.param->rows(); ++s)
          for (int a = 0; a < blk.param->cols(); ++a) {
            GradCheckRow row;
            row.instance = inst;
            row.point = pt;
            row.param = param_name(blk.prefix.c_str(), blk.task, s, a);
            row.analytic = blk.analytic(s, a);
            row.numeric = fd((*blk.param)(s, a));
            point_rows.push_back(row);
            scale = std::max({scale, std::fabs(row.analytic), std::fabs(row.numeric)});
          }
      }
      double denom = std::max(scale, 1e-12);
      for (auto& row : point_rows) {
        row.rel_error = std::fabs(row.analytic - row.numeric) / denom;
        summary.max_rel_error = std::max(summary.max_rel_error, row.rel_error);
        summary.rows.push_back(std::move(row));
      }
    }
  }
  return summary;
}

void write_gradcheck_csv(const std::string& path, const GradCheckSummary& summary) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_gradcheck_csv: cannot open " + path);
  out << "instance,point,param,analytic,numeric,rel_error\n";
  char buf[128];
  for (const auto& r : summary.rows) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%s,%.17g,%.17g,%.17g\n", r.instance, r.point, r.param.c_str(),
                  r.analytic, r.numeric, r.rel_error);
    out << buf;
  }
}

}  // namespace distral
