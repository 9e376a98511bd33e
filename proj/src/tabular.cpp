#include "distral/tabular.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace distral {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double annealed(double start, double final, double frac) {
  if (final < 0.0) return start;
  return start + (final - start) * std::clamp(frac, 0.0, 1.0);
}
}  // namespace

void TabularPolicy::validate(double tol) const {
  for (int s = 0; s < probs.rows(); ++s) {
    double sum = 0.0;
    for (double p : probs.row(s)) {
      if (!(p >= 0.0)) throw std::invalid_argument("TabularPolicy: negative or NaN probability");
      sum += p;
    }
    if (std::fabs(sum - 1.0) > tol) throw std::invalid_argument("TabularPolicy: row does not sum to 1");
  }
}

double soft_state_value(std::span<const double> q_row, std::span<const double> pi0_row,
                        const RegularizationConfig& cfg) {
  if (q_row.size() != pi0_row.size() || q_row.empty())
    throw std::invalid_argument("soft_state_value: shape mismatch");
  const double alpha = cfg.alpha();
  const double beta = cfg.beta();

  auto term = [&](size_t a) -> double {
    if (alpha > 0.0 && pi0_row[a] == 0.0) return kNegInf;  // zero prior weight drops the action
    double t = beta * q_row[a];
    if (alpha > 0.0) t += alpha * std::log(std::max(pi0_row[a], kLogProbFloor));
    return t;
  };

  double best = kNegInf;
  for (size_t a = 0; a < q_row.size(); ++a) {
    if (!std::isfinite(q_row[a])) throw std::invalid_argument("soft_state_value: non-finite q entry");
    if (!(pi0_row[a] >= 0.0)) throw std::invalid_argument("soft_state_value: invalid prior probability");
    best = std::max(best, term(a));
  }
  if (best == kNegInf) throw std::domain_error("soft_state_value: every action has zero prior weight");

  double sum = 0.0;
  for (size_t a = 0; a < q_row.size(); ++a) sum += std::exp(term(a) - best);
  return (best + std::log(sum)) / beta;
}

ValueTable state_values(const QTable& q, const TabularPolicy& pi0, const RegularizationConfig& cfg) {
  ValueTable v(q.rows());
  for (int s = 0; s < q.rows(); ++s) v[s] = soft_state_value(q.row(s), pi0.row(s), cfg);
  return v;
}

BackupResult soft_bellman_backup(const TabularMdp& mdp, const QTable& q, const TabularPolicy& pi0,
                                 const RegularizationConfig& cfg) {
  if (q.rows() != mdp.n_states() || q.cols() != mdp.n_actions() || !pi0.probs.same_shape(q))
    throw std::invalid_argument("soft_bellman_backup: shape mismatch");
  BackupResult out;
  out.v = state_values(q, pi0, cfg);
  for (int s = 0; s < mdp.n_states(); ++s)
    if (mdp.is_terminal(s)) out.v[s] = 0.0;
  out.q = QTable(mdp.n_states(), mdp.n_actions());
  const double gamma = mdp.discount();
  for (int s = 0; s < mdp.n_states(); ++s)
    for (int a = 0; a < mdp.n_actions(); ++a)
      out.q(s, a) = mdp.reward(s, a) + gamma * mdp.expected_next_value(s, a, out.v);
  return out;
}

ValueIterationResult soft_value_iteration(const TabularMdp& mdp, const TabularPolicy& pi0,
                                          const RegularizationConfig& cfg, double tol, int max_iters,
                                          const QTable* q_init) {
  QTable q = q_init ? *q_init : QTable(mdp.n_states(), mdp.n_actions());
  double residual = std::numeric_limits<double>::infinity();
  for (int iter = 1; iter <= max_iters; ++iter) {
    BackupResult b = soft_bellman_backup(mdp, q, pi0, cfg);
    residual = b.q.max_abs_diff(q);
    q = std::move(b.q);
    if (residual <= tol) {
      ValueTable v = state_values(q, pi0, cfg);
      for (int s = 0; s < mdp.n_states(); ++s)
        if (mdp.is_terminal(s)) v[s] = 0.0;
      return {std::move(q), std::move(v), iter, residual};
    }
  }
  char msg[128];
  std::snprintf(msg, sizeof(msg), "soft_value_iteration: no convergence in %d iters (residual %.3e)", max_iters,
                residual);
  throw std::runtime_error(msg);
}

namespace {

/// Boltzmann row for the given value of V(s); assumes v is Eq-2 consistent.
void boltzmann_row(std::span<const double> q_row, std::span<const double> pi0_row, double v,
                   const RegularizationConfig& cfg, std::span<double> out) {
  const double alpha = cfg.alpha();
  const double beta = cfg.beta();
  double sum = 0.0;
  for (size_t a = 0; a < q_row.size(); ++a) {
    double p;
    if (alpha > 0.0 && pi0_row[a] == 0.0) {
      p = 0.0;
    } else {
      double logp = beta * (q_row[a] - v);
      if (alpha > 0.0) logp += alpha * std::log(std::max(pi0_row[a], kLogProbFloor));
      p = std::exp(logp);
    }
    out[a] = p;
    sum += p;
  }
  if (!(std::fabs(sum - 1.0) <= 1e-3))
    throw std::invalid_argument("boltzmann_policy: row fails to normalize; (q, v) input inconsistent");
  for (size_t a = 0; a < q_row.size(); ++a) out[a] /= sum;
}

}  // namespace

TabularPolicy boltzmann_policy(const QTable& q, const ValueTable& v, const TabularPolicy& pi0,
                               const RegularizationConfig& cfg, double consistency_tol) {
  if (static_cast<int>(v.size()) != q.rows() || !pi0.probs.same_shape(q))
    throw std::invalid_argument("boltzmann_policy: shape mismatch");
  TabularPolicy pi;
  pi.probs = Table(q.rows(), q.cols());
  for (int s = 0; s < q.rows(); ++s) {
    double vs = soft_state_value(q.row(s), pi0.row(s), cfg);
    if (std::fabs(vs - v[s]) > consistency_tol)
      throw std::invalid_argument("boltzmann_policy: v is not the softened value of q");
    boltzmann_row(q.row(s), pi0.row(s), v[s], cfg, pi.probs.row(s));
  }
  return pi;
}

TabularPolicy boltzmann_policy_from_q(const QTable& q, const TabularPolicy& pi0, const RegularizationConfig& cfg) {
  TabularPolicy pi;
  pi.probs = Table(q.rows(), q.cols());
  for (int s = 0; s < q.rows(); ++s) {
    double vs = soft_state_value(q.row(s), pi0.row(s), cfg);
    boltzmann_row(q.row(s), pi0.row(s), vs, cfg, pi.probs.row(s));
  }
  return pi;
}

Trajectory soft_q_rollout_update(Env& env, QTable& q, const TabularPolicy& pi0, const RegularizationConfig& cfg,
                                 int rollout_len, double learn_rate, Rng& rng) {
  if (!(learn_rate >= 0.0 && learn_rate <= 1.0))
    throw std::invalid_argument("soft_q_rollout_update: learn_rate must be in [0,1]");
  const double gamma = env.discount();
  Trajectory traj;
  std::vector<double> probs(env.n_actions());
  Trajectory::Segment* seg = nullptr;
  for (int i = 0; i < rollout_len; ++i) {
    if (!env.episode_active()) {
      env.reset(rng);
      seg = nullptr;
    }
    if (!seg) {
      traj.segments.emplace_back();
      seg = &traj.segments.back();
    }
    const int s = env.state();
    const int t = env.episode_step();
    double vs = soft_state_value(q.row(s), pi0.row(s), cfg);
    boltzmann_row(q.row(s), pi0.row(s), vs, cfg, probs);
    const int a = rng.categorical(probs);
    Env::Step st = env.step(a, rng);
    // bootstrapped soft TD target from the already-updated Q; a step cap
    // still bootstraps, only true termination zeroes the tail
    double v_next = st.terminated ? 0.0 : soft_state_value(q.row(st.state), pi0.row(st.state), cfg);
    q(s, a) += learn_rate * (st.reward + gamma * v_next - q(s, a));
    seg->steps.push_back({s, a, st.reward, t});
    seg->end_state = st.state;
    seg->terminated = st.terminated;
    if (st.terminated || st.truncated) seg = nullptr;
  }
  return traj;
}

void accumulate_visitations(VisitationCounts& counts, const Trajectory& traj, double gamma) {
  for (const auto& seg : traj.segments) {
    if (seg.steps.empty()) continue;
    double w = std::pow(gamma, seg.steps.front().t);
    for (const auto& st : seg.steps) {
      counts.counts(st.state, st.action) += w;
      w *= gamma;
    }
  }
}

DistillResult distill_ml(std::span<const VisitationCounts> counts_per_task, double pseudocount) {
  if (counts_per_task.empty()) throw std::invalid_argument("distill_ml: no count tables");
  if (pseudocount < 0.0) throw std::invalid_argument("distill_ml: pseudocount must be nonnegative");
  const int S = counts_per_task[0].counts.rows();
  const int A = counts_per_task[0].counts.cols();
  for (const auto& c : counts_per_task)
    if (c.counts.rows() != S || c.counts.cols() != A) throw std::invalid_argument("distill_ml: shape mismatch");

  DistillResult out;
  out.pi0.probs = Table(S, A);
  std::vector<double> pooled(A);
  for (int s = 0; s < S; ++s) {
    double denom = 0.0;
    for (int a = 0; a < A; ++a) {
      double total = pseudocount;
      for (const auto& c : counts_per_task) total += c.counts(s, a);
      pooled[a] = total;
      denom += total;
    }
    if (denom == 0.0) {
      for (int a = 0; a < A; ++a) out.pi0.probs(s, a) = 1.0 / A;
      out.flagged_states.push_back(s);
    } else {
      for (int a = 0; a < A; ++a) out.pi0.probs(s, a) = pooled[a] / denom;
    }
  }
  return out;
}

PolicyFn policy_fn(const TabularPolicy& p) {
  return [&p](int s, std::span<double> out) {
    auto row = p.probs.row(s);
    std::copy(row.begin(), row.end(), out.begin());
  };
}

double evaluate_policy(const Env& proto, const TabularPolicy& policy, int episodes, Rng& rng) {
  auto env = proto.clone();
  double total = 0.0;
  for (int e = 0; e < episodes; ++e) total += run_episode(*env, policy_fn(policy), rng);
  return total / episodes;
}

AlternateResult alternate_optimize(std::span<Env* const> tasks, const RegularizationConfig& cfg,
                                   const TabularSchedule& schedule, Rng& rng) {
  if (tasks.empty()) throw std::invalid_argument("alternate_optimize: need at least one task");
  const int n = static_cast<int>(tasks.size());
  const int S = tasks[0]->n_states();
  const int A = tasks[0]->n_actions();
  for (Env* t : tasks)
    if (t->n_states() != S || t->n_actions() != A)
      throw std::invalid_argument("alternate_optimize: tasks must share the state and action space");

  AlternateResult out;
  out.pi0 = TabularPolicy::uniform(S, A);
  out.q_tables.assign(n, QTable(S, A));
  out.record.tasks.resize(n);
  for (int i = 0; i < n; ++i) out.record.tasks[i].task_id = i;

  std::vector<VisitationCounts> counts(n, VisitationCounts(S, A));
  std::vector<Rng> train_rngs, eval_rngs;
  for (int i = 0; i < n; ++i) train_rngs.push_back(rng.split(2 * i));
  for (int i = 0; i < n; ++i) eval_rngs.push_back(rng.split(2 * i + 1));

  std::vector<long long> steps_done(n, 0);
  std::vector<long long> next_eval(n, schedule.eval_every);
  // trailing window of finished training episodes per task
  std::vector<std::vector<double>> recent(n);
  std::vector<double> episode_acc(n, 0.0);

  auto record_eval = [&](int i) {
    EvalPoint pt;
    pt.env_steps = next_eval[i];
    if (!recent[i].empty()) {
      double sum = 0.0;
      for (double r : recent[i]) sum += r;
      pt.train_return = sum / recent[i].size();
    }
    TabularPolicy pi_i = boltzmann_policy_from_q(out.q_tables[i], out.pi0, cfg);
    pt.eval_return = evaluate_policy(*tasks[i], pi_i, schedule.eval_episodes, eval_rngs[i]);
    pt.distilled_eval_return = evaluate_policy(*tasks[i], out.pi0, schedule.eval_episodes, eval_rngs[i]);
    out.record.tasks[i].points.push_back(pt);
    next_eval[i] += schedule.eval_every;
  };

  bool work_left = true;
  while (work_left) {
    work_left = false;
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < schedule.rollouts_per_distill; ++k) {
        if (steps_done[i] >= schedule.steps_per_task) break;
        work_left = true;
        double frac = static_cast<double>(steps_done[i]) / schedule.steps_per_task;
        double lr = annealed(schedule.learn_rate, schedule.learn_rate_final, frac);
        Trajectory traj =
            soft_q_rollout_update(*tasks[i], out.q_tables[i], out.pi0, cfg, schedule.rollout_len, lr, train_rngs[i]);
        accumulate_visitations(counts[i], traj, tasks[i]->discount());
        for (size_t g = 0; g < traj.segments.size(); ++g) {
          const auto& seg = traj.segments[g];
          for (const auto& st : seg.steps) episode_acc[i] += st.reward;
          bool closed = (g + 1 < traj.segments.size()) || !tasks[i]->episode_active();
          if (closed) {
            recent[i].push_back(episode_acc[i]);
            if (recent[i].size() > 10) recent[i].erase(recent[i].begin());
            episode_acc[i] = 0.0;
          }
        }
        steps_done[i] += static_cast<long long>(traj.n_steps());
        while (next_eval[i] <= steps_done[i] && next_eval[i] <= schedule.steps_per_task) record_eval(i);
      }
    }
    if (schedule.distill && work_left) {
      if (schedule.count_decay != 1.0)
        for (auto& c : counts) c.scale(schedule.count_decay);
      out.pi0 = distill_ml(counts, schedule.pseudocount).pi0;
    }
  }
  return out;
}

}  // namespace distral
