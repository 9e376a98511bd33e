#include "distral/policy_grad.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace distral {

namespace {

std::vector<double> softmax(std::span<const double> logits) {
  double best = -std::numeric_limits<double>::infinity();
  for (double v : logits) {
    if (!std::isfinite(v)) throw std::invalid_argument("softmax: non-finite logit");
    best = std::max(best, v);
  }
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (size_t a = 0; a < logits.size(); ++a) {
    out[a] = std::exp(logits[a] - best);
    sum += out[a];
  }
  for (double& p : out) p /= sum;
  return out;
}

double floored_log(double p, long* floor_hits) {
  if (p < kLogProbFloor) {
    if (floor_hits) ++*floor_hits;
    p = kLogProbFloor;
  }
  return std::log(p);
}

}  // namespace

JointParams JointParams::zeros(int n_tasks, int n_states, int n_actions, Architecture arch) {
  JointParams p;
  p.h = Table(n_states, n_actions);
  if (arch != Architecture::shared_only) p.f.assign(n_tasks, Table(n_states, n_actions));
  p.v.assign(n_tasks, ValueTable(n_states, 0.0));
  return p;
}

GradientAccumulator GradientAccumulator::zeros_like(const JointParams& p) {
  GradientAccumulator g;
  g.d_h = Table(p.h.rows(), p.h.cols());
  g.d_f.assign(p.f.size(), Table(p.h.rows(), p.h.cols()));
  g.d_v.assign(p.v.size(), ValueTable(p.h.rows(), 0.0));
  return g;
}

void GradientAccumulator::zero() {
  d_h.fill(0.0);
  for (auto& t : d_f) t.fill(0.0);
  for (auto& v : d_v) v.assign(v.size(), 0.0);
  floored_logs = 0;
}

void GradientAccumulator::add(const GradientAccumulator& other) {
  for (size_t i = 0; i < d_h.data().size(); ++i) d_h.data()[i] += other.d_h.data()[i];
  for (size_t k = 0; k < d_f.size(); ++k)
    for (size_t i = 0; i < d_f[k].data().size(); ++i) d_f[k].data()[i] += other.d_f[k].data()[i];
  for (size_t k = 0; k < d_v.size(); ++k)
    for (size_t i = 0; i < d_v[k].size(); ++i) d_v[k][i] += other.d_v[k][i];
  floored_logs += other.floored_logs;
}

bool GradientAccumulator::all_finite() const {
  if (!d_h.all_finite()) return false;
  for (const auto& t : d_f)
    if (!t.all_finite()) return false;
  for (const auto& v : d_v)
    for (double x : v)
      if (!std::isfinite(x)) return false;
  return true;
}

std::vector<double> distilled_policy_row(std::span<const double> h_row) { return softmax(h_row); }

std::vector<double> task_policy_row(std::span<const double> h_row, std::span<const double> f_row,
                                    const RegularizationConfig& cfg) {
  if (h_row.size() != f_row.size()) throw std::invalid_argument("task_policy_row: shape mismatch");
  const double alpha = cfg.alpha();
  std::vector<double> logits(h_row.size());
  for (size_t a = 0; a < h_row.size(); ++a) logits[a] = alpha * h_row[a] + f_row[a];
  return softmax(logits);
}

std::vector<double> soft_advantage_row(std::span<const double> h_row, std::span<const double> f_row,
                                       const RegularizationConfig& cfg) {
  if (h_row.size() != f_row.size()) throw std::invalid_argument("soft_advantage_row: shape mismatch");
  const double alpha = cfg.alpha();
  // log sum_a pi0(a)^alpha exp(f(a)) with pi0 = softmax(h), via the shifted
  // logits t_a = alpha * log pi0(a) + f(a)
  std::vector<double> pi0 = softmax(h_row);
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> t(h_row.size());
  for (size_t a = 0; a < h_row.size(); ++a) {
    t[a] = alpha * std::log(pi0[a]) + f_row[a];
    best = std::max(best, t[a]);
  }
  double sum = 0.0;
  for (double x : t) sum += std::exp(x - best);
  double lse = best + std::log(sum);
  std::vector<double> out(f_row.size());
  for (size_t a = 0; a < f_row.size(); ++a) out[a] = f_row[a] - lse;
  return out;
}

double regularized_reward(double r, double pi0_prob, double pii_prob, const RegularizationConfig& cfg) {
  if (!(pi0_prob >= 0.0) || !(pii_prob >= 0.0))
    throw std::invalid_argument("regularized_reward: probabilities must be nonnegative");
  const double alpha = cfg.alpha();
  const double beta = cfg.beta();
  double out = r - floored_log(pii_prob, nullptr) / beta;
  if (alpha > 0.0) out += alpha / beta * floored_log(pi0_prob, nullptr);
  return out;
}

std::vector<double> policy_row(const JointParams& params, int task, int state, const RegularizationConfig& cfg,
                               Architecture arch) {
  switch (arch) {
    case Architecture::shared_only:
      return softmax(params.h.row(state));
    case Architecture::separate:
      return softmax(params.f[task].row(state));
    case Architecture::two_column: {
      // alpha == 0 decouples the columns; h is not read at all
      if (cfg.alpha() == 0.0) return softmax(params.f[task].row(state));
      return task_policy_row(params.h.row(state), params.f[task].row(state), cfg);
    }
  }
  throw std::logic_error("policy_row: bad architecture");
}

TabularPolicy policy_table(const JointParams& params, int task, const RegularizationConfig& cfg, Architecture arch) {
  TabularPolicy p;
  p.probs = Table(params.h.rows(), params.h.cols());
  for (int s = 0; s < params.h.rows(); ++s) {
    auto row = policy_row(params, task, s, cfg, arch);
    std::copy(row.begin(), row.end(), p.probs.row(s).begin());
  }
  return p;
}

TabularPolicy distilled_table(const JointParams& params) {
  TabularPolicy p;
  p.probs = Table(params.h.rows(), params.h.cols());
  for (int s = 0; s < params.h.rows(); ++s) {
    auto row = softmax(params.h.row(s));
    std::copy(row.begin(), row.end(), p.probs.row(s).begin());
  }
  return p;
}

namespace {

struct SegmentReturns {
  std::vector<double> g;  // from-step regularized returns, discount-normalized to the step
  long floor_hits = 0;
};

/// Regularized rewards and per-step returns of one segment; bootstrap from
/// the value table at an open end.
SegmentReturns segment_returns(const Trajectory::Segment& seg, int task, const JointParams& params,
                               const RegularizationConfig& cfg, const PolicyGradOptions& opt) {
  const double alpha = cfg.alpha();
  const double beta = cfg.beta();
  SegmentReturns out;
  const size_t L = seg.steps.size();
  std::vector<double> rreg(L);
  for (size_t u = 0; u < L; ++u) {
    const auto& st = seg.steps[u];
    auto pi = policy_row(params, task, st.state, cfg, opt.architecture);
    double term = st.reward - floored_log(pi[st.action], &out.floor_hits) / beta;
    if (alpha > 0.0) {
      auto pi0 = distilled_policy_row(params.h.row(st.state));
      term += alpha / beta * floored_log(pi0[st.action], &out.floor_hits);
    }
    rreg[u] = term;
  }
  out.g.resize(L);
  double g = 0.0;
  if (!seg.terminated && opt.bootstrap_truncated && seg.end_state >= 0) g = params.v[task][seg.end_state];
  for (size_t u = L; u-- > 0;) {
    g = rreg[u] + opt.gamma * g;
    out.g[u] = g;
  }
  return out;
}

}  // namespace

void task_gradient(const Trajectory& traj, int task, const JointParams& params, const RegularizationConfig& cfg,
                   const PolicyGradOptions& opt, GradientAccumulator& out) {
  Table& target = (opt.architecture == Architecture::shared_only) ? out.d_h : out.d_f[task];
  ValueTable& d_v = out.d_v[task];
  const ValueTable& v = params.v[task];
  for (const auto& seg : traj.segments) {
    if (seg.steps.empty()) continue;
    SegmentReturns ret = segment_returns(seg, task, params, cfg, opt);
    out.floored_logs += ret.floor_hits;
    for (size_t u = 0; u < seg.steps.size(); ++u) {
      const auto& st = seg.steps[u];
      double coeff = std::pow(opt.gamma, st.t) * (ret.g[u] - (opt.use_baseline ? v[st.state] : 0.0));
      auto pi = policy_row(params, task, st.state, cfg, opt.architecture);
      for (int b = 0; b < target.cols(); ++b) {
        double score = ((b == st.action) ? 1.0 : 0.0) - pi[b];
        target(st.state, b) += score * coeff;
      }
      d_v[st.state] += ret.g[u] - v[st.state];
    }
  }
}

void distilled_gradient(const Trajectory& traj, int task, const JointParams& params, const RegularizationConfig& cfg,
                        const PolicyGradOptions& opt, GradientAccumulator& out) {
  const double alpha = cfg.alpha();
  if (alpha == 0.0) return;  // no coupling through the distilled column
  if (opt.architecture == Architecture::shared_only) return;
  const double beta = cfg.beta();
  const ValueTable& v = params.v[task];
  for (const auto& seg : traj.segments) {
    if (seg.steps.empty()) continue;
    // score term: gradients flow through the combined softmax only under the
    // two-column parameterization
    std::vector<double> g;
    if (opt.architecture == Architecture::two_column) {
      SegmentReturns ret = segment_returns(seg, task, params, cfg, opt);
      out.floored_logs += ret.floor_hits;
      g = std::move(ret.g);
    }
    for (size_t u = 0; u < seg.steps.size(); ++u) {
      const auto& st = seg.steps[u];
      double gamma_t = std::pow(opt.gamma, st.t);
      auto pi = policy_row(params, task, st.state, cfg, opt.architecture);
      auto pi0 = distilled_policy_row(params.h.row(st.state));
      if (opt.architecture == Architecture::two_column) {
        double coeff = gamma_t * (g[u] - (opt.use_baseline ? v[st.state] : 0.0));
        for (int b = 0; b < out.d_h.cols(); ++b) {
          double score = ((b == st.action) ? 1.0 : 0.0) - pi[b];
          out.d_h(st.state, b) += alpha * score * coeff;
        }
      }
      // probability matching term
      for (int b = 0; b < out.d_h.cols(); ++b)
        out.d_h(st.state, b) += alpha / beta * gamma_t * (pi[b] - pi0[b]);
    }
  }
}

void accumulate_matching_term(const Trajectory& traj, const Table& pi_task, const Table& pi_distilled,
                              double alpha_over_beta, double gamma, Table& d_h) {
  for (const auto& seg : traj.segments)
    for (const auto& st : seg.steps) {
      double gamma_t = std::pow(gamma, st.t);
      for (int b = 0; b < d_h.cols(); ++b)
        d_h(st.state, b) += alpha_over_beta * gamma_t * (pi_task(st.state, b) - pi_distilled(st.state, b));
    }
}

void sgd_apply(JointParams& params, const GradientAccumulator& grads, double step_size, double value_l2_coeff) {
  if (!(step_size > 0.0)) throw std::invalid_argument("sgd_apply: step_size must be positive");
  if (!grads.all_finite()) throw std::runtime_error("sgd_apply: non-finite gradient; step aborted");
  for (size_t i = 0; i < params.h.data().size(); ++i) params.h.data()[i] += step_size * grads.d_h.data()[i];
  for (size_t k = 0; k < params.f.size(); ++k)
    for (size_t i = 0; i < params.f[k].data().size(); ++i)
      params.f[k].data()[i] += step_size * grads.d_f[k].data()[i];
  for (size_t k = 0; k < params.v.size(); ++k)
    for (size_t i = 0; i < params.v[k].size(); ++i) params.v[k][i] += step_size * grads.d_v[k][i];

  if (value_l2_coeff > 0.0 && params.v.size() > 1) {
    const size_t n = params.v.size();
    for (size_t i = 0; i < params.v[0].size(); ++i) {
      double mean = 0.0;
      for (size_t k = 0; k < n; ++k) mean += params.v[k][i];
      mean /= static_cast<double>(n);
      for (size_t k = 0; k < n; ++k) params.v[k][i] -= step_size * value_l2_coeff * (params.v[k][i] - mean);
    }
  }
}

}  // namespace distral
