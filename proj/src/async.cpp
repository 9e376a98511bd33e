#include "distral/async.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace distral {

AtomicTable::AtomicTable(int rows, int cols, double fill)
    : rows_(rows), cols_(cols), vals_(new std::atomic<double>[static_cast<size_t>(rows) * cols]) {
  for (size_t i = 0; i < static_cast<size_t>(rows) * cols; ++i) vals_[i].store(fill, std::memory_order_relaxed);
}

void AtomicTable::snapshot(Table& out) const {
  if (out.rows() != rows_ || out.cols() != cols_) out = Table(rows_, cols_);
  for (size_t i = 0; i < static_cast<size_t>(rows_) * cols_; ++i)
    out.data()[i] = vals_[i].load(std::memory_order_relaxed);
}

Table AtomicTable::snapshot() const {
  Table t(rows_, cols_);
  snapshot(t);
  return t;
}

double AtomicTable::load(int r, int c) const {
  return vals_[static_cast<size_t>(r) * cols_ + c].load(std::memory_order_relaxed);
}

void AtomicTable::add(int r, int c, double delta) {
  auto& slot = vals_[static_cast<size_t>(r) * cols_ + c];
  double cur = slot.load(std::memory_order_relaxed);
  while (!slot.compare_exchange_weak(cur, cur + delta, std::memory_order_relaxed)) {
  }
}

void AtomicTable::add_scaled(const Table& delta, double scale) {
  if (delta.rows() != rows_ || delta.cols() != cols_) throw std::invalid_argument("AtomicTable: shape mismatch");
  for (size_t i = 0; i < static_cast<size_t>(rows_) * cols_; ++i) {
    double d = scale * delta.data()[i];
    if (d == 0.0) continue;
    auto& slot = vals_[i];
    double cur = slot.load(std::memory_order_relaxed);
    while (!slot.compare_exchange_weak(cur, cur + d, std::memory_order_relaxed)) {
    }
  }
}

void AtomicTable::store(const Table& src) {
  if (src.rows() != rows_ || src.cols() != cols_) throw std::invalid_argument("AtomicTable: shape mismatch");
  for (size_t i = 0; i < static_cast<size_t>(rows_) * cols_; ++i)
    vals_[i].store(src.data()[i], std::memory_order_relaxed);
}

void AtomicTable::scale(double factor) {
  for (size_t i = 0; i < static_cast<size_t>(rows_) * cols_; ++i)
    vals_[i].store(vals_[i].load(std::memory_order_relaxed) * factor, std::memory_order_relaxed);
}

SharedParams::SharedParams(const JointParams& init, StalenessMode mode)
    : mode_(mode), h_(init.h.rows(), init.h.cols()) {
  h_.store(init.h);
  for (const auto& f : init.f) {
    f_.push_back(std::make_unique<AtomicTable>(f.rows(), f.cols()));
    f_.back()->store(f);
  }
  for (const auto& v : init.v) {
    Table vt(static_cast<int>(v.size()), 1);
    for (size_t i = 0; i < v.size(); ++i) vt(static_cast<int>(i), 0) = v[i];
    v_.push_back(std::make_unique<AtomicTable>(vt.rows(), 1));
    v_.back()->store(vt);
  }
}

JointParams SharedParams::snapshot() const {
  std::unique_lock<std::mutex> lock(serialize_mtx_, std::defer_lock);
  if (mode_ == StalenessMode::serialized) lock.lock();
  JointParams p;
  p.h = h_.snapshot();
  for (const auto& f : f_) p.f.push_back(f->snapshot());
  for (const auto& v : v_) {
    Table vt = v->snapshot();
    p.v.emplace_back(vt.data());
  }
  return p;
}

void SharedParams::store(const JointParams& params) {
  h_.store(params.h);
  for (size_t k = 0; k < f_.size(); ++k) f_[k]->store(params.f[k]);
  for (size_t k = 0; k < v_.size(); ++k) {
    Table vt(static_cast<int>(params.v[k].size()), 1);
    for (size_t i = 0; i < params.v[k].size(); ++i) vt(static_cast<int>(i), 0) = params.v[k][i];
    v_[k]->store(vt);
  }
}

void SharedParams::apply(const GradientAccumulator& grads, double step_size, double value_l2_coeff) {
  if (!grads.all_finite()) throw std::runtime_error("SharedParams::apply: non-finite gradient; update rejected");
  std::unique_lock<std::mutex> lock(serialize_mtx_, std::defer_lock);
  if (mode_ == StalenessMode::serialized) lock.lock();
  apply_locked(grads, step_size, value_l2_coeff);
  updates_.fetch_add(1, std::memory_order_relaxed);
}

void SharedParams::apply_locked(const GradientAccumulator& grads, double step_size, double value_l2_coeff) {
  h_.add_scaled(grads.d_h, step_size);
  for (size_t k = 0; k < f_.size(); ++k) f_[k]->add_scaled(grads.d_f[k], step_size);
  for (size_t k = 0; k < v_.size(); ++k) {
    const auto& dv = grads.d_v[k];
    for (size_t i = 0; i < dv.size(); ++i)
      if (dv[i] != 0.0) v_[k]->add(static_cast<int>(i), 0, step_size * dv[i]);
  }
  if (value_l2_coeff > 0.0 && v_.size() > 1) {
    // pull each task's value estimates toward the cross-task mean
    const int n = static_cast<int>(v_.size());
    const int S = v_[0]->rows();
    for (int i = 0; i < S; ++i) {
      double mean = 0.0;
      for (int k = 0; k < n; ++k) mean += v_[k]->load(i, 0);
      mean /= n;
      for (int k = 0; k < n; ++k) v_[k]->add(i, 0, -step_size * value_l2_coeff * (v_[k]->load(i, 0) - mean));
    }
  }
}

TrainingMonitor::TrainingMonitor(int n_tasks, int window) : window_(window) {
  for (int i = 0; i < n_tasks; ++i) {
    stats_.push_back(std::make_unique<TaskStats>());
    stats_.back()->recent.resize(window);
  }
}

void TrainingMonitor::on_steps(int task, long long n) { stats_[task]->steps.fetch_add(n, std::memory_order_relaxed); }

void TrainingMonitor::on_episode(int task, double episodic_return) {
  auto& st = *stats_[task];
  std::lock_guard<std::mutex> lock(st.mtx);
  st.recent[st.next] = episodic_return;
  st.next = (st.next + 1) % window_;
  if (st.count < static_cast<size_t>(window_)) ++st.count;
}

long long TrainingMonitor::steps(int task) const { return stats_[task]->steps.load(std::memory_order_relaxed); }

long long TrainingMonitor::total_steps() const {
  long long total = 0;
  for (const auto& st : stats_) total += st->steps.load(std::memory_order_relaxed);
  return total;
}

double TrainingMonitor::recent_return(int task) const {
  auto& st = *stats_[task];
  std::lock_guard<std::mutex> lock(st.mtx);
  if (st.count == 0) return std::numeric_limits<double>::quiet_NaN();
  double sum = 0.0;
  for (size_t i = 0; i < st.count; ++i) sum += st.recent[i];
  return sum / static_cast<double>(st.count);
}

WorkerStats worker_iteration(int task, Env& env, SharedParams& shared, const RegularizationConfig& cfg,
                             Architecture arch, int batch_len, double step_size, double value_l2,
                             const BatchGradFn& grads, Rng& rng, TrainingMonitor* monitor,
                             double* episode_return_acc) {
  JointParams snap = shared.snapshot();
  PolicyFn acting = [&](int s, std::span<double> out) {
    auto row = policy_row(snap, task, s, cfg, arch);
    std::copy(row.begin(), row.end(), out.begin());
  };
  Trajectory traj = rollout(env, acting, batch_len, rng);

  if (monitor) {
    for (size_t g = 0; g < traj.segments.size(); ++g) {
      const auto& seg = traj.segments[g];
      double acc = episode_return_acc ? *episode_return_acc : 0.0;
      for (const auto& st : seg.steps) acc += st.reward;
      bool closed = (g + 1 < traj.segments.size()) || !env.episode_active();
      if (closed) {
        monitor->on_episode(task, acc);
        acc = 0.0;
      }
      if (episode_return_acc) *episode_return_acc = acc;
    }
    monitor->on_steps(task, static_cast<long long>(traj.n_steps()));
  }

  GradientAccumulator g = grads(task, traj, snap);
  shared.apply(g, step_size, value_l2);
  return {1, static_cast<long long>(traj.n_steps())};
}

WorkerStats worker_loop(int task, Env& env, SharedParams& shared, const RegularizationConfig& cfg,
                        Architecture arch, const WorkerConfig& wcfg, double step_size, double value_l2,
                        const BatchGradFn& grads, const std::function<bool()>& stop, Rng rng,
                        TrainingMonitor* monitor) {
  WorkerStats total;
  double episode_acc = 0.0;
  while (!stop()) {
    WorkerStats s = worker_iteration(task, env, shared, cfg, arch, wcfg.batch_len, step_size, value_l2, grads, rng,
                                     monitor, &episode_acc);
    total.batches += s.batches;
    total.env_steps += s.env_steps;
  }
  return total;
}

SyncBarrier::SyncBarrier(int parties, std::function<void()> on_complete)
    : on_complete_(std::move(on_complete)), parties_(parties) {
  if (parties <= 0) throw std::invalid_argument("SyncBarrier: parties must be positive");
}

void SyncBarrier::arrive_and_wait(std::chrono::milliseconds timeout) {
  std::unique_lock<std::mutex> lock(mtx_);
  uint64_t round = round_;
  if (++waiting_ == parties_) {
    if (on_complete_) on_complete_();
    waiting_ = 0;
    ++round_;
    cv_.notify_all();
    return;
  }
  if (!cv_.wait_for(lock, timeout, [&] { return round_ != round; }))
    throw std::runtime_error("SyncBarrier: timeout waiting for workers");
}

SharedTabularState::SharedTabularState(int n_tasks, int n_states, int n_actions)
    : pi0_(TabularPolicy::uniform(n_states, n_actions)), n_states_(n_states), n_actions_(n_actions) {
  for (int i = 0; i < n_tasks; ++i) {
    q_.push_back(std::make_unique<AtomicTable>(n_states, n_actions));
    counts_.push_back(std::make_unique<AtomicTable>(n_states, n_actions));
  }
}

TabularPolicy SharedTabularState::pi0() const {
  std::lock_guard<std::mutex> lock(pi0_mtx_);
  return pi0_;
}

void SharedTabularState::set_pi0(TabularPolicy p) {
  std::lock_guard<std::mutex> lock(pi0_mtx_);
  pi0_ = std::move(p);
}

TabularPolicy synchronize_distill(SharedTabularState& shared, std::span<const VisitationCounts> count_deltas,
                                  double pseudocount) {
  if (!count_deltas.empty()) {
    if (static_cast<int>(count_deltas.size()) != shared.n_tasks())
      throw std::invalid_argument("synchronize_distill: one count table per task expected");
    for (int i = 0; i < shared.n_tasks(); ++i) shared.counts(i).add_scaled(count_deltas[i].counts, 1.0);
  }
  std::vector<VisitationCounts> pooled;
  pooled.reserve(shared.n_tasks());
  for (int i = 0; i < shared.n_tasks(); ++i) {
    VisitationCounts c;
    c.counts = shared.counts(i).snapshot();
    pooled.push_back(std::move(c));
  }
  TabularPolicy pi0 = distill_ml(pooled, pseudocount).pi0;
  shared.set_pi0(pi0);
  return pi0;
}

}  // namespace distral
