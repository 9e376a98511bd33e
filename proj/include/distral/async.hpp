#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "distral/env.hpp"
#include "distral/policy_grad.hpp"
#include "distral/tabular.hpp"

namespace distral {

/// serialized: updates are applied under a lock and workers run round-robin
/// on one thread, making runs deterministic. lock_free: Hogwild-style; reads
/// may observe elementwise-mixed parameters (documented staleness).
enum class StalenessMode { serialized, lock_free };

/// Fixed-shape table of atomics supporting concurrent additive updates and
/// snapshot reads.
class AtomicTable {
 public:
  AtomicTable() = default;
  AtomicTable(int rows, int cols, double fill = 0.0);
  AtomicTable(const AtomicTable&) = delete;
  AtomicTable& operator=(const AtomicTable&) = delete;

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  void snapshot(Table& out) const;
  Table snapshot() const;
  double load(int r, int c) const;
  void add(int r, int c, double delta);
  void add_scaled(const Table& delta, double scale);
  void store(const Table& src);
  /// Multiplies every entry; callers must quiesce concurrent writers.
  void scale(double factor);

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::unique_ptr<std::atomic<double>[]> vals_;
};

/// Joint parameters behind an atomically updatable store with a monotone
/// update counter. Updates are pure additions, so under lock_free mode the
/// final parameters after a set of constant-gradient batches do not depend
/// on worker interleaving.
class SharedParams {
 public:
  SharedParams(const JointParams& init, StalenessMode mode);

  JointParams snapshot() const;
  StalenessMode mode() const { return mode_; }
  uint64_t update_count() const { return updates_.load(); }

  /// One sgd_apply-equivalent ascent step, applied additively. Throws on a
  /// non-finite gradient without applying anything.
  void apply(const GradientAccumulator& grads, double step_size, double value_l2_coeff = 0.0);

  /// Non-atomic bulk replacement; callers must quiesce workers first.
  void store(const JointParams& params);

 private:
  void apply_locked(const GradientAccumulator& grads, double step_size, double value_l2_coeff);

  StalenessMode mode_;
  AtomicTable h_;
  std::vector<std::unique_ptr<AtomicTable>> f_;
  std::vector<std::unique_ptr<AtomicTable>> v_;
  std::atomic<uint64_t> updates_{0};
  mutable std::mutex serialize_mtx_;
};

struct WorkerConfig {
  int workers_per_task = 4;
  int batch_len = 20;
  StalenessMode staleness_mode = StalenessMode::lock_free;
};

/// Thread-safe per-task training accounting shared between workers and the
/// evaluation coordinator.
class TrainingMonitor {
 public:
  explicit TrainingMonitor(int n_tasks, int window = 10);
  void on_steps(int task, long long n);
  void on_episode(int task, double episodic_return);
  long long steps(int task) const;
  long long total_steps() const;
  /// Mean over the last `window` finished training episodes (NaN if none).
  double recent_return(int task) const;

 private:
  struct TaskStats {
    std::atomic<long long> steps{0};
    mutable std::mutex mtx;
    std::vector<double> recent;
    size_t next = 0;
    size_t count = 0;
  };
  std::vector<std::unique_ptr<TaskStats>> stats_;
  int window_;
};

/// Gradient computation for one task batch from a parameter snapshot.
using BatchGradFn =
    std::function<GradientAccumulator(int task, const Trajectory& traj, const JointParams& snapshot)>;

struct WorkerStats {
  uint64_t batches = 0;
  long long env_steps = 0;
};

/// One worker iteration: snapshot -> rollout of batch_len steps under the
/// snapshot's task policy -> gradients -> additive apply to the store.
WorkerStats worker_iteration(int task, Env& env, SharedParams& shared, const RegularizationConfig& cfg,
                             Architecture arch, int batch_len, double step_size, double value_l2,
                             const BatchGradFn& grads, Rng& rng, TrainingMonitor* monitor,
                             double* episode_return_acc);

/// Repeats worker_iteration until stop() returns true.
WorkerStats worker_loop(int task, Env& env, SharedParams& shared, const RegularizationConfig& cfg,
                        Architecture arch, const WorkerConfig& wcfg, double step_size, double value_l2,
                        const BatchGradFn& grads, const std::function<bool()>& stop, Rng rng,
                        TrainingMonitor* monitor);

/// Reusable barrier with a timeout; the completion function runs once per
/// round on the last arriving thread.
class SyncBarrier {
 public:
  SyncBarrier(int parties, std::function<void()> on_complete = {});
  /// Throws std::runtime_error on timeout.
  void arrive_and_wait(std::chrono::milliseconds timeout = std::chrono::milliseconds(60000));

 private:
  std::mutex mtx_;
  std::condition_variable cv_;
  std::function<void()> on_complete_;
  int parties_;
  int waiting_ = 0;
  uint64_t round_ = 0;
};

/// Shared state of the asynchronous alternating path: the distilled policy
/// snapshot, per-task Q tables and pooled visitation counts.
class SharedTabularState {
 public:
  SharedTabularState(int n_tasks, int n_states, int n_actions);

  TabularPolicy pi0() const;
  void set_pi0(TabularPolicy p);
  AtomicTable& q(int task) { return *q_[task]; }
  const AtomicTable& q(int task) const { return *q_[task]; }
  AtomicTable& counts(int task) { return *counts_[task]; }
  const AtomicTable& counts(int task) const { return *counts_[task]; }
  int n_tasks() const { return static_cast<int>(q_.size()); }
  int n_states() const { return n_states_; }
  int n_actions() const { return n_actions_; }

 private:
  mutable std::mutex pi0_mtx_;
  TabularPolicy pi0_;
  std::vector<std::unique_ptr<AtomicTable>> q_;
  std::vector<std::unique_ptr<AtomicTable>> counts_;
  int n_states_;
  int n_actions_;
};

/// Distillation refresh at a synchronization point: merges the given
/// per-task count deltas into the shared pools, recomputes the smoothed ML
/// mixture over all pooled counts and installs it as the new distilled
/// policy. Returns the installed policy. Callers provide the barrier; with a
/// single worker this is equivalent to calling distill_ml inline.
TabularPolicy synchronize_distill(SharedTabularState& shared, std::span<const VisitationCounts> count_deltas,
                                  double pseudocount);

}  // namespace distral
