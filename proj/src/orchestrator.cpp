#include "distral/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <unordered_map>

#include "distral/metrics.hpp"

namespace distral {

std::string to_string(AlgorithmName name) {
  switch (name) {
    case AlgorithmName::a3c: return "A3C";
    case AlgorithmName::a3c_multitask: return "A3C_multitask";
    case AlgorithmName::a3c_2col: return "A3C_2col";
    case AlgorithmName::kl_1col: return "KL_1col";
    case AlgorithmName::kl_2col: return "KL_2col";
    case AlgorithmName::kl_ent_1col: return "KL+ent_1col";
    case AlgorithmName::kl_ent_2col: return "KL+ent_2col";
    case AlgorithmName::tabular_distral: return "tabular_distral";
  }
  return "?";
}

std::optional<AlgorithmName> algorithm_from_string(const std::string& s) {
  static const std::map<std::string, AlgorithmName> names = {
      {"A3C", AlgorithmName::a3c},
      {"A3C_multitask", AlgorithmName::a3c_multitask},
      {"A3C_2col", AlgorithmName::a3c_2col},
      {"KL_1col", AlgorithmName::kl_1col},
      {"KL_2col", AlgorithmName::kl_2col},
      {"KL+ent_1col", AlgorithmName::kl_ent_1col},
      {"KL+ent_2col", AlgorithmName::kl_ent_2col},
      {"tabular_distral", AlgorithmName::tabular_distral},
  };
  auto it = names.find(s);
  if (it == names.end()) return std::nullopt;
  return it->second;
}

std::vector<AlgorithmName> all_joint_algorithms() {
  return {AlgorithmName::a3c,        AlgorithmName::a3c_multitask, AlgorithmName::a3c_2col,
          AlgorithmName::kl_1col,    AlgorithmName::kl_2col,       AlgorithmName::kl_ent_1col,
          AlgorithmName::kl_ent_2col};
}

AlgorithmSpec make_algorithm_spec(AlgorithmName name, double beta, double kl_ent_alpha) {
  double alpha;
  Architecture arch;
  Optimization opt = Optimization::joint;
  switch (name) {
    case AlgorithmName::a3c: alpha = 0.0; arch = Architecture::separate; break;
    case AlgorithmName::a3c_multitask: alpha = 0.0; arch = Architecture::shared_only; break;
    case AlgorithmName::a3c_2col: alpha = 0.0; arch = Architecture::two_column; break;
    case AlgorithmName::kl_1col: alpha = 1.0; arch = Architecture::separate; break;
    case AlgorithmName::kl_2col: alpha = 1.0; arch = Architecture::two_column; break;
    case AlgorithmName::kl_ent_1col: alpha = kl_ent_alpha; arch = Architecture::separate; break;
    case AlgorithmName::kl_ent_2col: alpha = kl_ent_alpha; arch = Architecture::two_column; break;
    case AlgorithmName::tabular_distral:
      alpha = 1.0;
      arch = Architecture::separate;
      opt = Optimization::alternating;
      break;
    default: throw std::invalid_argument("make_algorithm_spec: unknown algorithm");
  }
  AlgorithmSpec spec;
  spec.name = name;
  spec.cfg = RegularizationConfig::from_alpha_beta(alpha, beta);
  spec.architecture = arch;
  spec.optimization = opt;
  return spec;
}

void validate_algorithm_spec(const AlgorithmSpec& spec) {
  const double alpha = spec.cfg.alpha();
  auto fail = [&](const char* what) {
    throw std::invalid_argument("algorithm spec '" + to_string(spec.name) + "' violates: " + what);
  };
  switch (spec.name) {
    case AlgorithmName::a3c:
      if (alpha != 0.0) fail("A3C rows require alpha = 0");
      if (spec.architecture != Architecture::separate) fail("A3C uses separate task columns");
      break;
    case AlgorithmName::a3c_multitask:
      if (alpha != 0.0) fail("A3C rows require alpha = 0");
      if (spec.architecture != Architecture::shared_only) fail("A3C_multitask uses the shared column only");
      break;
    case AlgorithmName::a3c_2col:
      if (alpha != 0.0) fail("A3C rows require alpha = 0");
      if (spec.architecture != Architecture::two_column) fail("2col variants use the two-column architecture");
      break;
    case AlgorithmName::kl_1col:
      if (alpha != 1.0) fail("KL rows require alpha = 1");
      if (spec.architecture != Architecture::separate) fail("1col variants use separate columns");
      break;
    case AlgorithmName::kl_2col:
      if (alpha != 1.0) fail("KL rows require alpha = 1");
      if (spec.architecture != Architecture::two_column) fail("2col variants use the two-column architecture");
      break;
    case AlgorithmName::kl_ent_1col:
      if (!(alpha > 0.0 && alpha < 1.0)) fail("KL+ent rows require 0 < alpha < 1");
      if (spec.architecture != Architecture::separate) fail("1col variants use separate columns");
      break;
    case AlgorithmName::kl_ent_2col:
      if (!(alpha > 0.0 && alpha < 1.0)) fail("KL+ent rows require 0 < alpha < 1");
      if (spec.architecture != Architecture::two_column) fail("2col variants use the two-column architecture");
      break;
    case AlgorithmName::tabular_distral:
      if (spec.optimization != Optimization::alternating) fail("tabular_distral uses alternating optimization");
      break;
  }
  if (spec.name != AlgorithmName::tabular_distral && spec.optimization != Optimization::joint)
    fail("Table-1 algorithms use joint optimization");
}

namespace {

/// Feeds finished-episode returns to the monitor, carrying the partial
/// return of an episode left open at the batch boundary in `acc`.
void account_episodes(const Trajectory& traj, bool env_still_active, int task, TrainingMonitor* monitor,
                      double& acc) {
  if (!monitor) return;
  for (size_t g = 0; g < traj.segments.size(); ++g) {
    const auto& seg = traj.segments[g];
    for (const auto& st : seg.steps) acc += st.reward;
    bool closed = (g + 1 < traj.segments.size()) || !env_still_active;
    if (closed) {
      monitor->on_episode(task, acc);
      acc = 0.0;
    }
  }
  monitor->on_steps(task, static_cast<long long>(traj.n_steps()));
}

class JointTrainer final : public Trainer {
 public:
  JointTrainer(const AlgorithmSpec& spec, int n_tasks, int n_states, int n_actions, const WorkerConfig& wcfg,
               double step_size, double value_l2)
      : spec_(spec),
        wcfg_(wcfg),
        step_(step_size),
        l2_(value_l2),
        n_tasks_(n_tasks),
        shared_(JointParams::zeros(n_tasks, n_states, n_actions, spec.architecture), wcfg.staleness_mode) {}

  int n_tasks() const override { return n_tasks_; }

  int train_batch(int task, Env& env, Rng& rng, TrainingMonitor* monitor) override {
    double* acc = episode_acc(&env);
    const double gamma = env.discount();
    BatchGradFn fn = [this, gamma](int t, const Trajectory& traj, const JointParams& snap) {
      GradientAccumulator g = GradientAccumulator::zeros_like(snap);
      PolicyGradOptions opt{spec_.architecture, true, true, gamma};
      task_gradient(traj, t, snap, spec_.cfg, opt, g);
      distilled_gradient(traj, t, snap, spec_.cfg, opt, g);
      return g;
    };
    WorkerStats s = worker_iteration(task, env, shared_, spec_.cfg, spec_.architecture, wcfg_.batch_len, step_, l2_,
                                     fn, rng, monitor, acc);
    return static_cast<int>(s.env_steps);
  }

  TabularPolicy task_policy(int task) const override {
    return policy_table(shared_.snapshot(), task, spec_.cfg, spec_.architecture);
  }

  std::optional<TabularPolicy> distilled_policy() const override {
    // plain A3C maintains no shared column at all
    if (spec_.architecture == Architecture::separate && spec_.cfg.alpha() == 0.0) return std::nullopt;
    return distilled_table(shared_.snapshot());
  }

  uint64_t updates_applied() const override { return shared_.update_count(); }

 private:
  double* episode_acc(Env* env) {
    std::lock_guard<std::mutex> lock(acc_mtx_);
    return &episode_acc_[env];
  }

  AlgorithmSpec spec_;
  WorkerConfig wcfg_;
  double step_;
  double l2_;
  int n_tasks_;
  SharedParams shared_;
  std::mutex acc_mtx_;
  std::unordered_map<Env*, double> episode_acc_;
};

class TabularDistralTrainer final : public Trainer {
 public:
  TabularDistralTrainer(const AlgorithmSpec& spec, int n_tasks, int n_states, int n_actions,
                        const TabularSchedule& sched)
      : spec_(spec), sched_(sched), shared_(n_tasks, n_states, n_actions) {}

  int n_tasks() const override { return shared_.n_tasks(); }

  int train_batch(int task, Env& env, Rng& rng, TrainingMonitor* monitor) override {
    TabularPolicy pi0 = shared_.pi0();
    QTable snap = shared_.q(task).snapshot();
    QTable q = snap;
    double frac = 0.0;
    if (monitor && sched_.steps_per_task > 0)
      frac = static_cast<double>(monitor->steps(task)) / sched_.steps_per_task;
    double lr = sched_.learn_rate;
    if (sched_.learn_rate_final >= 0.0)
      lr += (sched_.learn_rate_final - sched_.learn_rate) * std::clamp(frac, 0.0, 1.0);

    Trajectory traj = soft_q_rollout_update(env, q, pi0, spec_.cfg, sched_.rollout_len, lr, rng);

    // write back as an additive delta; counts go straight to the pool
    for (size_t i = 0; i < q.data().size(); ++i) q.data()[i] -= snap.data()[i];
    shared_.q(task).add_scaled(q, 1.0);
    const double gamma = env.discount();
    for (const auto& seg : traj.segments) {
      if (seg.steps.empty()) continue;
      double w = std::pow(gamma, seg.steps.front().t);
      for (const auto& st : seg.steps) {
        shared_.counts(task).add(st.state, st.action, w);
        w *= gamma;
      }
    }
    {
      std::lock_guard<std::mutex> lock(acc_mtx_);
      account_episodes(traj, env.episode_active(), task, monitor, episode_acc_[&env]);
    }
    updates_.fetch_add(1, std::memory_order_relaxed);
    return static_cast<int>(traj.n_steps());
  }

  TabularPolicy task_policy(int task) const override {
    return boltzmann_policy_from_q(shared_.q(task).snapshot(), shared_.pi0(), spec_.cfg);
  }

  std::optional<TabularPolicy> distilled_policy() const override {
    if (!sched_.distill) return std::nullopt;  // independent soft-Q baseline
    return shared_.pi0();
  }

  void sync() override {
    if (!sched_.distill) return;
    if (sched_.count_decay != 1.0)
      for (int i = 0; i < shared_.n_tasks(); ++i) shared_.counts(i).scale(sched_.count_decay);
    synchronize_distill(shared_, {}, sched_.pseudocount);
  }

  int batches_per_sync() const override { return sched_.rollouts_per_distill; }

  uint64_t updates_applied() const override { return updates_.load(std::memory_order_relaxed); }

 private:
  AlgorithmSpec spec_;
  TabularSchedule sched_;
  SharedTabularState shared_;
  std::atomic<uint64_t> updates_{0};
  std::mutex acc_mtx_;
  std::unordered_map<Env*, double> episode_acc_;
};

uint64_t mix_seed(uint64_t seed, uint64_t salt) {
  uint64_t x = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ull;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBull;
  x ^= x >> 31;
  return x;
}

uint64_t label_salt(const std::string& label) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : label) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

std::unique_ptr<Trainer> build_algorithm(const AlgorithmSpec& spec, int n_tasks, int n_states, int n_actions,
                                         const WorkerConfig& wcfg, double step_size, double value_l2,
                                         const TabularSchedule& tabular) {
  validate_algorithm_spec(spec);
  if (n_tasks < 1) throw std::invalid_argument("build_algorithm: need at least one task");
  if (spec.optimization == Optimization::alternating)
    return std::make_unique<TabularDistralTrainer>(spec, n_tasks, n_states, n_actions, tabular);
  return std::make_unique<JointTrainer>(spec, n_tasks, n_states, n_actions, wcfg, step_size, value_l2);
}

std::vector<GridTask> make_task_suite(const ExperimentPlan& plan, uint64_t run_seed) {
  std::vector<GridTask> tasks;
  uint64_t ctr = mix_seed(plan.task_seed_base, run_seed);
  for (int i = 0; i < plan.n_tasks; ++i) {
    for (int attempt = 0;; ++attempt) {
      GridTask t = make_two_room_task(ctr++, plan.task_params);
      bool dup = false;
      if (plan.distinct_goals)
        for (const auto& prev : tasks) dup = dup || (prev.goal == t.goal);
      if (!dup || attempt > 1000) {
        tasks.push_back(std::move(t));
        break;
      }
    }
  }
  return tasks;
}

RunRecord run_one(const ExperimentPlan& plan, const AlgorithmEntry& algo, int hyper_id, uint64_t seed,
                  RunArtifacts* artifacts) {
  const HyperSetting& hyper = plan.hyper_grid.at(hyper_id);
  if (!(hyper.entropy_cost > 0.0)) throw std::invalid_argument("run_one: entropy cost must be positive");
  const double beta = 1.0 / hyper.entropy_cost;

  AlgorithmSpec spec = make_algorithm_spec(algo.spec.name, beta, plan.kl_ent_alpha);

  std::string label = algo.label.empty() ? to_string(spec.name) : algo.label;
  RunRecord record;
  record.algo = label;
  record.hyper_id = hyper_id;
  record.seed = seed;
  record.hypers = {{"entropy_cost", hyper.entropy_cost}, {"step_size", hyper.step_size}};

  std::vector<GridTask> tasks = make_task_suite(plan, seed);
  const int n = static_cast<int>(tasks.size());
  record.tasks.resize(n);
  for (int i = 0; i < n; ++i) record.tasks[i].task_id = i;

  TabularSchedule sched;
  sched.steps_per_task = static_cast<int>(plan.budget_steps_per_task);
  sched.rollout_len = plan.rollout_len;
  sched.rollouts_per_distill = plan.rollouts_per_distill;
  sched.learn_rate = hyper.step_size;
  sched.pseudocount = plan.pseudocount;
  sched.distill = algo.distill;
  sched.eval_every = plan.eval_every;
  sched.eval_episodes = plan.eval_episodes;

  const int workers = std::max(1, plan.workers.workers_per_task);
  std::vector<std::vector<std::unique_ptr<Env>>> envs(n);
  for (int i = 0; i < n; ++i)
    for (int w = 0; w < workers; ++w) envs[i].push_back(std::make_unique<GridEnv>(tasks[i]));

  const int S = envs[0][0]->n_states();
  const int A = envs[0][0]->n_actions();
  auto trainer = build_algorithm(spec, n, S, A, plan.workers, hyper.step_size, plan.value_l2_coeff, sched);

  Rng root(mix_seed(seed, mix_seed(static_cast<uint64_t>(hyper_id), label_salt(label))));
  std::vector<std::vector<Rng>> worker_rngs(n);
  for (int i = 0; i < n; ++i)
    for (int w = 0; w < workers; ++w) worker_rngs[i].push_back(root.split(static_cast<uint64_t>(i) * 1024 + w));
  std::vector<Rng> eval_rngs;
  for (int i = 0; i < n; ++i) eval_rngs.push_back(root.split(1u << 20 | i));

  TrainingMonitor monitor(n);
  const long long budget = plan.budget_steps_per_task;
  std::vector<long long> next_eval(n, plan.eval_every);

  auto emit_due_evals = [&](int i) {
    while (next_eval[i] <= monitor.steps(i) && next_eval[i] <= budget) {
      EvalPoint pt;
      pt.env_steps = next_eval[i];
      pt.train_return = monitor.recent_return(i);
      TabularPolicy pi = trainer->task_policy(i);
      pi.validate(1e-9);
      pt.eval_return = evaluate_policy(*envs[i][0], pi, plan.eval_episodes, eval_rngs[i]);
      auto distilled = trainer->distilled_policy();
      TabularPolicy common = distilled ? *distilled : TabularPolicy::uniform(S, A);
      common.validate(1e-9);
      pt.distilled_eval_return = evaluate_policy(*envs[i][0], common, plan.eval_episodes, eval_rngs[i]);
      if (!std::isfinite(pt.eval_return) || !std::isfinite(pt.distilled_eval_return))
        throw std::runtime_error("run_one: non-finite evaluation return");
      record.tasks[i].points.push_back(pt);
      next_eval[i] += plan.eval_every;
    }
  };

  const auto t_start = std::chrono::steady_clock::now();

  if (plan.workers.staleness_mode == StalenessMode::serialized) {
    // deterministic round-robin on this thread
    const int block = std::max(1, trainer->batches_per_sync());
    bool work_left = true;
    while (work_left) {
      work_left = false;
      for (int i = 0; i < n; ++i) {
        for (int w = 0; w < workers; ++w) {
          for (int b = 0; b < block; ++b) {
            if (monitor.steps(i) >= budget) break;
            work_left = true;
            trainer->train_batch(i, *envs[i][w], worker_rngs[i][w], &monitor);
          }
        }
        emit_due_evals(i);
      }
      if (work_left) trainer->sync();
    }
    for (int i = 0; i < n; ++i) emit_due_evals(i);
  } else {
    // one thread per (task, worker); an alternating trainer synchronizes on
    // a barrier every batches_per_sync batches
    const int block = trainer->batches_per_sync();
    std::unique_ptr<SyncBarrier> barrier;
    if (block > 0)
      barrier = std::make_unique<SyncBarrier>(n * workers, [&] { trainer->sync(); });

    // fixed batch counts so every worker reaches every barrier round
    const long long steps_per_batch =
        (spec.optimization == Optimization::alternating) ? plan.rollout_len : plan.workers.batch_len;
    const long long per_worker =
        (budget + static_cast<long long>(workers) * steps_per_batch - 1) / (workers * steps_per_batch);

    std::vector<std::thread> threads;
    std::vector<std::exception_ptr> errors(static_cast<size_t>(n) * workers);
    std::atomic<int> finished{0};
    for (int i = 0; i < n; ++i)
      for (int w = 0; w < workers; ++w)
        threads.emplace_back([&, i, w] {
          try {
            for (long long b = 0; b < per_worker; ++b) {
              trainer->train_batch(i, *envs[i][w], worker_rngs[i][w], &monitor);
              if (barrier && (b + 1) % block == 0) barrier->arrive_and_wait();
            }
            if (barrier && per_worker % block != 0) barrier->arrive_and_wait();
          } catch (...) {
            errors[static_cast<size_t>(i) * workers + w] = std::current_exception();
          }
          finished.fetch_add(1);
        });

    // evaluation runs on snapshots as tasks cross step thresholds
    const int n_threads = n * workers;
    while (finished.load() < n_threads) {
      for (int i = 0; i < n; ++i) emit_due_evals(i);
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
    for (auto& t : threads) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
    for (int i = 0; i < n; ++i) emit_due_evals(i);
  }

  const auto t_end = std::chrono::steady_clock::now();
  const double secs = std::chrono::duration<double>(t_end - t_start).count();
  record.updates_applied = trainer->updates_applied();
  record.steps_per_second = secs > 0 ? static_cast<double>(monitor.total_steps()) / secs : 0.0;

  record.auc = run_auc(record);
  record.final_score = run_final_score(record, plan.final_window_frac);

  if (artifacts) {
    artifacts->distilled = trainer->distilled_policy();
    artifacts->task_policies.clear();
    for (int i = 0; i < n; ++i) artifacts->task_policies.push_back(trainer->task_policy(i));
    artifacts->tasks = tasks;
  }
  return record;
}

std::vector<RunRecord> run_plan(const ExperimentPlan& plan) {
  if (plan.algorithms.empty() || plan.hyper_grid.empty() || plan.seeds.empty())
    throw std::invalid_argument("run_plan: algorithms, hyper_grid and seeds must be non-empty");
  if (plan.budget_steps_per_task <= 0) throw std::invalid_argument("run_plan: budget must be positive");
  std::vector<RunRecord> records;
  for (const auto& algo : plan.algorithms)
    for (int h = 0; h < static_cast<int>(plan.hyper_grid.size()); ++h)
      for (uint64_t seed : plan.seeds) {
        try {
          records.push_back(run_one(plan, algo, h, seed));
        } catch (const std::exception& e) {
          RunRecord failed;
          failed.algo = algo.label.empty() ? to_string(algo.spec.name) : algo.label;
          failed.hyper_id = h;
          failed.seed = seed;
          failed.complete = false;
          failed.error = e.what();
          records.push_back(std::move(failed));
        }
      }
  return records;
}

HyperSelection select_best_hypers(std::span<const RunRecord> records, std::span<const HyperSetting> grid) {
  std::map<int, std::vector<const RunRecord*>> by_hyper;
  for (const auto& r : records)
    if (r.complete) by_hyper[r.hyper_id].push_back(&r);
  if (by_hyper.empty()) throw std::invalid_argument("select_best_hypers: no complete records");

  int best = -1;
  double best_auc = -std::numeric_limits<double>::infinity();
  for (const auto& [h, runs] : by_hyper) {
    double sum = 0.0;
    int cnt = 0;
    for (const RunRecord* r : runs)
      if (std::isfinite(r->auc)) {
        sum += r->auc;
        ++cnt;
      }
    if (cnt == 0) continue;
    double mean = sum / cnt;
    bool wins = mean > best_auc;
    // ties break toward the larger entropy cost
    if (best >= 0 && mean == best_auc)
      wins = grid[h].entropy_cost > grid[best].entropy_cost;
    if (best < 0 || wins) {
      best = h;
      best_auc = mean;
    }
  }
  if (best < 0) throw std::invalid_argument("select_best_hypers: no record has a finite AUC");

  // aggregated eval curve of the winning setting over tasks and seeds
  std::map<long long, std::vector<double>> pooled;
  for (const RunRecord* r : by_hyper[best])
    for (const auto& task : r->tasks)
      for (const auto& pt : task.points)
        if (std::isfinite(pt.eval_return)) pooled[pt.env_steps].push_back(pt.eval_return);
  HyperSelection out;
  out.hyper_id = best;
  out.setting = grid[best];
  for (const auto& [steps, vals] : pooled) {
    CurvePoint cp;
    cp.env_steps = steps;
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= static_cast<double>(vals.size());
    double var = 0.0;
    for (double v : vals) var += (v - mean) * (v - mean);
    cp.mean_return = mean;
    cp.std_over_tasks = vals.size() > 1 ? std::sqrt(var / static_cast<double>(vals.size())) : 0.0;
    out.curve.push_back(cp);
  }
  return out;
}

}  // namespace distral
