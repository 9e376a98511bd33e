#pragma once

#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "distral/mdp.hpp"
#include "distral/rng.hpp"
#include "distral/trajectory.hpp"

namespace distral {

/// Episodic environment over an integer state space. Instances are mutably
/// owned by exactly one worker at a time.
class Env {
 public:
  struct Step {
    int state;        // successor index (terminal index if terminated)
    double reward;
    bool terminated;  // environment ended the episode
    bool truncated;   // step cap hit; state remains valid for bootstrapping
  };

  virtual ~Env() = default;
  virtual int n_states() const = 0;
  virtual int n_actions() const = 0;
  virtual double discount() const = 0;

  /// Starts a new episode and returns its initial state index.
  virtual int reset(Rng& rng) = 0;
  virtual Step step(int action, Rng& rng) = 0;

  virtual int state() const = 0;
  virtual int episode_step() const = 0;

  /// False before the first reset and after a terminated/truncated step.
  virtual bool episode_active() const = 0;

  /// Fresh copy with the same task definition and a reset episode.
  virtual std::unique_ptr<Env> clone() const = 0;
};

/// Simulates a TabularMdp episodically: uniform start over non-terminal
/// states, episodes end on terminal entry or after `max_episode_steps`.
class TabularMdpEnv final : public Env {
 public:
  TabularMdpEnv(TabularMdp mdp, int max_episode_steps = 1000)
      : mdp_(std::move(mdp)), max_episode_steps_(max_episode_steps) {
    for (int s = 0; s < mdp_.n_states(); ++s)
      if (!mdp_.is_terminal(s)) start_states_.push_back(s);
    if (start_states_.empty()) throw std::invalid_argument("TabularMdpEnv: no non-terminal start states");
  }

  int n_states() const override { return mdp_.n_states(); }
  int n_actions() const override { return mdp_.n_actions(); }
  double discount() const override { return mdp_.discount(); }
  const TabularMdp& mdp() const { return mdp_; }

  int reset(Rng& rng) override {
    state_ = start_states_[rng.uniform_int(static_cast<int>(start_states_.size()))];
    t_ = 0;
    active_ = true;
    return state_;
  }

  Step step(int action, Rng& rng) override {
    if (action < 0 || action >= mdp_.n_actions()) throw std::invalid_argument("TabularMdpEnv: invalid action id");
    if (!active_) throw std::logic_error("TabularMdpEnv: step without an active episode");
    auto row = mdp_.transitions(state_, action);
    double u = rng.uniform();
    int next = row.back().next;
    for (const auto& tr : row) {
      u -= tr.prob;
      if (u < 0.0) {
        next = tr.next;
        break;
      }
    }
    double r = mdp_.reward(state_, action);
    state_ = next;
    ++t_;
    bool terminated = mdp_.is_terminal(next);
    bool truncated = !terminated && t_ >= max_episode_steps_;
    if (terminated || truncated) active_ = false;
    return {state_, r, terminated, truncated};
  }

  int state() const override { return state_; }
  int episode_step() const override { return t_; }
  bool episode_active() const override { return active_; }

  std::unique_ptr<Env> clone() const override { return std::make_unique<TabularMdpEnv>(mdp_, max_episode_steps_); }

 private:
  TabularMdp mdp_;
  int max_episode_steps_;
  std::vector<int> start_states_;
  int state_ = 0;
  int t_ = 0;
  bool active_ = false;
};

/// Per-state action distribution used to drive rollouts.
using PolicyFn = std::function<void(int state, std::span<double> probs_out)>;

/// Rolls `n_steps` environment steps under `policy`, resetting on episode
/// end. Continues the episode left open by a previous call on the same env.
Trajectory rollout(Env& env, const PolicyFn& policy, int n_steps, Rng& rng);

/// Runs one full episode under `policy` and returns the undiscounted return.
double run_episode(Env& env, const PolicyFn& policy, Rng& rng);

}  // namespace distral
