#include "distral/env.hpp"

#include "distral/tabular.hpp"

namespace distral {

Trajectory rollout(Env& env, const PolicyFn& policy, int n_steps, Rng& rng) {
  Trajectory traj;
  std::vector<double> probs(env.n_actions());
  Trajectory::Segment* seg = nullptr;
  for (int i = 0; i < n_steps; ++i) {
    if (!env.episode_active()) {
      env.reset(rng);
      seg = nullptr;
    }
    if (!seg) {
      traj.segments.emplace_back();
      seg = &traj.segments.back();
    }
    int s = env.state();
    int t = env.episode_step();
    policy(s, probs);
    int a = rng.categorical(probs);
    Env::Step st = env.step(a, rng);
    seg->steps.push_back({s, a, st.reward, t});
    seg->end_state = st.state;
    seg->terminated = st.terminated;
    if (st.terminated || st.truncated) seg = nullptr;
  }
  return traj;
}

double run_episode(Env& env, const PolicyFn& policy, Rng& rng) {
  std::vector<double> probs(env.n_actions());
  env.reset(rng);
  double total = 0.0;
  while (env.episode_active()) {
    policy(env.state(), probs);
    int a = rng.categorical(probs);
    Env::Step st = env.step(a, rng);
    total += st.reward;
  }
  return total;
}

}  // namespace distral
