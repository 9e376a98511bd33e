#pragma once

#include <vector>

namespace distral {

/// Rollout data shared by the tabular and gradient learners. Steps carry the
/// episode-relative index t so discount weights restart at every reset.
struct Trajectory {
  struct Step {
    int state;
    int action;
    double reward;
    int t;  // steps already taken in the episode when the action was chosen
  };

  /// A contiguous run of steps from one episode. `terminated` means the
  /// environment ended the episode (goal state); a segment cut by the step
  /// cap or by the batch boundary is left open and `end_state` is the state
  /// a learner may bootstrap from.
  struct Segment {
    std::vector<Step> steps;
    int end_state = -1;
    bool terminated = false;
  };

  std::vector<Segment> segments;

  size_t n_steps() const {
    size_t n = 0;
    for (const auto& seg : segments) n += seg.steps.size();
    return n;
  }

  double total_reward() const {
    double r = 0.0;
    for (const auto& seg : segments)
      for (const auto& st : seg.steps) r += st.reward;
    return r;
  }
};

}  // namespace distral
