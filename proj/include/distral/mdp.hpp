#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "distral/table.hpp"

namespace distral {

/// One entry of a sparse transition row.
struct Transition {
  int next;
  double prob;
};

/// Finite MDP with sparse transition rows, a dense reward table and a set of
/// terminal (absorbing, zero-reward) states.
class TabularMdp {
 public:
  TabularMdp() = default;
  TabularMdp(int n_states, int n_actions, double discount)
      : n_states_(n_states),
        n_actions_(n_actions),
        discount_(discount),
        rows_(static_cast<size_t>(n_states) * n_actions),
        reward_(n_states, n_actions),
        terminal_(n_states, 0) {
    if (n_states <= 0 || n_actions <= 0) throw std::invalid_argument("TabularMdp: empty state or action space");
    if (!(discount >= 0.0 && discount < 1.0)) throw std::invalid_argument("TabularMdp: discount must be in [0,1)");
  }

  int n_states() const { return n_states_; }
  int n_actions() const { return n_actions_; }
  double discount() const { return discount_; }

  void add_transition(int s, int a, int next, double prob) { rows_[index(s, a)].push_back({next, prob}); }
  void set_transition_row(int s, int a, std::vector<Transition> row) { rows_[index(s, a)] = std::move(row); }
  std::span<const Transition> transitions(int s, int a) const { return rows_[index(s, a)]; }

  double reward(int s, int a) const { return reward_(s, a); }
  void set_reward(int s, int a, double r) { reward_(s, a) = r; }
  const Table& reward_table() const { return reward_; }

  bool is_terminal(int s) const { return terminal_[s] != 0; }
  void set_terminal(int s, bool t = true) { terminal_[s] = t ? 1 : 0; }

  /// Marks `s` absorbing: self-loop under every action with zero reward.
  void make_absorbing(int s) {
    for (int a = 0; a < n_actions_; ++a) {
      set_transition_row(s, a, {{s, 1.0}});
      set_reward(s, a, 0.0);
    }
    set_terminal(s);
  }

  /// Checks that every transition row is a distribution (sum within `tol` of
  /// one, entries nonnegative) and all rewards are finite.
  void validate(double tol = 1e-12) const {
    for (int s = 0; s < n_states_; ++s) {
      for (int a = 0; a < n_actions_; ++a) {
        double sum = 0.0;
        for (const auto& t : rows_[index(s, a)]) {
          if (t.prob < 0.0) throw std::invalid_argument("TabularMdp: negative transition probability");
          if (t.next < 0 || t.next >= n_states_) throw std::invalid_argument("TabularMdp: transition target out of range");
          sum += t.prob;
        }
        if (std::fabs(sum - 1.0) > tol) throw std::invalid_argument("TabularMdp: transition row does not sum to 1");
        if (!std::isfinite(reward_(s, a))) throw std::invalid_argument("TabularMdp: non-finite reward");
      }
    }
  }

  /// Expected value of `v` over the successor distribution of (s, a).
  double expected_next_value(int s, int a, const ValueTable& v) const {
    double e = 0.0;
    for (const auto& t : rows_[index(s, a)]) e += t.prob * v[t.next];
    return e;
  }

 private:
  size_t index(int s, int a) const { return static_cast<size_t>(s) * n_actions_ + a; }

  int n_states_ = 0;
  int n_actions_ = 0;
  double discount_ = 0.0;
  std::vector<std::vector<Transition>> rows_;
  Table reward_;
  std::vector<char> terminal_;
};

}  // namespace distral
