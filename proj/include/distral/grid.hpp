#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "distral/env.hpp"
#include "distral/mdp.hpp"
#include "distral/rng.hpp"

namespace distral {

// Action ids. The agent can stay put or move in the four cardinal directions.
enum Action : int { kStay = 0, kUp = 1, kDown = 2, kLeft = 3, kRight = 4 };
inline constexpr int kGridActions = 5;

// Reward scheme: a step penalty every time step, an extra wall penalty on a
// bump, and +1 on reaching the goal (the goal reward is not combined with the
// step penalty).
inline constexpr double kStepPenalty = -0.1;
inline constexpr double kWallPenalty = -0.6;  // step penalty plus -0.5 bump
inline constexpr double kGoalReward = 1.0;

/// Previous action observed in the state; kNoPrevAction before the first
/// move of an episode.
inline constexpr int kNoPrevAction = 5;
inline constexpr int kNumPrevActions = 6;

/// Previous reward, discretized to the finite set it can take.
enum PrevReward : int { kPrevNone = 0, kPrevStep = 1, kPrevWall = 2, kPrevGoal = 3 };
inline constexpr int kNumPrevRewards = 4;

double prev_reward_value(PrevReward r);        // NaN for kPrevNone
PrevReward classify_reward(double r);

struct Cell {
  int x = 0;
  int y = 0;
  bool operator==(const Cell&) const = default;
};

/// Two rooms joined by a one-cell-wide corridor. Cells outside the bounds
/// behave like walls (bumping costs the wall penalty, position unchanged).
struct GridLayout {
  int width = 0;
  int height = 0;
  std::vector<Cell> walls;
  std::vector<Cell> corridor_cells;                // ordered left to right
  std::array<std::vector<Cell>, 2> room_cells;

  bool in_bounds(Cell c) const { return c.x >= 0 && c.x < width && c.y >= 0 && c.y < height; }
  bool is_wall(Cell c) const;
  bool is_open(Cell c) const { return in_bounds(c) && !is_wall(c); }

  /// Open cells in row-major order; defines the cell indexing used by the
  /// tabular encoding.
  std::vector<Cell> open_cells() const;

  /// Checks mutual reachability of all open cells and that the corridor and
  /// room listings are disjoint and consistent.
  void validate() const;
};

/// Builds the two-room layout: two room_w x room_h rooms separated by a wall
/// band of `corridor_len` columns that is open only along the middle row.
/// Rejects dimensions too small to form two rooms and a corridor.
GridLayout make_two_room_layout(int room_w = 5, int room_h = 5, int corridor_len = 3);

struct GridState {
  Cell position;
  int prev_action = kNoPrevAction;
  PrevReward prev_reward = kPrevNone;
  int steps = 0;  // elapsed steps this episode; not part of the tabular state
};

struct GridTask {
  GridLayout layout;
  Cell goal;
  double discount = 0.95;
  int max_episode_steps = 100;
};

struct TwoRoomParams {
  int room_w = 5;
  int room_h = 5;
  int corridor_len = 3;
  double discount = 0.95;
  int max_episode_steps = 100;
};

/// Samples a task on the two-room layout with the goal drawn uniformly over
/// open cells. Deterministic given the seed.
GridTask make_two_room_task(uint64_t seed, const TwoRoomParams& params = {});

struct GridStepOutcome {
  GridState state;
  double reward;
  bool done;          // goal reached or step cap hit
  bool reached_goal;
};

/// Deterministic single-step dynamics. Throws on an invalid action id.
GridStepOutcome grid_step(const GridTask& task, const GridState& state, int action);

/// Uniform start over open non-goal cells; prev fields set to none-yet.
GridState grid_reset(const GridTask& task, Rng& rng);

/// Bijection between grid states and dense indices. The tabular state is
/// (open-cell ordinal, prev_action, prev_reward); one extra absorbing index
/// stands for the episode having ended at the goal.
class GridStateCodec {
 public:
  explicit GridStateCodec(const GridLayout& layout);

  int n_states() const { return n_states_; }
  int terminal_state() const { return n_states_ - 1; }

  int encode(const GridState& s) const;
  GridState decode(int index) const;

  int cell_ordinal(Cell c) const;          // -1 for walls
  const std::vector<Cell>& cells() const { return cells_; }

 private:
  std::vector<Cell> cells_;
  std::vector<int> ordinal_;  // width*height lookup, -1 for walls
  int width_;
  int n_states_;
};

/// Exact tabular encoding of a task: deterministic transitions over the
/// codec's state space with an absorbing goal state. Throws if the state
/// space exceeds `max_states`.
TabularMdp grid_to_mdp(const GridTask& task, int max_states = 100000);

/// Episodic environment over the codec's state indices.
class GridEnv final : public Env {
 public:
  explicit GridEnv(GridTask task);

  int n_states() const override { return codec_.n_states(); }
  int n_actions() const override { return kGridActions; }
  double discount() const override { return task_.discount; }
  int reset(Rng& rng) override;
  Step step(int action, Rng& rng) override;
  int state() const override { return state_index_; }
  int episode_step() const override { return grid_state_.steps; }
  bool episode_active() const override { return active_; }
  std::unique_ptr<Env> clone() const override { return std::make_unique<GridEnv>(task_); }

  const GridTask& task() const { return task_; }
  const GridStateCodec& codec() const { return codec_; }

 private:
  GridTask task_;
  GridStateCodec codec_;
  GridState grid_state_;
  int state_index_ = 0;
  bool active_ = false;
};

// JSON round trip for layouts and tasks (lossless).
std::string grid_task_to_json(const GridTask& task);
GridTask grid_task_from_json(const std::string& text);

}  // namespace distral
