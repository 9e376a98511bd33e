#include "distral/grid.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <set>
#include <stdexcept>

#include "json.hpp"

namespace distral {

namespace {

using nlohmann::json;

constexpr int kDx[kGridActions] = {0, 0, 0, -1, 1};
constexpr int kDy[kGridActions] = {0, -1, 1, 0, 0};

json cells_to_json(const std::vector<Cell>& cells) {
  json arr = json::array();
  for (const Cell& c : cells) arr.push_back({c.x, c.y});
  return arr;
}

std::vector<Cell> cells_from_json(const json& arr) {
  std::vector<Cell> out;
  for (const auto& e : arr) out.push_back({e.at(0).get<int>(), e.at(1).get<int>()});
  return out;
}

}  // namespace

double prev_reward_value(PrevReward r) {
  switch (r) {
    case kPrevStep: return kStepPenalty;
    case kPrevWall: return kWallPenalty;
    case kPrevGoal: return kGoalReward;
    case kPrevNone: default: return std::numeric_limits<double>::quiet_NaN();
  }
}

PrevReward classify_reward(double r) {
  if (r == kStepPenalty) return kPrevStep;
  if (r == kWallPenalty) return kPrevWall;
  if (r == kGoalReward) return kPrevGoal;
  throw std::invalid_argument("classify_reward: reward outside the finite grid reward set");
}

bool GridLayout::is_wall(Cell c) const {
  return std::find(walls.begin(), walls.end(), c) != walls.end();
}

std::vector<Cell> GridLayout::open_cells() const {
  std::vector<Cell> out;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      if (is_open({x, y})) out.push_back({x, y});
  return out;
}

void GridLayout::validate() const {
  if (width <= 0 || height <= 0) throw std::invalid_argument("GridLayout: empty grid");
  for (const Cell& w : walls)
    if (!in_bounds(w)) throw std::invalid_argument("GridLayout: wall out of bounds");

  auto open = open_cells();
  if (open.empty()) throw std::invalid_argument("GridLayout: no open cells");

  // corridor cells must be open and listed once
  std::set<std::pair<int, int>> seen;
  for (const Cell& c : corridor_cells) {
    if (!is_open(c)) throw std::invalid_argument("GridLayout: corridor cell is not open");
    if (!seen.insert({c.x, c.y}).second) throw std::invalid_argument("GridLayout: duplicate corridor cell");
  }
  for (const auto& room : room_cells)
    for (const Cell& c : room) {
      if (!is_open(c)) throw std::invalid_argument("GridLayout: room cell is not open");
      if (seen.count({c.x, c.y})) throw std::invalid_argument("GridLayout: corridor and room cells overlap");
    }

  // all open cells mutually reachable
  std::set<std::pair<int, int>> visited;
  std::deque<Cell> frontier{open.front()};
  visited.insert({open.front().x, open.front().y});
  while (!frontier.empty()) {
    Cell c = frontier.front();
    frontier.pop_front();
    for (int a = 1; a < kGridActions; ++a) {
      Cell n{c.x + kDx[a], c.y + kDy[a]};
      if (is_open(n) && visited.insert({n.x, n.y}).second) frontier.push_back(n);
    }
  }
  if (visited.size() != open.size()) throw std::invalid_argument("GridLayout: open cells are not connected");
}

GridLayout make_two_room_layout(int room_w, int room_h, int corridor_len) {
  if (room_w < 2 || room_h < 2 || corridor_len < 1)
    throw std::invalid_argument("make_two_room_layout: dimensions too small for two rooms and a corridor");
  GridLayout layout;
  layout.width = 2 * room_w + corridor_len;
  layout.height = room_h;
  const int corridor_row = room_h / 2;
  for (int y = 0; y < room_h; ++y) {
    for (int x = room_w; x < room_w + corridor_len; ++x) {
      if (y == corridor_row)
        layout.corridor_cells.push_back({x, y});
      else
        layout.walls.push_back({x, y});
    }
  }
  for (int y = 0; y < room_h; ++y)
    for (int x = 0; x < room_w; ++x) layout.room_cells[0].push_back({x, y});
  for (int y = 0; y < room_h; ++y)
    for (int x = room_w + corridor_len; x < layout.width; ++x) layout.room_cells[1].push_back({x, y});
  layout.validate();
  return layout;
}

GridTask make_two_room_task(uint64_t seed, const TwoRoomParams& params) {
  GridTask task;
  task.layout = make_two_room_layout(params.room_w, params.room_h, params.corridor_len);
  task.discount = params.discount;
  task.max_episode_steps = params.max_episode_steps;
  if (!(task.discount >= 0.0 && task.discount < 1.0))
    throw std::invalid_argument("make_two_room_task: discount must be in [0,1)");
  if (task.max_episode_steps <= 0) throw std::invalid_argument("make_two_room_task: step cap must be positive");
  Rng rng(seed);
  auto open = task.layout.open_cells();
  task.goal = open[rng.uniform_int(static_cast<int>(open.size()))];
  return task;
}

GridStepOutcome grid_step(const GridTask& task, const GridState& state, int action) {
  if (action < 0 || action >= kGridActions) throw std::invalid_argument("grid_step: invalid action id");
  if (!task.layout.is_open(state.position)) throw std::invalid_argument("grid_step: state position is not open");

  Cell target{state.position.x + kDx[action], state.position.y + kDy[action]};
  Cell next = state.position;
  double reward;
  if (action != kStay && !task.layout.is_open(target)) {
    reward = kWallPenalty;
  } else {
    next = target;
    reward = kStepPenalty;
  }
  bool reached_goal = (next == task.goal);
  if (reached_goal) reward = kGoalReward;

  GridStepOutcome out;
  out.state.position = next;
  out.state.prev_action = action;
  out.state.prev_reward = classify_reward(reward);
  out.state.steps = state.steps + 1;
  out.reached_goal = reached_goal;
  out.done = reached_goal || out.state.steps >= task.max_episode_steps;
  out.reward = reward;
  return out;
}

GridState grid_reset(const GridTask& task, Rng& rng) {
  auto open = task.layout.open_cells();
  std::vector<Cell> starts;
  starts.reserve(open.size());
  for (const Cell& c : open)
    if (!(c == task.goal)) starts.push_back(c);
  if (starts.empty()) throw std::invalid_argument("grid_reset: no non-goal start cells");
  GridState s;
  s.position = starts[rng.uniform_int(static_cast<int>(starts.size()))];
  s.prev_action = kNoPrevAction;
  s.prev_reward = kPrevNone;
  s.steps = 0;
  return s;
}

GridStateCodec::GridStateCodec(const GridLayout& layout)
    : cells_(layout.open_cells()), ordinal_(static_cast<size_t>(layout.width) * layout.height, -1), width_(layout.width) {
  for (size_t i = 0; i < cells_.size(); ++i)
    ordinal_[static_cast<size_t>(cells_[i].y) * width_ + cells_[i].x] = static_cast<int>(i);
  n_states_ = static_cast<int>(cells_.size()) * kNumPrevActions * kNumPrevRewards + 1;
}

int GridStateCodec::cell_ordinal(Cell c) const {
  if (c.x < 0 || c.x >= width_ || c.y < 0) return -1;
  size_t idx = static_cast<size_t>(c.y) * width_ + c.x;
  if (idx >= ordinal_.size()) return -1;
  return ordinal_[idx];
}

int GridStateCodec::encode(const GridState& s) const {
  int ord = cell_ordinal(s.position);
  if (ord < 0) throw std::invalid_argument("GridStateCodec: position is not an open cell");
  if (s.prev_action < 0 || s.prev_action >= kNumPrevActions) throw std::invalid_argument("GridStateCodec: bad prev_action");
  return (ord * kNumPrevActions + s.prev_action) * kNumPrevRewards + static_cast<int>(s.prev_reward);
}

GridState GridStateCodec::decode(int index) const {
  if (index < 0 || index >= n_states_ - 1) throw std::invalid_argument("GridStateCodec: index out of range");
  GridState s;
  s.prev_reward = static_cast<PrevReward>(index % kNumPrevRewards);
  index /= kNumPrevRewards;
  s.prev_action = index % kNumPrevActions;
  index /= kNumPrevActions;
  s.position = cells_[index];
  s.steps = 0;
  return s;
}

TabularMdp grid_to_mdp(const GridTask& task, int max_states) {
  GridStateCodec codec(task.layout);
  if (codec.n_states() > max_states) throw std::invalid_argument("grid_to_mdp: state space exceeds the configured cap");
  TabularMdp mdp(codec.n_states(), kGridActions, task.discount);
  const int terminal = codec.terminal_state();
  for (int idx = 0; idx < codec.n_states() - 1; ++idx) {
    GridState s = codec.decode(idx);
    for (int a = 0; a < kGridActions; ++a) {
      GridStepOutcome out = grid_step(task, s, a);
      int next = out.reached_goal ? terminal : codec.encode(out.state);
      mdp.set_transition_row(idx, a, {{next, 1.0}});
      mdp.set_reward(idx, a, out.reward);
    }
  }
  mdp.make_absorbing(terminal);
  return mdp;
}

GridEnv::GridEnv(GridTask task) : task_(std::move(task)), codec_(task_.layout) {
  task_.layout.validate();
  if (!task_.layout.is_open(task_.goal)) throw std::invalid_argument("GridEnv: goal is not an open cell");
}

int GridEnv::reset(Rng& rng) {
  grid_state_ = grid_reset(task_, rng);
  state_index_ = codec_.encode(grid_state_);
  active_ = true;
  return state_index_;
}

Env::Step GridEnv::step(int action, Rng&) {
  if (!active_) throw std::logic_error("GridEnv: step without an active episode");
  GridStepOutcome out = grid_step(task_, grid_state_, action);
  grid_state_ = out.state;
  state_index_ = out.reached_goal ? codec_.terminal_state() : codec_.encode(out.state);
  bool truncated = out.done && !out.reached_goal;
  if (out.done) active_ = false;
  return {state_index_, out.reward, out.reached_goal, truncated};
}

std::string grid_task_to_json(const GridTask& task) {
  json j;
  j["layout"]["width"] = task.layout.width;
  j["layout"]["height"] = task.layout.height;
  j["layout"]["walls"] = cells_to_json(task.layout.walls);
  j["layout"]["corridor"] = cells_to_json(task.layout.corridor_cells);
  j["layout"]["rooms"] = {cells_to_json(task.layout.room_cells[0]), cells_to_json(task.layout.room_cells[1])};
  j["goal"] = {task.goal.x, task.goal.y};
  j["discount"] = task.discount;
  j["max_episode_steps"] = task.max_episode_steps;
  return j.dump(2);
}

GridTask grid_task_from_json(const std::string& text) {
  json j = json::parse(text);
  GridTask task;
  const auto& l = j.at("layout");
  task.layout.width = l.at("width").get<int>();
  task.layout.height = l.at("height").get<int>();
  task.layout.walls = cells_from_json(l.at("walls"));
  task.layout.corridor_cells = cells_from_json(l.at("corridor"));
  task.layout.room_cells[0] = cells_from_json(l.at("rooms").at(0));
  task.layout.room_cells[1] = cells_from_json(l.at("rooms").at(1));
  task.goal = {j.at("goal").at(0).get<int>(), j.at("goal").at(1).get<int>()};
  task.discount = j.at("discount").get<double>();
  task.max_episode_steps = j.at("max_episode_steps").get<int>();
  task.layout.validate();
  if (!task.layout.is_open(task.goal)) throw std::invalid_argument("grid_task_from_json: goal is not an open cell");
  return task;
}

}  // namespace distral
