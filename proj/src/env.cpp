#include "tape/env.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tape {

const char* env_kind_name(EnvKind k) {
  switch (k) {
    case EnvKind::IntroGame: return "IntroGame";
    case EnvKind::Easy: return "Easy";
    case EnvKind::Medium: return "Medium";
    case EnvKind::Hard: return "Hard";
    case EnvKind::Foraging: return "Foraging";
    case EnvKind::ContinuousQuadratic: return "ContinuousQuadratic";
  }
  return "?";
}

EnvKind env_kind_from_name(const std::string& name) {
  if (name == "IntroGame") return EnvKind::IntroGame;
  if (name == "Easy") return EnvKind::Easy;
  if (name == "Medium") return EnvKind::Medium;
  if (name == "Hard") return EnvKind::Hard;
  if (name == "Foraging") return EnvKind::Foraging;
  if (name == "ContinuousQuadratic") return EnvKind::ContinuousQuadratic;
  throw ConfigError("unknown env kind '" + name + "'");
}

void EnvDescriptor::validate() const {
  if (n_agents < 2)
    throw ConfigError("EnvDescriptor: n_agents must be >= 2 (got " +
                      std::to_string(n_agents) + ")");
  if (horizon < 1)
    throw ConfigError("EnvDescriptor: horizon must be >= 1 (got " +
                      std::to_string(horizon) + ")");
  if (kind == EnvKind::Foraging) {
    if (rows < 2 || cols < 2)
      throw ConfigError("EnvDescriptor: grid must be at least 2x2");
    if (n_foods < 1) throw ConfigError("EnvDescriptor: n_foods must be >= 1");
    if (time_limit < 1) throw ConfigError("EnvDescriptor: time_limit must be >= 1");
    if (sight < 1) throw ConfigError("EnvDescriptor: sight must be >= 1");
    if (static_cast<long>(rows) * cols < n_agents + n_foods)
      throw ConfigError("EnvDescriptor: grid too small for agents + foods");
  }
  if (payoff_override) {
    std::size_t want = 1;
    for (int c : action_counts) want *= static_cast<std::size_t>(c);
    if (payoff_override->size() != want)
      throw ConfigError("EnvDescriptor: payoff_override must have " +
                        std::to_string(want) + " entries (got " +
                        std::to_string(payoff_override->size()) + ")");
  }
}

EnvDescriptor descriptor_for(EnvKind kind) {
  EnvDescriptor d;
  d.kind = kind;
  switch (kind) {
    case EnvKind::IntroGame:
      d.n_agents = 2;
      d.action_counts = {2, 2};
      d.horizon = 1;
      break;
    case EnvKind::Easy:
    case EnvKind::Medium:
    case EnvKind::Hard:
      d.n_agents = 2;
      d.action_counts = {3, 3};
      d.horizon = 1;
      break;
    case EnvKind::Foraging:
      d.n_agents = 2;
      d.action_counts = {6, 6};
      d.rows = 8;
      d.cols = 8;
      d.n_foods = 3;
      d.coop = true;
      d.time_limit = 25;
      d.horizon = d.time_limit;
      break;
    case EnvKind::ContinuousQuadratic:
      d.n_agents = 3;
      d.action_counts = {};
      d.horizon = 1;
      break;
  }
  return d;
}

// ---------------------------------------------------------------------------
// MatrixGame

MatrixGame::MatrixGame(std::vector<int> action_counts, std::vector<double> payoff)
    : action_counts_(std::move(action_counts)), payoff_(std::move(payoff)) {
  std::size_t want = 1;
  for (int c : action_counts_) {
    if (c < 1) throw ConfigError("MatrixGame: action counts must be positive");
    want *= static_cast<std::size_t>(c);
  }
  if (payoff_.size() != want)
    throw ConfigError("MatrixGame: payoff tensor must be fully populated (" +
                      std::to_string(want) + " entries, got " +
                      std::to_string(payoff_.size()) + ")");
}

std::size_t MatrixGame::joint_count() const { return payoff_.size(); }

std::size_t MatrixGame::joint_index(const JointAction& actions) const {
  if (actions.size() != action_counts_.size())
    throw ContractViolation("MatrixGame: joint action has wrong arity");
  std::size_t idx = 0;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (actions[i] < 0 || actions[i] >= action_counts_[i])
      throw ContractViolation("MatrixGame: action " + std::to_string(actions[i]) +
                              " out of range for agent " + std::to_string(i));
    idx = idx * static_cast<std::size_t>(action_counts_[i]) +
          static_cast<std::size_t>(actions[i]);
  }
  return idx;
}

double MatrixGame::payoff(const JointAction& actions) const {
  return payoff_[joint_index(actions)];
}

double MatrixGame::max_payoff() const {
  return *std::max_element(payoff_.begin(), payoff_.end());
}

StepResult MatrixGame::reset(RngStream& rng) {
  (void)rng;
  done_ = false;
  StepResult r;
  r.state = "s0";
  r.observations.assign(action_counts_.size(), "s0");
  return r;
}

StepResult MatrixGame::step(const JointAction& actions) {
  if (done_) throw ContractViolation("MatrixGame: step after terminal state");
  StepResult r;
  r.reward = payoff(actions);
  r.done = true;
  r.state = "s0";
  r.observations.assign(action_counts_.size(), "s0");
  done_ = true;
  return r;
}

MatrixGame intro_game() {
  return MatrixGame({2, 2}, {2, -4, -1, 0});
}

MatrixGame easy_game() {
  return MatrixGame({3, 3}, {4, -8, -8, -1, 0, 0, -1, 0, 0});
}

MatrixGame medium_game() {
  return MatrixGame({3, 3}, {4, -16, -16, -1, 0, 0, -1, 0, 0});
}

MatrixGame hard_game(double local_optimum) {
  return MatrixGame({3, 3}, {4, -16, -16, -1, local_optimum, 0, -1, 0, 0});
}

MatrixGame matrix_game_for(EnvKind kind, const EnvDescriptor& d) {
  if (d.payoff_override) {
    std::vector<int> counts = d.action_counts;
    if (counts.empty()) counts = descriptor_for(kind).action_counts;
    return MatrixGame(counts, *d.payoff_override);
  }
  switch (kind) {
    case EnvKind::IntroGame: return intro_game();
    case EnvKind::Easy: return easy_game();
    case EnvKind::Medium: return medium_game();
    case EnvKind::Hard: return hard_game();
    default: throw ConfigError("matrix_game_for: not a matrix-game kind");
  }
}

// ---------------------------------------------------------------------------
// ForagingWorld

ForagingWorld::ForagingWorld(int rows, int cols, int n_agents, int n_foods,
                             bool coop, int time_limit, int sight)
    : rows_(rows), cols_(cols), coop_(coop), time_limit_(time_limit), sight_(sight) {
  if (n_agents < 2) throw ConfigError("ForagingWorld: n_agents must be >= 2");
  if (static_cast<long>(rows) * cols < n_agents + n_foods)
    throw ConfigError("ForagingWorld: grid too small for agents + foods");
  action_counts_.assign(n_agents, 6);
  agents_.resize(n_agents);
  foods_.resize(n_foods);
}

void ForagingWorld::place(std::vector<Agent> agents, std::vector<Food> foods) {
  agents_ = std::move(agents);
  foods_ = std::move(foods);
  action_counts_.assign(agents_.size(), 6);
  total_food_level_ = 0.0;
  for (auto& f : foods_) {
    f.collected = false;
    total_food_level_ += f.level;
  }
  t_ = 0;
}

StepResult ForagingWorld::reset(RngStream& rng) {
  // Scatter onto distinct cells via a partial Fisher-Yates shuffle.
  const int cells = rows_ * cols_;
  std::vector<int> order(cells);
  std::iota(order.begin(), order.end(), 0);
  const int need = static_cast<int>(agents_.size() + foods_.size());
  for (int i = 0; i < need; ++i) {
    int j = rng.uniform_int(i, cells - 1);
    std::swap(order[i], order[j]);
  }
  int slot = 0;
  for (auto& a : agents_) {
    a.row = order[slot] / cols_;
    a.col = order[slot] % cols_;
    a.level = 1;
    ++slot;
  }
  total_food_level_ = 0.0;
  const int n = static_cast<int>(agents_.size());
  for (auto& f : foods_) {
    f.row = order[slot] / cols_;
    f.col = order[slot] % cols_;
    f.level = coop_ ? n : 1 + rng.uniform_int(0, n - 1);
    f.collected = false;
    total_food_level_ += f.level;
    ++slot;
  }
  t_ = 0;
  return observe(0.0, false);
}

StepResult ForagingWorld::step(const JointAction& actions) {
  if (actions.size() != agents_.size())
    throw ContractViolation("ForagingWorld: joint action has wrong arity");
  const int n = static_cast<int>(agents_.size());
  // Movement resolution: invalid moves become noop, simultaneous moves into
  // one cell all fail, occupied cells (current positions, foods) block.
  static const int dr[4] = {-1, 1, 0, 0};
  static const int dc[4] = {0, 0, -1, 1};
  std::vector<std::pair<int, int>> want(agents_.size());
  for (int i = 0; i < n; ++i) {
    const auto& a = agents_[i];
    want[i] = {a.row, a.col};
    int act = (actions[i] >= 0 && actions[i] < 6) ? actions[i] : Noop;
    if (act <= Right) {
      int r = a.row + dr[act], c = a.col + dc[act];
      bool blocked = !in_bounds(r, c);
      if (!blocked)
        for (const auto& f : foods_)
          if (!f.collected && f.row == r && f.col == c) { blocked = true; break; }
      if (!blocked)
        for (const auto& other : agents_)
          if (other.row == r && other.col == c) { blocked = true; break; }
      if (!blocked) want[i] = {r, c};
    }
  }
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (want[i] == want[j] && want[i] != std::make_pair(agents_[i].row, agents_[i].col)) {
        want[i] = {agents_[i].row, agents_[i].col};
        want[j] = {agents_[j].row, agents_[j].col};
      }
    }
  }
  for (int i = 0; i < n; ++i) {
    agents_[i].row = want[i].first;
    agents_[i].col = want[i].second;
  }

  // Loading: adjacent loading agents whose level sum reaches the food level
  // collect it; coop additionally requires every agent to participate.
  double reward = 0.0;
  for (auto& f : foods_) {
    if (f.collected) continue;
    int level_sum = 0;
    int loaders = 0;
    for (int i = 0; i < n; ++i) {
      if (actions[i] != Load) continue;
      int dist = std::abs(agents_[i].row - f.row) + std::abs(agents_[i].col - f.col);
      if (dist == 1) {
        level_sum += agents_[i].level;
        ++loaders;
      }
    }
    bool coop_ok = !coop_ || loaders == n;
    if (loaders > 0 && coop_ok && level_sum >= f.level) {
      f.collected = true;
      reward += f.level / total_food_level_;
    }
  }

  ++t_;
  bool all = std::all_of(foods_.begin(), foods_.end(),
                         [](const Food& f) { return f.collected; });
  bool done = all || t_ >= time_limit_;
  return observe(reward, done);
}

ObsKey ForagingWorld::local_view_key(int agent) const {
  const auto& me = agents_[agent];
  std::vector<unsigned char> bytes;
  const int w = 2 * sight_ + 1;
  bytes.reserve(static_cast<std::size_t>(w) * w + 1);
  for (int r = me.row - sight_; r <= me.row + sight_; ++r) {
    for (int c = me.col - sight_; c <= me.col + sight_; ++c) {
      unsigned char b = 0;
      if (!in_bounds(r, c)) {
        b = 0xff;
      } else {
        for (const auto& f : foods_)
          if (!f.collected && f.row == r && f.col == c) b = static_cast<unsigned char>(0x10 + f.level);
        for (const auto& a : agents_)
          if (a.row == r && a.col == c) b = static_cast<unsigned char>(0x40 + a.level);
      }
      bytes.push_back(b);
    }
  }
  bytes.push_back(static_cast<unsigned char>(me.level));
  return "o" + to_hex(fnv1a64(bytes.data(), bytes.size()));
}

StateKey ForagingWorld::state_key() const {
  std::vector<int> ints;
  for (const auto& a : agents_) {
    ints.push_back(a.row);
    ints.push_back(a.col);
    ints.push_back(a.level);
  }
  for (const auto& f : foods_) {
    ints.push_back(f.collected ? -1 : f.row);
    ints.push_back(f.collected ? -1 : f.col);
    ints.push_back(f.level);
  }
  return "g" + to_hex(fnv1a64(ints.data(), ints.size() * sizeof(int)));
}

StepResult ForagingWorld::observe(double reward, bool done) const {
  StepResult r;
  r.reward = reward;
  r.done = done;
  r.state = state_key();
  r.observations.reserve(agents_.size());
  for (std::size_t i = 0; i < agents_.size(); ++i)
    r.observations.push_back(local_view_key(static_cast<int>(i)));
  return r;
}

std::vector<double> ForagingWorld::agent_features(int agent) const {
  const auto& me = agents_[agent];
  std::vector<double> f;
  f.push_back(1.0);
  f.push_back(static_cast<double>(me.row) / rows_);
  f.push_back(static_cast<double>(me.col) / cols_);
  f.push_back(static_cast<double>(me.level));
  for (const auto& food : foods_) {
    f.push_back(food.collected ? 1.0 : 0.0);
    f.push_back(food.collected ? 0.0 : static_cast<double>(food.row - me.row) / rows_);
    f.push_back(food.collected ? 0.0 : static_cast<double>(food.col - me.col) / cols_);
    f.push_back(static_cast<double>(food.level));
    int dist = std::abs(food.row - me.row) + std::abs(food.col - me.col);
    f.push_back(!food.collected && dist == 1 ? 1.0 : 0.0);
  }
  for (std::size_t j = 0; j < agents_.size(); ++j) {
    if (static_cast<int>(j) == agent) continue;
    f.push_back(static_cast<double>(agents_[j].row - me.row) / rows_);
    f.push_back(static_cast<double>(agents_[j].col - me.col) / cols_);
    f.push_back(static_cast<double>(agents_[j].level));
  }
  return f;
}

// ---------------------------------------------------------------------------
// ContinuousQuadratic

double ContinuousQuadratic::reward(std::span<const double> actions) const {
  if (static_cast<int>(actions.size()) != n_)
    throw ContractViolation("ContinuousQuadratic: joint action has wrong arity");
  double s = -goal_;
  for (double a : actions) s += a;
  double r = -s * s;
  for (int i = 0; i + 1 < n_; ++i) {
    double d = actions[i] - actions[i + 1];
    r -= coupling_ * d * d;
  }
  return r;
}

std::unique_ptr<DiscreteEnv> make_env(const EnvDescriptor& d) {
  d.validate();
  switch (d.kind) {
    case EnvKind::IntroGame:
    case EnvKind::Easy:
    case EnvKind::Medium:
    case EnvKind::Hard:
      return std::make_unique<MatrixGame>(matrix_game_for(d.kind, d));
    case EnvKind::Foraging:
      return std::make_unique<ForagingWorld>(d.rows, d.cols, d.n_agents, d.n_foods,
                                             d.coop, d.time_limit, d.sight);
    case EnvKind::ContinuousQuadratic:
      throw ConfigError("make_env: ContinuousQuadratic is not a discrete environment");
  }
  throw ConfigError("make_env: unknown env kind");
}

}  // namespace tape
