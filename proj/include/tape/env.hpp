#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tape/common.hpp"

namespace tape {

enum class EnvKind { IntroGame, Easy, Medium, Hard, Foraging, ContinuousQuadratic };

const char* env_kind_name(EnvKind k);
EnvKind env_kind_from_name(const std::string& name);

struct EnvDescriptor {
  EnvKind kind = EnvKind::IntroGame;
  int n_agents = 2;
  std::vector<int> action_counts;
  int horizon = 1;
  // Foraging parameters.
  int rows = 8, cols = 8;
  int n_foods = 3;
  bool coop = true;
  int time_limit = 25;
  int sight = 2;
  // ContinuousQuadratic parameters.
  double goal = 1.0;
  double coupling = 0.1;
  // Optional replacement payoff tensor (row-major over joint actions).
  std::optional<std::vector<double>> payoff_override;

  void validate() const;  // throws ConfigError naming the violated bound
};

EnvDescriptor descriptor_for(EnvKind kind);

struct StepResult {
  std::vector<ObsKey> observations;
  double reward = 0.0;
  bool done = false;
  StateKey state;
};

/// Discrete-action Dec-POMDP environment. Single writer; parallel rollouts
/// use independent instances with distinct streams.
class DiscreteEnv {
 public:
  virtual ~DiscreteEnv() = default;
  virtual int n_agents() const = 0;
  virtual const std::vector<int>& action_counts() const = 0;
  virtual int max_steps() const = 0;
  virtual StepResult reset(RngStream& rng) = 0;
  virtual StepResult step(const JointAction& actions) = 0;
  /// Per-agent numeric features of the current situation (for linear
  /// learners). Empty when the environment has no feature view.
  virtual std::vector<double> agent_features(int agent) const { (void)agent; return {}; }
};

/// One-step cooperative matrix game with a shared payoff tensor.
class MatrixGame final : public DiscreteEnv {
 public:
  MatrixGame(std::vector<int> action_counts, std::vector<double> payoff);

  int n_agents() const override { return static_cast<int>(action_counts_.size()); }
  const std::vector<int>& action_counts() const override { return action_counts_; }
  int max_steps() const override { return 1; }
  StepResult reset(RngStream& rng) override;
  StepResult step(const JointAction& actions) override;

  double payoff(const JointAction& actions) const;
  double max_payoff() const;
  std::size_t joint_count() const;
  std::size_t joint_index(const JointAction& actions) const;

 private:
  std::vector<int> action_counts_;
  std::vector<double> payoff_;
  bool done_ = true;
};

MatrixGame intro_game();
// Defaults follow the escalation pattern of the one-step games: optimum 4 at
// (a0,a0), miscoordination -1, heavy penalty on agent 0's optimal row, and a
// local optimum at (a1,a1) in the Hard variant.
MatrixGame easy_game();
MatrixGame medium_game();
MatrixGame hard_game(double local_optimum = 1.0);
MatrixGame matrix_game_for(EnvKind kind, const EnvDescriptor& d);

/// Simplified level-based foraging gridworld. Agents move on a grid and
/// collect scattered foods by standing next to them and loading; a food is
/// collected when the adjacent loading agents' level sum reaches the food
/// level (all agents must load when coop is set). Rewards are normalized so
/// collecting everything yields an episodic return of 1.
class ForagingWorld final : public DiscreteEnv {
 public:
  enum Action { Up = 0, Down = 1, Left = 2, Right = 3, Load = 4, Noop = 5 };

  struct Agent {
    int row = 0, col = 0;
    int level = 1;
  };
  struct Food {
    int row = 0, col = 0;
    int level = 1;
    bool collected = false;
  };

  ForagingWorld(int rows, int cols, int n_agents, int n_foods, bool coop,
                int time_limit, int sight = 2);

  int n_agents() const override { return static_cast<int>(agents_.size()); }
  const std::vector<int>& action_counts() const override { return action_counts_; }
  int max_steps() const override { return time_limit_; }
  StepResult reset(RngStream& rng) override;
  StepResult step(const JointAction& actions) override;
  std::vector<double> agent_features(int agent) const override;

  /// Places entities explicitly (test fixtures). Levels and positions are
  /// taken as given; flags and the step counter reset.
  void place(std::vector<Agent> agents, std::vector<Food> foods);

  const std::vector<Agent>& agents() const { return agents_; }
  const std::vector<Food>& foods() const { return foods_; }
  int steps_taken() const { return t_; }

 private:
  StepResult observe(double reward, bool done) const;
  ObsKey local_view_key(int agent) const;
  StateKey state_key() const;
  bool in_bounds(int r, int c) const { return r >= 0 && r < rows_ && c >= 0 && c < cols_; }

  int rows_, cols_;
  bool coop_;
  int time_limit_;
  int sight_;
  std::vector<int> action_counts_;
  std::vector<Agent> agents_;
  std::vector<Food> foods_;
  double total_food_level_ = 0.0;
  int t_ = 0;
};

/// Cooperative one-step continuous game for the deterministic gradient:
/// n agents pick scalar actions, reward = -(sum a_i - goal)^2
/// - coupling * sum_{i<n-1} (a_i - a_{i+1})^2.
class ContinuousQuadratic {
 public:
  ContinuousQuadratic(int n_agents, double goal, double coupling)
      : n_(n_agents), goal_(goal), coupling_(coupling) {
    if (n_agents < 2) throw ConfigError("ContinuousQuadratic: n_agents must be >= 2");
  }

  int n_agents() const { return n_; }
  double goal() const { return goal_; }
  double reward(std::span<const double> actions) const;
  /// Observation features per agent (a constant bias at desk scale).
  std::vector<double> agent_features(int agent) const { (void)agent; return {1.0}; }

 private:
  int n_;
  double goal_;
  double coupling_;
};

/// Factory over discrete environments. Throws ConfigError for unknown or
/// non-discrete kinds.
std::unique_ptr<DiscreteEnv> make_env(const EnvDescriptor& d);

}  // namespace tape
