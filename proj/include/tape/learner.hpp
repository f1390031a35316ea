#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tape/critic.hpp"
#include "tape/env.hpp"
#include "tape/gradients.hpp"
#include "tape/policy.hpp"
#include "tape/search.hpp"
#include "tape/topology.hpp"

namespace tape {

enum class Algorithm { StochasticTAPE, DOP, COMA, DeterministicTAPE };

const char* algorithm_name(Algorithm a);
Algorithm algorithm_from_name(const std::string& name);

enum class CriticKind { Tabular, Linear };
// Tabular critics can key per-agent tables by the global state (one-step
// games) or by each agent's observation key with one shared mixer (hashed
// gridworld states, which rarely recur globally).
enum class CriticScope { State, Obs };
enum class PolicyParam { Direct, Softmax };
// Estimator form: the plain weight form (k_j Q_j of the sampled action) or
// the coalition-utility form with the aristocrat baseline subtracted. Both
// estimate the same gradient; the baseline form has lower variance on
// sparse-reward tasks.
enum class GradientForm { Weight, Aristocrat };

struct LearnerConfig {
  Algorithm algorithm = Algorithm::StochasticTAPE;
  GraphModelConfig topology;  // n is filled from the environment

  int episodes = 10000;
  int parallel_envs = 4;
  double gamma = 0.99;
  double lambda = 0.8;
  double kappa = 0.5;
  double critic_lr = 1e-3;
  double actor_lr = 1e-3;
  int target_sync = 600;  // learner steps between target refreshes
  int critic_steps = 1;   // SGD steps per learner step

  double eps_start = 1.0;
  double eps_final = 0.05;
  double eps_decay_fraction = 0.2;

  int buffer_capacity = 2000;
  int off_batch = 32;  // trajectories sampled for the off-policy loss
  int k_steps = -1;    // tree-backup depth; -1 = trajectory length

  double alpha = 0.0;      // soft-value coefficient (deterministic TAPE)
  double noise_std = 0.2;  // exploration noise (deterministic TAPE)

  CriticKind critic_kind = CriticKind::Tabular;
  CriticScope critic_scope = CriticScope::State;
  PolicyParam policy_param = PolicyParam::Direct;
  GradientForm gradient_form = GradientForm::Weight;

  SearchConfig search;

  void validate() const;  // throws ConfigError naming the violated bound
  double epsilon_at(int episode) const;
};

struct EvalSettings {
  int eval_every = 200;
  int eval_episodes = 100;
};

struct EvalPoint {
  int episode = 0;
  double eval_return_mean = 0.0;
  double eval_return_std = 0.0;
  double loss = 0.0;
};

struct TrainResult {
  std::vector<double> episode_returns;
  std::vector<EvalPoint> eval_points;
  std::vector<TabularPolicy> policies;
  std::vector<LinearDeterministicPolicy> det_policies;
  std::shared_ptr<DecomposedCritic> critic;  // null for COMA/deterministic runs
  EdgeFrequencyLedger search_ledger;
  std::vector<std::uint64_t> topology_hashes;  // one per policy-update step

  /// Mean return of the last (up to) 100 training episodes.
  double final_metric() const;
};

/// Runs the training loop: rollout parallel episodes -> store -> critic
/// update from y_on/y_off -> sample a fresh topology -> policy update ->
/// periodic target sync. Fully reproducible under the seed.
TrainResult train(const LearnerConfig& cfg, const EnvDescriptor& desc,
                  std::uint64_t seed, const EvalSettings& eval = {});

}  // namespace tape
