#pragma once

#include <deque>
#include <iosfwd>
#include <memory>
#include <span>
#include <unordered_map>
#include <vector>

#include "tape/common.hpp"
#include "tape/policy.hpp"

namespace tape {

/// What a critic sees of one situation: the global state key, per-agent
/// table keys (mirroring the observation keys when they differ from the
/// state), and per-agent feature vectors for linear backends.
struct CriticState {
  StateKey key;
  std::vector<ObsKey> agent_keys;  // empty: agents key on the global state
  std::vector<std::vector<double>> features;

  static CriticState keyed(StateKey k) { return CriticState{std::move(k), {}, {}}; }
  const ObsKey& agent_key(int agent) const {
    return agent_keys.empty() ? key : agent_keys[agent];
  }
};

/// Anything that can value a joint action in a state: critics, or the exact
/// payoff of a one-step game in tests.
class JointValueModel {
 public:
  virtual ~JointValueModel() = default;
  virtual double q_tot(const CriticState& s, const JointAction& a) const = 0;
};

struct TransitionRecord {
  StateKey state;
  std::vector<ObsKey> obs;
  JointAction action;
  double reward = 0.0;
  std::vector<double> behavior_probs;  // per agent, in (0,1], at selection time
  std::vector<std::vector<double>> features;   // per agent, optional
  bool critic_on_obs = false;  // key per-agent tables by obs, share one mixer

  CriticState critic_state() const {
    if (critic_on_obs) return CriticState{"g", obs, features};
    return CriticState{state, {}, features};
  }
};

struct Trajectory {
  std::vector<TransitionRecord> steps;

  double undiscounted_return() const {
    double r = 0.0;
    for (const auto& s : steps) r += s.reward;
    return r;
  }
};

/// Bounded FIFO of trajectories.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {}

  void push(Trajectory t) {
    buf_.push_back(std::move(t));
    if (buf_.size() > capacity_) buf_.pop_front();
  }
  std::size_t size() const { return buf_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Trajectory& sample(RngStream& rng) const {
    return buf_[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(buf_.size()) - 1))];
  }
  const Trajectory& at(std::size_t i) const { return buf_[i]; }

 private:
  std::size_t capacity_;
  std::deque<Trajectory> buf_;
};

struct RegressionSample {
  CriticState state;
  JointAction action;
  double target = 0.0;
};

/// Linearly decomposed centralized critic:
///   Q_tot(s,a) = sum_i k_i(s) Q_i(s,a_i) + b(s),   k_i(s) = |w_i(s)| >= 0.
class DecomposedCritic : public JointValueModel {
 public:
  DecomposedCritic(int n_agents, double gamma) : n_agents_(n_agents), gamma_(gamma) {}

  int n_agents() const { return n_agents_; }
  double gamma() const { return gamma_; }

  virtual double local_q(const CriticState& s, int agent, int action) const = 0;
  virtual double mix_weight(const CriticState& s, int agent) const = 0;
  virtual double bias(const CriticState& s) const = 0;

  double q_tot(const CriticState& s, const JointAction& a) const override;
  /// sum_a dist[a] * Q_i(s,a)
  double expected_local(const CriticState& s, int agent, std::span<const double> dist) const;
  /// Appendix-style local form of the aristocrat utility:
  ///   k_j(s) * (Q_j(s,a_j) - sum_a pi_j(a) Q_j(s,a)).
  double aristocrat_local(const CriticState& s, int agent, int action,
                          std::span<const double> dist) const;

  /// One SGD step on the weighted squared error over the samples. Weights are
  /// applied per sample; returns the weighted loss before the step.
  virtual double sgd_step(std::span<const RegressionSample> samples,
                          std::span<const double> weights, double lr) = 0;

  virtual std::unique_ptr<DecomposedCritic> clone() const = 0;

  /// Deterministically ordered parameter vector (finite-difference tests,
  /// checkpoints).
  virtual std::vector<double> get_params() const = 0;
  virtual void set_params(std::span<const double> params) = 0;

  virtual void save(std::ostream& os) const = 0;
  virtual void load(std::istream& is) = 0;

 private:
  int n_agents_;
  double gamma_;
};

/// Tabular backend: exact per-state tables (one-step games, hashed states).
class TabularDecomposedCritic final : public DecomposedCritic {
 public:
  TabularDecomposedCritic(std::vector<int> action_counts, double gamma);

  double local_q(const CriticState& s, int agent, int action) const override;
  double mix_weight(const CriticState& s, int agent) const override;
  double bias(const CriticState& s) const override;
  double sgd_step(std::span<const RegressionSample> samples,
                  std::span<const double> weights, double lr) override;
  std::unique_ptr<DecomposedCritic> clone() const override;
  std::vector<double> get_params() const override;
  void set_params(std::span<const double> params) override;
  void save(std::ostream& os) const override;
  void load(std::istream& is) override;

  /// Direct table access for exact constructions.
  void set_local_q(const StateKey& s, int agent, int action, double v);
  void set_mix_param(const StateKey& s, int agent, double w);
  void set_bias(const StateKey& s, double b);

 private:
  struct MixParams {
    std::vector<double> mix_w;  // k_i = |mix_w[i]|
    double bias = 0.0;
  };
  MixParams& ensure_mix(const StateKey& key);
  std::vector<double>& ensure_q(int agent, const ObsKey& key);

  std::vector<int> action_counts_;
  std::unordered_map<StateKey, MixParams> mix_;
  std::vector<std::unordered_map<ObsKey, std::vector<double>>> q_;  // per agent
};

/// Linear backend: Q_i(s,a) = theta[i][a] . features_i(s); scalar mix
/// parameters and bias.
class LinearDecomposedCritic final : public DecomposedCritic {
 public:
  LinearDecomposedCritic(std::vector<int> action_counts, int feature_dim, double gamma);

  double local_q(const CriticState& s, int agent, int action) const override;
  double mix_weight(const CriticState& s, int agent) const override;
  double bias(const CriticState& s) const override;
  double sgd_step(std::span<const RegressionSample> samples,
                  std::span<const double> weights, double lr) override;
  std::unique_ptr<DecomposedCritic> clone() const override;
  std::vector<double> get_params() const override;
  void set_params(std::span<const double> params) override;
  void save(std::ostream& os) const override;
  void load(std::istream& is) override;

 private:
  std::vector<int> action_counts_;
  int feature_dim_;
  std::vector<std::vector<std::vector<double>>> theta_;  // [agent][action][feature]
  std::vector<double> mix_w_;
  double bias_ = 0.0;
};

/// Centralized joint-action critic (tabular). Backs COMA-style updates.
class JointTabularCritic final : public JointValueModel {
 public:
  JointTabularCritic(std::vector<int> action_counts, double gamma);

  double gamma() const { return gamma_; }
  double q_tot(const CriticState& s, const JointAction& a) const override;
  double sgd_step(std::span<const RegressionSample> samples,
                  std::span<const double> weights, double lr);
  std::unique_ptr<JointTabularCritic> clone() const {
    return std::make_unique<JointTabularCritic>(*this);
  }

 private:
  std::size_t joint_index(const JointAction& a) const;
  std::vector<int> action_counts_;
  double gamma_;
  std::unordered_map<StateKey, std::vector<double>> table_;
};

/// Frozen copy of critic parameters, refreshed every m learner steps.
struct TargetCritic {
  std::unique_ptr<DecomposedCritic> frozen;
  int staleness = 0;

  void refresh(const DecomposedCritic& live) {
    frozen = live.clone();
    staleness = 0;
  }
};

/// Aristocrat utility (definition form): U_j(s,a) = Q_tot(s,a)
/// - sum_{a'} pi_j(a') Q_tot(s,(a',a_{-j})).
double aristocrat_utility(const JointValueModel& q, const CriticState& s,
                          const JointAction& a, int agent,
                          std::span<const double> dist_j);

/// Per-step on-policy targets y^on over a trajectory (terminal bootstrap 0):
///   y_t = Q'(s_t,a_t) + sum_{u>=t} (gamma*lambda)^(u-t)
///         [r_u + gamma Q'(s_{u+1},a_{u+1}) - Q'(s_u,a_u)].
std::vector<double> on_policy_targets(const JointValueModel& target,
                                      const Trajectory& traj, double gamma,
                                      double lambda);

/// Per-step tree-backup targets y^off with corrections weighted by current
/// joint policy probabilities of the stored actions; expected local values
/// enter the bootstrap term. k_steps < 0 means the full remaining length.
std::vector<double> off_policy_targets(const DecomposedCritic& target,
                                       const std::vector<TabularPolicy>& policies,
                                       const Trajectory& traj, double lambda,
                                       int k_steps);

/// One gradient step on kappa*MSE(y_off, Q_tot) + (1-kappa)*MSE(y_on, Q_tot).
/// Returns the loss before the step.
double update_critic(DecomposedCritic& critic,
                     std::span<const RegressionSample> on_batch,
                     std::span<const RegressionSample> off_batch, double kappa,
                     double learning_rate);

}  // namespace tape
