#pragma once

#include <span>
#include <unordered_map>
#include <vector>

#include "tape/critic.hpp"
#include "tape/env.hpp"
#include "tape/policy.hpp"
#include "tape/topology.hpp"

namespace tape {

/// Sampled transitions with per-transition weights (empirical visitation
/// standing in for the state distribution). Weights are non-negative and
/// normalized over the batch.
struct GradientBatch {
  struct Item {
    const TransitionRecord* rec;
    double weight;
  };
  std::vector<Item> items;

  static GradientBatch from_trajectories(std::span<const Trajectory> trajs);
};

/// Accumulated tabular gradient: per agent, per observation key, per action.
using TabularGradient = std::vector<std::unordered_map<ObsKey, std::vector<double>>>;

/// Coalition utility: sum_j E[i][j] * U_j.
double coalition_utility(const AgentTopology& E, int agent, std::span<const double> utilities);

/// Exact per-agent action values under the given opponent policies:
/// Q_i(a) = E_{a_-i ~ pi_-i}[payoff].
std::vector<std::vector<double>> individual_q_values(
    const MatrixGame& game, const std::vector<std::vector<double>>& dists);

/// Exact joint-policy value J = sum_a prod_i pi_i(a_i) payoff(a) of a
/// one-step game.
double one_step_value(const MatrixGame& game, const std::vector<std::vector<double>>& dists);

/// The exact payoff of a one-step game as a joint value model.
class PayoffJointValue final : public JointValueModel {
 public:
  explicit PayoffJointValue(const MatrixGame& game) : game_(&game) {}
  double q_tot(const CriticState& s, const JointAction& a) const override {
    (void)s;
    return game_->payoff(a);
  }

 private:
  const MatrixGame* game_;
};

/// Stochastic TAPE estimator (weight form): accumulates, per agent i and
/// sampled (obs,a_i), w * [sum_j E_ij k_j(s) Q_j(s,a_j)] / prob_i(a_i),
/// dividing by the recorded behavior probability. With an edgeless topology
/// this is exactly the DOP estimator.
TabularGradient stochastic_tape_gradient(const GradientBatch& batch,
                                         const AgentTopology& E,
                                         const DecomposedCritic& critic,
                                         std::span<const int> action_counts);

/// Stochastic TAPE estimator (coalition-utility form): the same gradient with
/// the aristocrat baseline retained, evaluated through counterfactuals of a
/// joint value model. Used to check the two forms against each other.
TabularGradient stochastic_tape_gradient_aristocrat(
    const GradientBatch& batch, const AgentTopology& E, const JointValueModel& qtot,
    const std::vector<TabularPolicy>& policies, std::span<const int> action_counts);

/// COMA-style estimator with counterfactual advantage
/// Adv_i = Q_tot(s,a) - sum_a' pi_i(a') Q_tot(s,(a',a_-i)).
TabularGradient coma_gradient(const GradientBatch& batch, const JointValueModel& qtot,
                              const std::vector<TabularPolicy>& policies,
                              std::span<const int> action_counts);

/// Counterfactual advantage for one joint action.
double counterfactual_advantage(const JointValueModel& qtot, const CriticState& s,
                                const JointAction& a, int agent,
                                std::span<const double> dist_i);

/// Monotonic linear mixer (the critic module's mixing layer in closed form).
struct LinearMixer {
  std::vector<double> k;  // non-negative weights
  double b = 0.0;
};

/// Coalition Q: the mixer applied to in-coalition local values, masked
/// entries forced to zero before mixing.
double coalition_q(const AgentTopology& E, int agent, std::span<const double> local_q,
                   const LinearMixer& mixer);

/// Exact expected stochastic-TAPE update directions on a one-step game:
/// for each agent the raw gradient is enumerated over opponents' actions and
/// centered per row (simplex tangency). One shared topology serves all agents.
std::vector<std::vector<double>> exact_tape_update(
    const MatrixGame& game, const std::vector<std::vector<double>>& dists,
    const DecomposedCritic& critic, const AgentTopology& E);

/// Exact least-squares fit of the decomposed critic on a one-step game under
/// the given joint policy (k_i = 1): Q_i(a) = E[R|a_i=a] - E[R], b = E[R].
/// This is the converged critic the policy-improvement machinery assumes.
TabularDecomposedCritic fit_one_step_least_squares(
    const MatrixGame& game, const std::vector<std::vector<double>>& dists,
    const StateKey& state = "s0");

// ---------------------------------------------------------------------------
// Deterministic TAPE (continuous actions, quadratic-in-action local critics)

struct ContinuousRecord {
  std::vector<std::vector<double>> features;  // per agent
  std::vector<double> actions;
  double reward = 0.0;
};

/// Per-agent local critic Q_i(a) = w0 + w1*a + w2*a^2 behind the monotonic
/// linear mixer; differentiable in the action.
class QuadraticActionCritic {
 public:
  explicit QuadraticActionCritic(int n_agents);

  int n_agents() const { return n_; }
  double local_q(int agent, double action) const;
  double dq_da(int agent, double action) const;
  double mix_weight(int agent) const { return std::abs(mix_w_[agent]); }
  double bias() const { return bias_; }
  double q_tot(std::span<const double> actions) const;
  /// Coalition value for agent i under topology E (masked locals zeroed).
  double coalition_value(const AgentTopology& E, int agent,
                         std::span<const double> actions) const;

  double sgd_step(std::span<const ContinuousRecord> batch, double lr);

  std::vector<double> get_params() const;
  void set_params(std::span<const double> params);

 private:
  int n_;
  std::vector<double> w0_, w1_, w2_;
  std::vector<double> mix_w_;
  double bias_ = 0.0;
};

/// Deterministic TAPE gradient: per agent i,
///   mean over batch of  grad_theta pi_i(tau_i) * d/da_i Qhat_co^i(s,a)|_{a_i=pi_i(tau_i)},
/// where Qhat_i = Q_i - alpha * log N(a_i; pi_i(tau_i), noise_std^2). The
/// noise log-density derivative vanishes at the policy mean, where the
/// gradient is evaluated. Out-of-coalition agents are always masked out.
std::vector<std::vector<double>> deterministic_tape_gradient(
    std::span<const ContinuousRecord> batch, const AgentTopology& E,
    const QuadraticActionCritic& critic,
    const std::vector<LinearDeterministicPolicy>& policies, double alpha,
    double noise_std);

}  // namespace tape
