#include "tape/gradients.hpp"

#include <cmath>

namespace tape {

GradientBatch GradientBatch::from_trajectories(std::span<const Trajectory> trajs) {
  GradientBatch b;
  std::size_t total = 0;
  for (const auto& t : trajs) total += t.steps.size();
  b.items.reserve(total);
  const double w = total > 0 ? 1.0 / static_cast<double>(total) : 0.0;
  for (const auto& t : trajs)
    for (const auto& rec : t.steps) b.items.push_back({&rec, w});
  return b;
}

double coalition_utility(const AgentTopology& E, int agent, std::span<const double> utilities) {
  if (static_cast<int>(utilities.size()) != E.n)
    throw ContractViolation("coalition_utility: need one utility per agent");
  double u = 0.0;
  for (int j = 0; j < E.n; ++j)
    if (E.edge(agent, j)) u += utilities[j];
  return u;
}

namespace {

// Enumerate joint actions; callback(joint, product weight).
template <typename F>
void for_each_joint(const std::vector<int>& counts,
                    const std::vector<std::vector<double>>& dists, F&& f) {
  JointAction a(counts.size(), 0);
  while (true) {
    double w = 1.0;
    for (std::size_t i = 0; i < a.size(); ++i) w *= dists[i][a[i]];
    f(a, w);
    int pos = static_cast<int>(a.size()) - 1;
    while (pos >= 0) {
      if (++a[pos] < counts[pos]) break;
      a[pos] = 0;
      --pos;
    }
    if (pos < 0) break;
  }
}

}  // namespace

std::vector<std::vector<double>> individual_q_values(
    const MatrixGame& game, const std::vector<std::vector<double>>& dists) {
  const auto& counts = game.action_counts();
  const int n = game.n_agents();
  std::vector<std::vector<double>> q(n);
  for (int i = 0; i < n; ++i) {
    q[i].assign(counts[i], 0.0);
    for (int a = 0; a < counts[i]; ++a) {
      auto fixed = dists;
      fixed[i].assign(counts[i], 0.0);
      fixed[i][a] = 1.0;
      double val = 0.0;
      for_each_joint(counts, fixed,
                     [&](const JointAction& ja, double w) { val += w * game.payoff(ja); });
      q[i][a] = val;
    }
  }
  return q;
}

double one_step_value(const MatrixGame& game, const std::vector<std::vector<double>>& dists) {
  double v = 0.0;
  for_each_joint(game.action_counts(), dists,
                 [&](const JointAction& a, double w) { v += w * game.payoff(a); });
  return v;
}

TabularGradient stochastic_tape_gradient(const GradientBatch& batch,
                                         const AgentTopology& E,
                                         const DecomposedCritic& critic,
                                         std::span<const int> action_counts) {
  const int n = E.n;
  TabularGradient g(n);
  std::vector<double> kq(n);
  for (const auto& item : batch.items) {
    const TransitionRecord& rec = *item.rec;
    CriticState cs = rec.critic_state();
    for (int j = 0; j < n; ++j)
      kq[j] = critic.mix_weight(cs, j) * critic.local_q(cs, j, rec.action[j]);
    for (int i = 0; i < n; ++i) {
      double w_i = 0.0;
      for (int j = 0; j < n; ++j)
        if (E.edge(i, j)) w_i += kq[j];
      auto& row = g[i][rec.obs[i]];
      if (row.empty()) row.assign(action_counts[i], 0.0);
      row[rec.action[i]] += item.weight * w_i / rec.behavior_probs[i];
    }
  }
  return g;
}

TabularGradient stochastic_tape_gradient_aristocrat(
    const GradientBatch& batch, const AgentTopology& E, const JointValueModel& qtot,
    const std::vector<TabularPolicy>& policies, std::span<const int> action_counts) {
  const int n = E.n;
  TabularGradient g(n);
  std::vector<double> util(n);
  for (const auto& item : batch.items) {
    const TransitionRecord& rec = *item.rec;
    CriticState cs = rec.critic_state();
    for (int j = 0; j < n; ++j) {
      std::vector<double> dist = policies[j].distribution(rec.obs[j], 0.0);
      util[j] = aristocrat_utility(qtot, cs, rec.action, j, dist);
    }
    for (int i = 0; i < n; ++i) {
      double w_i = coalition_utility(E, i, util);
      auto& row = g[i][rec.obs[i]];
      if (row.empty()) row.assign(action_counts[i], 0.0);
      row[rec.action[i]] += item.weight * w_i / rec.behavior_probs[i];
    }
  }
  return g;
}

double counterfactual_advantage(const JointValueModel& qtot, const CriticState& s,
                                const JointAction& a, int agent,
                                std::span<const double> dist_i) {
  double base = qtot.q_tot(s, a);
  JointAction cf = a;
  double baseline = 0.0;
  for (std::size_t ap = 0; ap < dist_i.size(); ++ap) {
    cf[agent] = static_cast<int>(ap);
    baseline += dist_i[ap] * qtot.q_tot(s, cf);
  }
  return base - baseline;
}

TabularGradient coma_gradient(const GradientBatch& batch, const JointValueModel& qtot,
                              const std::vector<TabularPolicy>& policies,
                              std::span<const int> action_counts) {
  const int n = static_cast<int>(policies.size());
  TabularGradient g(n);
  for (const auto& item : batch.items) {
    const TransitionRecord& rec = *item.rec;
    CriticState cs = rec.critic_state();
    for (int i = 0; i < n; ++i) {
      std::vector<double> dist = policies[i].distribution(rec.obs[i], 0.0);
      double adv = counterfactual_advantage(qtot, cs, rec.action, i, dist);
      auto& row = g[i][rec.obs[i]];
      if (row.empty()) row.assign(action_counts[i], 0.0);
      row[rec.action[i]] += item.weight * adv / rec.behavior_probs[i];
    }
  }
  return g;
}

double coalition_q(const AgentTopology& E, int agent, std::span<const double> local_q,
                   const LinearMixer& mixer) {
  double v = mixer.b;
  for (int j = 0; j < E.n; ++j)
    if (E.edge(agent, j)) v += mixer.k[j] * local_q[j];
  return v;
}

std::vector<std::vector<double>> exact_tape_update(
    const MatrixGame& game, const std::vector<std::vector<double>>& dists,
    const DecomposedCritic& critic, const AgentTopology& E) {
  const auto& counts = game.action_counts();
  const int n = game.n_agents();
  CriticState cs = CriticState::keyed("s0");
  std::vector<std::vector<double>> beta(n);
  for (int i = 0; i < n; ++i) {
    std::vector<double> raw(counts[i], 0.0);
    for (int a = 0; a < counts[i]; ++a) {
      // E_{a_-i ~ pi_-i}[ sum_j E_ij k_j Q_j(s,a_j) | a_i = a ]
      auto fixed = dists;
      fixed[i].assign(counts[i], 0.0);
      fixed[i][a] = 1.0;
      double val = 0.0;
      for_each_joint(counts, fixed, [&](const JointAction& ja, double w) {
        if (w == 0.0) return;
        double s = 0.0;
        for (int j = 0; j < n; ++j)
          if (E.edge(i, j)) s += critic.mix_weight(cs, j) * critic.local_q(cs, j, ja[j]);
        val += w * s;
      });
      raw[a] = val;
    }
    beta[i] = center(std::move(raw));
  }
  return beta;
}

TabularDecomposedCritic fit_one_step_least_squares(
    const MatrixGame& game, const std::vector<std::vector<double>>& dists,
    const StateKey& state) {
  TabularDecomposedCritic critic(game.action_counts(), 1.0);
  const double mu = one_step_value(game, dists);
  auto locals = individual_q_values(game, dists);
  for (int i = 0; i < game.n_agents(); ++i) {
    critic.set_mix_param(state, i, 1.0);
    for (int a = 0; a < game.action_counts()[i]; ++a)
      critic.set_local_q(state, i, a, locals[i][a] - mu);
  }
  critic.set_bias(state, mu);
  return critic;
}

// ---------------------------------------------------------------------------
// QuadraticActionCritic

QuadraticActionCritic::QuadraticActionCritic(int n_agents)
    : n_(n_agents),
      w0_(n_agents, 0.0),
      w1_(n_agents, 0.0),
      w2_(n_agents, 0.0),
      mix_w_(n_agents, 1.0) {}

double QuadraticActionCritic::local_q(int agent, double action) const {
  return w0_[agent] + w1_[agent] * action + w2_[agent] * action * action;
}

double QuadraticActionCritic::dq_da(int agent, double action) const {
  return w1_[agent] + 2.0 * w2_[agent] * action;
}

double QuadraticActionCritic::q_tot(std::span<const double> actions) const {
  double v = bias_;
  for (int i = 0; i < n_; ++i) v += mix_weight(i) * local_q(i, actions[i]);
  return v;
}

double QuadraticActionCritic::coalition_value(const AgentTopology& E, int agent,
                                              std::span<const double> actions) const {
  double v = bias_;
  for (int j = 0; j < n_; ++j)
    if (E.edge(agent, j)) v += mix_weight(j) * local_q(j, actions[j]);
  return v;
}

double QuadraticActionCritic::sgd_step(std::span<const ContinuousRecord> batch, double lr) {
  if (batch.empty()) return 0.0;
  std::vector<double> g0(n_, 0.0), g1(n_, 0.0), g2(n_, 0.0), gw(n_, 0.0);
  double gb = 0.0;
  double loss = 0.0;
  const double wt = 1.0 / static_cast<double>(batch.size());
  for (const auto& rec : batch) {
    double pred = q_tot(rec.actions);
    double err = pred - rec.reward;
    loss += wt * err * err;
    const double e2 = 2.0 * wt * err;
    gb += e2;
    for (int i = 0; i < n_; ++i) {
      double a = rec.actions[i];
      double sign = mix_w_[i] >= 0.0 ? 1.0 : -1.0;
      gw[i] += e2 * sign * local_q(i, a);
      const double k = mix_weight(i);
      g0[i] += e2 * k;
      g1[i] += e2 * k * a;
      g2[i] += e2 * k * a * a;
    }
  }
  bias_ -= lr * gb;
  for (int i = 0; i < n_; ++i) {
    mix_w_[i] -= lr * gw[i];
    w0_[i] -= lr * g0[i];
    w1_[i] -= lr * g1[i];
    w2_[i] -= lr * g2[i];
  }
  return loss;
}

std::vector<double> QuadraticActionCritic::get_params() const {
  std::vector<double> out;
  for (int i = 0; i < n_; ++i) {
    out.push_back(w0_[i]);
    out.push_back(w1_[i]);
    out.push_back(w2_[i]);
    out.push_back(mix_w_[i]);
  }
  out.push_back(bias_);
  return out;
}

void QuadraticActionCritic::set_params(std::span<const double> params) {
  std::size_t pos = 0;
  for (int i = 0; i < n_; ++i) {
    w0_[i] = params[pos++];
    w1_[i] = params[pos++];
    w2_[i] = params[pos++];
    mix_w_[i] = params[pos++];
  }
  bias_ = params[pos++];
}

std::vector<std::vector<double>> deterministic_tape_gradient(
    std::span<const ContinuousRecord> batch, const AgentTopology& E,
    const QuadraticActionCritic& critic,
    const std::vector<LinearDeterministicPolicy>& policies, double alpha,
    double noise_std) {
  const int n = critic.n_agents();
  std::vector<std::vector<double>> grad(n);
  for (int i = 0; i < n; ++i) grad[i].assign(policies[i].weights.size(), 0.0);
  if (batch.empty()) return grad;
  const double wt = 1.0 / static_cast<double>(batch.size());
  const double inv_var = 1.0 / (noise_std * noise_std);
  for (const auto& rec : batch) {
    for (int i = 0; i < n; ++i) {
      if (!E.edge(i, i)) continue;  // self-edge is mandatory; masked others drop out
      const double mu = policies[i].action(rec.features[i]);
      // d/da [k_i Qhat_i(a)] at a = mu. The soft term -alpha*log N(a;mu,sigma)
      // differentiates to alpha*(a-mu)/sigma^2, zero at the evaluation point.
      double d = critic.mix_weight(i) * critic.dq_da(i, mu) + alpha * (mu - mu) * inv_var;
      for (std::size_t w = 0; w < grad[i].size(); ++w)
        grad[i][w] += wt * d * rec.features[i][w];
    }
  }
  return grad;
}

}  // namespace tape
