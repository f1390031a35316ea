#include "tape/critic.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace tape {

double DecomposedCritic::q_tot(const CriticState& s, const JointAction& a) const {
  double v = bias(s);
  for (int i = 0; i < n_agents_; ++i) v += mix_weight(s, i) * local_q(s, i, a[i]);
  return v;
}

double DecomposedCritic::expected_local(const CriticState& s, int agent,
                                        std::span<const double> dist) const {
  double v = 0.0;
  for (std::size_t a = 0; a < dist.size(); ++a)
    v += dist[a] * local_q(s, agent, static_cast<int>(a));
  return v;
}

double DecomposedCritic::aristocrat_local(const CriticState& s, int agent, int action,
                                          std::span<const double> dist) const {
  return mix_weight(s, agent) *
         (local_q(s, agent, action) - expected_local(s, agent, dist));
}

// ---------------------------------------------------------------------------
// TabularDecomposedCritic

TabularDecomposedCritic::TabularDecomposedCritic(std::vector<int> action_counts,
                                                 double gamma)
    : DecomposedCritic(static_cast<int>(action_counts.size()), gamma),
      action_counts_(std::move(action_counts)),
      q_(action_counts_.size()) {}

TabularDecomposedCritic::MixParams& TabularDecomposedCritic::ensure_mix(const StateKey& key) {
  auto it = mix_.find(key);
  if (it == mix_.end()) {
    MixParams mp;
    mp.mix_w.assign(action_counts_.size(), 1.0);
    it = mix_.emplace(key, std::move(mp)).first;
  }
  return it->second;
}

std::vector<double>& TabularDecomposedCritic::ensure_q(int agent, const ObsKey& key) {
  auto& tbl = q_[agent];
  auto it = tbl.find(key);
  if (it == tbl.end())
    it = tbl.emplace(key, std::vector<double>(action_counts_[agent], 0.0)).first;
  return it->second;
}

double TabularDecomposedCritic::local_q(const CriticState& s, int agent, int action) const {
  auto it = q_[agent].find(s.agent_key(agent));
  return it == q_[agent].end() ? 0.0 : it->second[action];
}

double TabularDecomposedCritic::mix_weight(const CriticState& s, int agent) const {
  auto it = mix_.find(s.key);
  return it == mix_.end() ? 1.0 : std::abs(it->second.mix_w[agent]);
}

double TabularDecomposedCritic::bias(const CriticState& s) const {
  auto it = mix_.find(s.key);
  return it == mix_.end() ? 0.0 : it->second.bias;
}

double TabularDecomposedCritic::sgd_step(std::span<const RegressionSample> samples,
                                         std::span<const double> weights, double lr) {
  // Batch gradient: predictions use pre-step parameters throughout.
  std::unordered_map<StateKey, MixParams> mix_grad;
  std::vector<std::unordered_map<ObsKey, std::vector<double>>> q_grad(q_.size());
  double loss = 0.0;
  for (std::size_t m = 0; m < samples.size(); ++m) {
    const auto& smp = samples[m];
    const double wt = weights[m];
    MixParams& mp = ensure_mix(smp.state.key);
    double pred = mp.bias;
    for (std::size_t i = 0; i < action_counts_.size(); ++i)
      pred += std::abs(mp.mix_w[i]) *
              ensure_q(static_cast<int>(i), smp.state.agent_key(static_cast<int>(i)))
                  [smp.action[i]];
    const double err = pred - smp.target;
    loss += wt * err * err;
    const double e2 = 2.0 * wt * err;
    auto mg = mix_grad.find(smp.state.key);
    if (mg == mix_grad.end()) {
      MixParams zero;
      zero.mix_w.assign(action_counts_.size(), 0.0);
      mg = mix_grad.emplace(smp.state.key, std::move(zero)).first;
    }
    mg->second.bias += e2;
    for (std::size_t i = 0; i < action_counts_.size(); ++i) {
      const ObsKey& qkey = smp.state.agent_key(static_cast<int>(i));
      const double qv = q_[i][qkey][smp.action[i]];
      double sign = mp.mix_w[i] >= 0.0 ? 1.0 : -1.0;
      mg->second.mix_w[i] += e2 * sign * qv;
      auto& gq = q_grad[i][qkey];
      if (gq.empty()) gq.assign(action_counts_[i], 0.0);
      gq[smp.action[i]] += e2 * std::abs(mp.mix_w[i]);
    }
  }
  for (auto& [key, g] : mix_grad) {
    MixParams& mp = mix_.at(key);
    mp.bias -= lr * g.bias;
    for (std::size_t i = 0; i < mp.mix_w.size(); ++i) mp.mix_w[i] -= lr * g.mix_w[i];
  }
  for (std::size_t i = 0; i < q_grad.size(); ++i)
    for (auto& [key, g] : q_grad[i]) {
      auto& row = q_[i].at(key);
      for (int a = 0; a < action_counts_[i]; ++a) row[a] -= lr * g[a];
    }
  return loss;
}

std::unique_ptr<DecomposedCritic> TabularDecomposedCritic::clone() const {
  return std::make_unique<TabularDecomposedCritic>(*this);
}

std::vector<double> TabularDecomposedCritic::get_params() const {
  std::vector<double> out;
  std::map<StateKey, const MixParams*> mixes;
  for (const auto& [key, mp] : mix_) mixes.emplace(key, &mp);
  for (const auto& [key, mp] : mixes) {
    for (double w : mp->mix_w) out.push_back(w);
    out.push_back(mp->bias);
  }
  for (const auto& agent : q_) {
    std::map<ObsKey, const std::vector<double>*> rows;
    for (const auto& [key, row] : agent) rows.emplace(key, &row);
    for (const auto& [key, row] : rows)
      for (double v : *row) out.push_back(v);
  }
  return out;
}

void TabularDecomposedCritic::set_params(std::span<const double> params) {
  std::size_t pos = 0;
  std::map<StateKey, MixParams*> mixes;
  for (auto& [key, mp] : mix_) mixes.emplace(key, &mp);
  for (auto& [key, mp] : mixes) {
    for (double& w : mp->mix_w) w = params[pos++];
    mp->bias = params[pos++];
  }
  for (auto& agent : q_) {
    std::map<ObsKey, std::vector<double>*> rows;
    for (auto& [key, row] : agent) rows.emplace(key, &row);
    for (auto& [key, row] : rows)
      for (double& v : *row) v = params[pos++];
  }
}

void TabularDecomposedCritic::set_local_q(const StateKey& s, int agent, int action, double v) {
  ensure_q(agent, s)[action] = v;
}
void TabularDecomposedCritic::set_mix_param(const StateKey& s, int agent, double w) {
  ensure_mix(s).mix_w[agent] = w;
}
void TabularDecomposedCritic::set_bias(const StateKey& s, double b) { ensure_mix(s).bias = b; }

void TabularDecomposedCritic::save(std::ostream& os) const {
  std::map<StateKey, const MixParams*> mixes;
  for (const auto& [key, mp] : mix_) mixes.emplace(key, &mp);
  for (const auto& [key, mp] : mixes) {
    for (std::size_t i = 0; i < mp->mix_w.size(); ++i)
      os << "k " << key << ' ' << i << ' ' << format_double_exact(mp->mix_w[i]) << '\n';
    os << "b " << key << ' ' << format_double_exact(mp->bias) << '\n';
  }
  for (std::size_t i = 0; i < q_.size(); ++i) {
    std::map<ObsKey, const std::vector<double>*> rows;
    for (const auto& [key, row] : q_[i]) rows.emplace(key, &row);
    for (const auto& [key, row] : rows)
      for (std::size_t a = 0; a < row->size(); ++a)
        os << "q " << key << ' ' << i << ' ' << a << ' '
           << format_double_exact((*row)[a]) << '\n';
  }
}

void TabularDecomposedCritic::load(std::istream& is) {
  mix_.clear();
  for (auto& agent : q_) agent.clear();
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag, key;
    ls >> tag >> key;
    if (tag == "k") {
      int agent;
      double w;
      ls >> agent >> w;
      ensure_mix(key).mix_w[agent] = w;
    } else if (tag == "b") {
      double b;
      ls >> b;
      ensure_mix(key).bias = b;
    } else if (tag == "q") {
      int agent, action;
      double v;
      ls >> agent >> action >> v;
      ensure_q(agent, key)[action] = v;
    }
  }
}

// ---------------------------------------------------------------------------
// LinearDecomposedCritic

LinearDecomposedCritic::LinearDecomposedCritic(std::vector<int> action_counts,
                                               int feature_dim, double gamma)
    : DecomposedCritic(static_cast<int>(action_counts.size()), gamma),
      action_counts_(std::move(action_counts)),
      feature_dim_(feature_dim) {
  theta_.resize(action_counts_.size());
  for (std::size_t i = 0; i < action_counts_.size(); ++i) {
    theta_[i].resize(action_counts_[i]);
    for (auto& row : theta_[i]) row.assign(feature_dim_, 0.0);
  }
  mix_w_.assign(action_counts_.size(), 1.0);
}

double LinearDecomposedCritic::local_q(const CriticState& s, int agent, int action) const {
  const auto& w = theta_[agent][action];
  const auto& f = s.features[agent];
  double v = 0.0;
  for (std::size_t d = 0; d < w.size() && d < f.size(); ++d) v += w[d] * f[d];
  return v;
}

double LinearDecomposedCritic::mix_weight(const CriticState& s, int agent) const {
  (void)s;
  return std::abs(mix_w_[agent]);
}

double LinearDecomposedCritic::bias(const CriticState& s) const {
  (void)s;
  return bias_;
}

double LinearDecomposedCritic::sgd_step(std::span<const RegressionSample> samples,
                                        std::span<const double> weights, double lr) {
  auto grad_theta = theta_;
  for (auto& agent : grad_theta)
    for (auto& row : agent) std::fill(row.begin(), row.end(), 0.0);
  std::vector<double> grad_w(mix_w_.size(), 0.0);
  double grad_b = 0.0;
  double loss = 0.0;
  for (std::size_t m = 0; m < samples.size(); ++m) {
    const auto& smp = samples[m];
    const double wt = weights[m];
    double pred = bias_;
    std::vector<double> locals(action_counts_.size());
    for (std::size_t i = 0; i < action_counts_.size(); ++i) {
      locals[i] = local_q(smp.state, static_cast<int>(i), smp.action[i]);
      pred += std::abs(mix_w_[i]) * locals[i];
    }
    const double err = pred - smp.target;
    loss += wt * err * err;
    const double e2 = 2.0 * wt * err;
    grad_b += e2;
    for (std::size_t i = 0; i < action_counts_.size(); ++i) {
      double sign = mix_w_[i] >= 0.0 ? 1.0 : -1.0;
      grad_w[i] += e2 * sign * locals[i];
      const auto& f = smp.state.features[i];
      auto& g = grad_theta[i][smp.action[i]];
      const double scale = e2 * std::abs(mix_w_[i]);
      for (std::size_t d = 0; d < g.size() && d < f.size(); ++d) g[d] += scale * f[d];
    }
  }
  bias_ -= lr * grad_b;
  for (std::size_t i = 0; i < mix_w_.size(); ++i) mix_w_[i] -= lr * grad_w[i];
  for (std::size_t i = 0; i < theta_.size(); ++i)
    for (std::size_t a = 0; a < theta_[i].size(); ++a)
      for (int d = 0; d < feature_dim_; ++d) theta_[i][a][d] -= lr * grad_theta[i][a][d];
  return loss;
}

std::unique_ptr<DecomposedCritic> LinearDecomposedCritic::clone() const {
  return std::make_unique<LinearDecomposedCritic>(*this);
}

std::vector<double> LinearDecomposedCritic::get_params() const {
  std::vector<double> out;
  for (double w : mix_w_) out.push_back(w);
  out.push_back(bias_);
  for (const auto& agent : theta_)
    for (const auto& row : agent)
      for (double v : row) out.push_back(v);
  return out;
}

void LinearDecomposedCritic::set_params(std::span<const double> params) {
  std::size_t pos = 0;
  for (double& w : mix_w_) w = params[pos++];
  bias_ = params[pos++];
  for (auto& agent : theta_)
    for (auto& row : agent)
      for (double& v : row) v = params[pos++];
}

void LinearDecomposedCritic::save(std::ostream& os) const {
  for (std::size_t i = 0; i < mix_w_.size(); ++i)
    os << "k lin " << i << ' ' << format_double_exact(mix_w_[i]) << '\n';
  os << "b lin " << format_double_exact(bias_) << '\n';
  for (std::size_t i = 0; i < theta_.size(); ++i)
    for (std::size_t a = 0; a < theta_[i].size(); ++a)
      for (int d = 0; d < feature_dim_; ++d)
        os << "t " << i << ' ' << a << ' ' << d << ' '
           << format_double_exact(theta_[i][a][d]) << '\n';
}

void LinearDecomposedCritic::load(std::istream& is) {
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "k") {
      std::string skip;
      int agent;
      double w;
      ls >> skip >> agent >> w;
      mix_w_[agent] = w;
    } else if (tag == "b") {
      std::string skip;
      ls >> skip >> bias_;
    } else if (tag == "t") {
      int agent, action, dim;
      double v;
      ls >> agent >> action >> dim >> v;
      theta_[agent][action][dim] = v;
    }
  }
}

// ---------------------------------------------------------------------------
// JointTabularCritic

JointTabularCritic::JointTabularCritic(std::vector<int> action_counts, double gamma)
    : action_counts_(std::move(action_counts)), gamma_(gamma) {}

std::size_t JointTabularCritic::joint_index(const JointAction& a) const {
  std::size_t idx = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    idx = idx * static_cast<std::size_t>(action_counts_[i]) + static_cast<std::size_t>(a[i]);
  return idx;
}

double JointTabularCritic::q_tot(const CriticState& s, const JointAction& a) const {
  auto it = table_.find(s.key);
  if (it == table_.end()) return 0.0;
  return it->second[joint_index(a)];
}

double JointTabularCritic::sgd_step(std::span<const RegressionSample> samples,
                                    std::span<const double> weights, double lr) {
  double loss = 0.0;
  std::size_t joint = 1;
  for (int c : action_counts_) joint *= static_cast<std::size_t>(c);
  std::unordered_map<StateKey, std::vector<double>> grads;
  for (std::size_t m = 0; m < samples.size(); ++m) {
    const auto& smp = samples[m];
    auto it = table_.find(smp.state.key);
    if (it == table_.end()) it = table_.emplace(smp.state.key, std::vector<double>(joint, 0.0)).first;
    const double err = it->second[joint_index(smp.action)] - smp.target;
    loss += weights[m] * err * err;
    auto git = grads.find(smp.state.key);
    if (git == grads.end()) git = grads.emplace(smp.state.key, std::vector<double>(joint, 0.0)).first;
    git->second[joint_index(smp.action)] += 2.0 * weights[m] * err;
  }
  for (auto& [key, g] : grads) {
    auto& row = table_.at(key);
    for (std::size_t i = 0; i < row.size(); ++i) row[i] -= lr * g[i];
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Utilities and targets

double aristocrat_utility(const JointValueModel& q, const CriticState& s,
                          const JointAction& a, int agent,
                          std::span<const double> dist_j) {
  double base = q.q_tot(s, a);
  JointAction cf = a;
  double baseline = 0.0;
  for (std::size_t ap = 0; ap < dist_j.size(); ++ap) {
    cf[agent] = static_cast<int>(ap);
    baseline += dist_j[ap] * q.q_tot(s, cf);
  }
  return base - baseline;
}

std::vector<double> on_policy_targets(const JointValueModel& target,
                                      const Trajectory& traj, double gamma,
                                      double lambda) {
  const std::size_t T = traj.steps.size();
  std::vector<double> qt(T + 1, 0.0);
  for (std::size_t t = 0; t < T; ++t)
    qt[t] = target.q_tot(traj.steps[t].critic_state(), traj.steps[t].action);
  std::vector<double> y(T, 0.0);
  double acc = 0.0;
  for (std::size_t t = T; t-- > 0;) {
    double delta = traj.steps[t].reward + gamma * qt[t + 1] - qt[t];
    acc = delta + gamma * lambda * acc;
    y[t] = qt[t] + acc;
  }
  return y;
}

std::vector<double> off_policy_targets(const DecomposedCritic& target,
                                       const std::vector<TabularPolicy>& policies,
                                       const Trajectory& traj, double lambda,
                                       int k_steps) {
  const std::size_t T = traj.steps.size();
  const double gamma = target.gamma();
  std::vector<double> y(T, 0.0);
  // Expected bootstrap value sum_i k_i E_pi[Q'_i] + b per step, and joint
  // policy probabilities of the stored actions, both under current policies.
  std::vector<double> boot(T + 1, 0.0);
  std::vector<double> joint_prob(T, 1.0);
  for (std::size_t t = 0; t < T; ++t) {
    const auto& rec = traj.steps[t];
    CriticState cs = rec.critic_state();
    double v = target.bias(cs);
    for (int i = 0; i < target.n_agents(); ++i) {
      std::vector<double> dist = policies[i].distribution(rec.obs[i], 0.0);
      v += target.mix_weight(cs, i) * target.expected_local(cs, i, dist);
      joint_prob[t] *= policies[i].prob(rec.obs[i], rec.action[i], 0.0);
    }
    boot[t] = v;
  }
  const int k = k_steps < 0 ? static_cast<int>(T) : k_steps;
  for (std::size_t t0 = 0; t0 < T; ++t0) {
    CriticState cs0 = traj.steps[t0].critic_state();
    double q0 = target.q_tot(cs0, traj.steps[t0].action);
    double acc = q0;
    double c = 1.0;
    double gpow = 1.0;
    const std::size_t last = std::min(T, t0 + static_cast<std::size_t>(k));
    for (std::size_t t = t0; t < last; ++t) {
      if (t > t0) {
        c *= lambda * joint_prob[t];
        gpow *= gamma;
      }
      if (c == 0.0) break;
      const auto& rec = traj.steps[t];
      double qt = target.q_tot(rec.critic_state(), rec.action);
      double next_boot = (t + 1 < T) ? boot[t + 1] : 0.0;
      acc += gpow * c * (rec.reward + gamma * next_boot - qt);
    }
    y[t0] = acc;
  }
  return y;
}

double update_critic(DecomposedCritic& critic,
                     std::span<const RegressionSample> on_batch,
                     std::span<const RegressionSample> off_batch, double kappa,
                     double learning_rate) {
  if (!(kappa >= 0.0 && kappa <= 1.0))
    throw ConfigError("update_critic: kappa must be in [0,1]");
  std::vector<RegressionSample> all;
  std::vector<double> weights;
  all.reserve(on_batch.size() + off_batch.size());
  if (!off_batch.empty()) {
    const double w = kappa / static_cast<double>(off_batch.size());
    for (const auto& s : off_batch) {
      all.push_back(s);
      weights.push_back(w);
    }
  }
  if (!on_batch.empty()) {
    const double w = (1.0 - kappa) / static_cast<double>(on_batch.size());
    for (const auto& s : on_batch) {
      all.push_back(s);
      weights.push_back(w);
    }
  }
  if (all.empty()) return 0.0;
  return critic.sgd_step(all, weights, learning_rate);
}

}  // namespace tape
