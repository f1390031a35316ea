#include "tape/learner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tape {

const char* algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::StochasticTAPE: return "StochasticTAPE";
    case Algorithm::DOP: return "DOP";
    case Algorithm::COMA: return "COMA";
    case Algorithm::DeterministicTAPE: return "DeterministicTAPE";
  }
  return "?";
}

Algorithm algorithm_from_name(const std::string& name) {
  if (name == "StochasticTAPE") return Algorithm::StochasticTAPE;
  if (name == "DOP") return Algorithm::DOP;
  if (name == "COMA") return Algorithm::COMA;
  if (name == "DeterministicTAPE") return Algorithm::DeterministicTAPE;
  throw ConfigError("unknown algorithm '" + name + "'");
}

void LearnerConfig::validate() const {
  if (episodes < 1) throw ConfigError("LearnerConfig: episodes must be >= 1");
  if (parallel_envs < 1) throw ConfigError("LearnerConfig: parallel_envs must be >= 1");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("LearnerConfig: gamma must be in [0,1]");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("LearnerConfig: lambda must be in [0,1]");
  if (!(kappa >= 0.0 && kappa <= 1.0)) throw ConfigError("LearnerConfig: kappa must be in [0,1]");
  if (critic_lr <= 0.0) throw ConfigError("LearnerConfig: critic_lr must be positive");
  if (actor_lr <= 0.0) throw ConfigError("LearnerConfig: actor_lr must be positive");
  if (target_sync < 1) throw ConfigError("LearnerConfig: target_sync must be >= 1");
  if (critic_steps < 1) throw ConfigError("LearnerConfig: critic_steps must be >= 1");
  if (!(eps_start >= 0.0 && eps_start <= 1.0) || !(eps_final >= 0.0 && eps_final <= 1.0))
    throw ConfigError("LearnerConfig: epsilon bounds must be in [0,1]");
  if (!(eps_decay_fraction >= 0.0 && eps_decay_fraction <= 1.0))
    throw ConfigError("LearnerConfig: eps_decay_fraction must be in [0,1]");
  if (buffer_capacity < 1) throw ConfigError("LearnerConfig: buffer_capacity must be >= 1");
  if (off_batch < 0) throw ConfigError("LearnerConfig: off_batch must be >= 0");
  if (noise_std <= 0.0 && algorithm == Algorithm::DeterministicTAPE)
    throw ConfigError("LearnerConfig: noise_std must be positive");
  if (search.enabled && algorithm != Algorithm::StochasticTAPE)
    throw ConfigError("LearnerConfig: heuristic graph search requires StochasticTAPE");
  if (search.enabled && gradient_form != GradientForm::Weight)
    throw ConfigError("LearnerConfig: heuristic graph search requires the weight gradient form");
  if (search.enabled) search.validate();
}

double LearnerConfig::epsilon_at(int episode) const {
  const double decay_span = eps_decay_fraction * episodes;
  if (decay_span <= 0.0) return eps_final;
  if (episode >= decay_span) return eps_final;
  double frac = episode / decay_span;
  return eps_start + (eps_final - eps_start) * frac;
}

double TrainResult::final_metric() const {
  if (episode_returns.empty()) return 0.0;
  std::size_t take = std::min<std::size_t>(100, episode_returns.size());
  double s = 0.0;
  for (std::size_t i = episode_returns.size() - take; i < episode_returns.size(); ++i)
    s += episode_returns[i];
  return s / static_cast<double>(take);
}

namespace {

int linear_feature_dim(const EnvDescriptor& d) {
  if (d.kind != EnvKind::Foraging)
    throw ConfigError("LearnerConfig: linear critics are only wired for Foraging");
  return 4 + 5 * d.n_foods + 3 * (d.n_agents - 1);
}

Trajectory rollout(DiscreteEnv& env, RngStream& env_rng, RngStream& act_rng,
                   const std::vector<TabularPolicy>& policies, double eps,
                   bool want_features, bool critic_on_obs = false) {
  Trajectory traj;
  StepResult cur = env.reset(env_rng);
  const int n = env.n_agents();
  for (int step = 0; step < env.max_steps() && !cur.done; ++step) {
    TransitionRecord rec;
    rec.state = cur.state;
    rec.obs = cur.observations;
    rec.critic_on_obs = critic_on_obs;
    rec.action.resize(n);
    rec.behavior_probs.resize(n);
    if (want_features) {
      rec.features.resize(n);
      for (int i = 0; i < n; ++i) rec.features[i] = env.agent_features(i);
    }
    for (int i = 0; i < n; ++i) {
      std::vector<double> dist = policies[i].distribution(cur.observations[i], eps);
      double u = act_rng.uniform01();
      double acc = 0.0;
      int a = static_cast<int>(dist.size()) - 1;
      for (std::size_t c = 0; c < dist.size(); ++c) {
        acc += dist[c];
        if (u < acc) {
          a = static_cast<int>(c);
          break;
        }
      }
      rec.action[i] = a;
      rec.behavior_probs[i] = dist[a];
    }
    StepResult next = env.step(rec.action);
    rec.reward = next.reward;
    traj.steps.push_back(std::move(rec));
    cur = std::move(next);
  }
  return traj;
}

struct SoftmaxState {
  // One logits table per agent; probabilities are kept in the TabularPolicy.
  std::vector<std::unordered_map<ObsKey, std::vector<double>>> logits;

  std::vector<double>& row(int agent, const ObsKey& key, int n_actions) {
    auto& tbl = logits[agent];
    auto it = tbl.find(key);
    if (it == tbl.end()) it = tbl.emplace(key, std::vector<double>(n_actions, 0.0)).first;
    return it->second;
  }
};

std::vector<double> softmax(const std::vector<double>& z) {
  double mx = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp(z[i] - mx);
    s += p[i];
  }
  for (double& x : p) x /= s;
  return p;
}

// Logit-space gradient derived from the accumulated probability-space
// estimator G: gz[b] = pi(b) * (G[b] - sum_c pi(c) G[c]).
std::vector<double> softmax_gradient(const std::vector<double>& probs,
                                     const std::vector<double>& g) {
  double mean = 0.0;
  for (std::size_t c = 0; c < g.size(); ++c) mean += probs[c] * g[c];
  std::vector<double> gz(g.size());
  for (std::size_t b = 0; b < g.size(); ++b) gz[b] = probs[b] * (g[b] - mean);
  return gz;
}

class DiscreteTrainer {
 public:
  DiscreteTrainer(const LearnerConfig& cfg, const EnvDescriptor& desc, std::uint64_t seed,
                  const EvalSettings& eval)
      : cfg_(cfg), desc_(desc), eval_(eval), seed_(seed) {}

  TrainResult run() {
    const int n = desc_.n_agents;
    std::vector<std::unique_ptr<DiscreteEnv>> envs;
    for (int w = 0; w < cfg_.parallel_envs; ++w) envs.push_back(make_env(desc_));
    std::unique_ptr<DiscreteEnv> eval_env = make_env(desc_);
    const std::vector<int>& counts = envs[0]->action_counts();

    std::vector<RngStream> env_rng, act_rng;
    for (int w = 0; w < cfg_.parallel_envs; ++w) {
      env_rng.push_back(RngStream::derive(seed_, "env", w));
      act_rng.push_back(RngStream::derive(seed_, "act", w));
    }
    RngStream topo_rng = RngStream::derive(seed_, "topology");
    RngStream off_rng = RngStream::derive(seed_, "offsample");
    RngStream eval_env_rng = RngStream::derive(seed_, "eval-env");
    RngStream eval_act_rng = RngStream::derive(seed_, "eval-act");
    RngStream search_rng = RngStream::derive(seed_, "search");

    TrainResult out;
    out.policies.assign(n, TabularPolicy(0));
    for (int i = 0; i < n; ++i) out.policies[i] = TabularPolicy(counts[i]);
    SoftmaxState sm;
    sm.logits.resize(n);

    const bool want_features = cfg_.critic_kind == CriticKind::Linear;
    std::shared_ptr<DecomposedCritic> critic;
    std::unique_ptr<JointTabularCritic> joint_critic;
    std::unique_ptr<JointTabularCritic> joint_target;
    // The heuristic search scores candidates on a joint-action value table:
    // the additive decomposed form cannot rank coordination between
    // simultaneous action changes.
    std::unique_ptr<JointTabularCritic> search_value;
    TargetCritic target;
    if (cfg_.search.enabled)
      search_value = std::make_unique<JointTabularCritic>(counts, cfg_.gamma);
    if (cfg_.algorithm == Algorithm::COMA) {
      joint_critic = std::make_unique<JointTabularCritic>(counts, cfg_.gamma);
      joint_target = joint_critic->clone();
    } else {
      if (cfg_.critic_kind == CriticKind::Linear)
        critic = std::make_shared<LinearDecomposedCritic>(counts, linear_feature_dim(desc_),
                                                          cfg_.gamma);
      else
        critic = std::make_shared<TabularDecomposedCritic>(counts, cfg_.gamma);
      target.refresh(*critic);
    }

    ReplayBuffer buffer(static_cast<std::size_t>(cfg_.buffer_capacity));
    GraphModelConfig topo_cfg = cfg_.topology;
    topo_cfg.n = n;

    if (cfg_.search.enabled) out.search_ledger = EdgeFrequencyLedger(n);

    int episode = 0;
    int learner_steps = 0;
    int next_eval = eval_.eval_every;
    double last_loss = 0.0;

    while (episode < cfg_.episodes) {
      std::vector<Trajectory> fresh;
      const bool critic_on_obs = cfg_.critic_scope == CriticScope::Obs &&
                                 cfg_.algorithm != Algorithm::COMA;
      for (int w = 0; w < cfg_.parallel_envs && episode < cfg_.episodes; ++w) {
        double eps = cfg_.epsilon_at(episode);
        Trajectory t = rollout(*envs[w], env_rng[w], act_rng[w], out.policies, eps,
                               want_features, critic_on_obs);
        out.episode_returns.push_back(t.undiscounted_return());
        fresh.push_back(std::move(t));
        ++episode;
      }
      for (const auto& t : fresh) buffer.push(t);

      // Critic update.
      for (int cstep = 0; cstep < cfg_.critic_steps; ++cstep) {
        std::vector<RegressionSample> on_samples;
        for (const auto& t : fresh) {
          const JointValueModel& tgt =
              cfg_.algorithm == Algorithm::COMA
                  ? static_cast<const JointValueModel&>(*joint_target)
                  : static_cast<const JointValueModel&>(*target.frozen);
          std::vector<double> y = on_policy_targets(tgt, t, cfg_.gamma, cfg_.lambda);
          for (std::size_t s = 0; s < t.steps.size(); ++s)
            on_samples.push_back({t.steps[s].critic_state(), t.steps[s].action, y[s]});
        }
        if (cfg_.algorithm == Algorithm::COMA) {
          std::vector<double> w(on_samples.size(),
                                on_samples.empty() ? 0.0 : 1.0 / on_samples.size());
          last_loss = joint_critic->sgd_step(on_samples, w, cfg_.critic_lr);
        } else {
          std::vector<RegressionSample> off_samples;
          if (cfg_.off_batch > 0 && buffer.size() > 0) {
            for (int b = 0; b < cfg_.off_batch; ++b) {
              const Trajectory& t = buffer.sample(off_rng);
              std::vector<double> y = off_policy_targets(*target.frozen, out.policies, t,
                                                         cfg_.lambda, cfg_.k_steps);
              for (std::size_t s = 0; s < t.steps.size(); ++s)
                off_samples.push_back({t.steps[s].critic_state(), t.steps[s].action, y[s]});
            }
          }
          last_loss = update_critic(*critic, on_samples, off_samples, cfg_.kappa,
                                    cfg_.critic_lr);
        }
      }
      ++learner_steps;

      // Policy update (fresh on-policy batch; Alg. 1 resamples the topology
      // each step).
      GradientBatch batch = GradientBatch::from_trajectories(fresh);
      if (cfg_.search.enabled) {
        std::vector<RegressionSample> jb;
        for (const auto& t : fresh) {
          std::vector<double> y = on_policy_targets(*search_value, t, cfg_.gamma, cfg_.lambda);
          for (std::size_t s = 0; s < t.steps.size(); ++s)
            jb.push_back({t.steps[s].critic_state(), t.steps[s].action, y[s]});
        }
        std::vector<double> jw(jb.size(), jb.empty() ? 0.0 : 1.0 / jb.size());
        search_value->sgd_step(jb, jw, cfg_.critic_lr);
        update_with_search(batch, buffer, *critic, *search_value, out, counts, sm,
                           topo_cfg, search_rng);
      } else {
        TabularGradient g;
        if (cfg_.algorithm == Algorithm::COMA) {
          g = coma_gradient(batch, *joint_critic, out.policies, counts);
        } else {
          AgentTopology E = cfg_.algorithm == Algorithm::StochasticTAPE
                                ? sample_topology(topo_cfg, topo_rng)
                                : AgentTopology(n);
          out.topology_hashes.push_back(fnv1a64(E.adj.data(), E.adj.size()));
          g = cfg_.gradient_form == GradientForm::Aristocrat
                  ? stochastic_tape_gradient_aristocrat(batch, E, *critic, out.policies,
                                                        counts)
                  : stochastic_tape_gradient(batch, E, *critic, counts);
        }
        apply_gradient(g, batch, out.policies, sm);
      }

      // Periodic target sync (last line of the loop).
      if (learner_steps % cfg_.target_sync == 0) {
        if (cfg_.algorithm == Algorithm::COMA)
          joint_target = joint_critic->clone();
        else
          target.refresh(*critic);
      } else {
        ++target.staleness;
      }

      while (next_eval <= episode) {
        out.eval_points.push_back(evaluate(*eval_env, eval_env_rng, eval_act_rng,
                                           out.policies, next_eval, last_loss));
        next_eval += eval_.eval_every;
      }
    }
    if (out.eval_points.empty() || out.eval_points.back().episode != episode)
      out.eval_points.push_back(evaluate(*eval_env, eval_env_rng, eval_act_rng,
                                         out.policies, episode, last_loss));
    out.critic = critic;
    return out;
  }

 private:
  // Per-key visit counts over the batch: the applied update is the per-key
  // mean of the contributions, so rarely visited keys are not diluted by the
  // batch size. With a single observation key (one-step games) this is the
  // plain batch mean.
  static std::vector<std::unordered_map<ObsKey, double>> key_counts(
      const GradientBatch& batch, int n) {
    std::vector<std::unordered_map<ObsKey, double>> counts(n);
    for (const auto& item : batch.items)
      for (int i = 0; i < n; ++i) counts[i][item.rec->obs[i]] += 1.0;
    return counts;
  }

  void apply_gradient(const TabularGradient& g, const GradientBatch& batch,
                      std::vector<TabularPolicy>& policies, SoftmaxState& sm) {
    const int n = static_cast<int>(policies.size());
    const double total = static_cast<double>(batch.items.size());
    auto counts = key_counts(batch, n);
    for (int i = 0; i < n; ++i) {
      if (cfg_.policy_param == PolicyParam::Direct) {
        PolicyUpdate upd;
        upd.delta = cfg_.actor_lr;
        for (const auto& [key, row] : g[i]) {
          double scale = total / counts[i][key];
          std::vector<double> beta = center(row);
          for (double& b : beta) b *= scale;
          upd.beta.emplace(key, std::move(beta));
        }
        apply_policy_update(policies[i], upd);
      } else {
        for (const auto& [key, row] : g[i]) {
          double scale = total / counts[i][key];
          auto& z = sm.row(i, key, policies[i].n_actions());
          std::vector<double> probs = policies[i].distribution(key, 0.0);
          std::vector<double> gz = softmax_gradient(probs, row);
          for (std::size_t b = 0; b < z.size(); ++b)
            z[b] += cfg_.actor_lr * scale * gz[b];
          policies[i].set_row(key, softmax(z));
        }
      }
    }
  }

  std::unordered_map<ObsKey, std::vector<double>> candidate_rows(
      int agent, const AgentTopology& E, const GradientBatch& batch,
      const DecomposedCritic& critic, const std::vector<TabularPolicy>& policies,
      SoftmaxState& sm, std::span<const int> counts) {
    // One-agent view of the estimator, applied to copies of the rows.
    std::unordered_map<ObsKey, std::vector<double>> g;
    std::vector<double> kq(E.n);
    for (const auto& item : batch.items) {
      const TransitionRecord& rec = *item.rec;
      CriticState cs = rec.critic_state();
      double w_i = 0.0;
      for (int j = 0; j < E.n; ++j)
        if (E.edge(agent, j))
          w_i += critic.mix_weight(cs, j) * critic.local_q(cs, j, rec.action[j]);
      auto& row = g[rec.obs[agent]];
      if (row.empty()) row.assign(counts[agent], 0.0);
      row[rec.action[agent]] += item.weight * w_i / rec.behavior_probs[agent];
    }
    std::unordered_map<ObsKey, double> visits;
    for (const auto& item : batch.items) visits[item.rec->obs[agent]] += 1.0;
    const double total = static_cast<double>(batch.items.size());
    std::unordered_map<ObsKey, std::vector<double>> rows;
    for (const auto& [key, grow] : g) {
      const double scale = total / visits[key];
      if (cfg_.policy_param == PolicyParam::Direct) {
        std::vector<double> v = policies[agent].row_or_uniform(key);
        std::vector<double> beta = center(grow);
        for (std::size_t a = 0; a < v.size(); ++a) v[a] += cfg_.actor_lr * scale * beta[a];
        bool feasible = true;
        double sum = 0.0;
        for (double x : v) {
          if (x < 0.0) feasible = false;
          sum += x;
        }
        if (!(feasible && std::abs(sum - 1.0) <= 1e-12)) v = project_to_simplex(std::move(v));
        rows.emplace(key, std::move(v));
      } else {
        std::vector<double> z = sm.row(agent, key, counts[agent]);
        std::vector<double> probs = policies[agent].distribution(key, 0.0);
        std::vector<double> gz = softmax_gradient(probs, grow);
        for (std::size_t b = 0; b < z.size(); ++b) z[b] += cfg_.actor_lr * scale * gz[b];
        rows.emplace(key, softmax(z));
      }
    }
    return rows;
  }

  void update_with_search(const GradientBatch& batch, const ReplayBuffer& buffer,
                          const DecomposedCritic& critic, const JointValueModel& value,
                          TrainResult& out, std::span<const int> counts, SoftmaxState& sm,
                          const GraphModelConfig& topo_cfg, RngStream& search_rng) {
    const int n = static_cast<int>(out.policies.size());
    std::vector<const TransitionRecord*> eval_states;
    for (int b = 0; b < cfg_.search.eval_batch && buffer.size() > 0; ++b) {
      const Trajectory& t = buffer.sample(search_rng);
      int s = search_rng.uniform_int(0, static_cast<int>(t.steps.size()) - 1);
      eval_states.push_back(&t.steps[s]);
    }
    std::vector<std::unordered_map<ObsKey, std::vector<double>>> chosen(n);
    for (int i = 0; i < n; ++i) {
      auto update_fn = [&](int agent, const AgentTopology& cand) {
        return candidate_rows(agent, cand, batch, critic, out.policies, sm, counts);
      };
      SearchResult res = heuristic_topology_search(i, out.policies, value, update_fn,
                                                   eval_states, topo_cfg, cfg_.search,
                                                   search_rng);
      out.search_ledger.record(res.selected);
      chosen[i] = std::move(res.updated_rows);
      if (cfg_.policy_param == PolicyParam::Softmax) {
        // Refresh the stored logits for the selected candidate.
        auto g = candidate_logit_update(i, res.selected, batch, critic, out.policies, counts);
        for (auto& [key, gz] : g) {
          auto& z = sm.row(i, key, out.policies[i].n_actions());
          for (std::size_t b = 0; b < z.size(); ++b) z[b] += cfg_.actor_lr * gz[b];
        }
      }
    }
    for (int i = 0; i < n; ++i)
      for (auto& [key, row] : chosen[i]) out.policies[i].set_row(key, row);
  }

  std::unordered_map<ObsKey, std::vector<double>> candidate_logit_update(
      int agent, const AgentTopology& E, const GradientBatch& batch,
      const DecomposedCritic& critic, const std::vector<TabularPolicy>& policies,
      std::span<const int> counts) {
    std::unordered_map<ObsKey, std::vector<double>> g;
    for (const auto& item : batch.items) {
      const TransitionRecord& rec = *item.rec;
      CriticState cs = rec.critic_state();
      double w_i = 0.0;
      for (int j = 0; j < E.n; ++j)
        if (E.edge(agent, j))
          w_i += critic.mix_weight(cs, j) * critic.local_q(cs, j, rec.action[j]);
      auto& row = g[rec.obs[agent]];
      if (row.empty()) row.assign(counts[agent], 0.0);
      row[rec.action[agent]] += item.weight * w_i / rec.behavior_probs[agent];
    }
    std::unordered_map<ObsKey, double> visits;
    for (const auto& item : batch.items) visits[item.rec->obs[agent]] += 1.0;
    const double total = static_cast<double>(batch.items.size());
    std::unordered_map<ObsKey, std::vector<double>> out;
    for (const auto& [key, grow] : g) {
      std::vector<double> probs = policies[agent].distribution(key, 0.0);
      std::vector<double> gz = softmax_gradient(probs, grow);
      const double scale = total / visits[key];
      for (double& x : gz) x *= scale;
      out.emplace(key, std::move(gz));
    }
    return out;
  }

  EvalPoint evaluate(DiscreteEnv& env, RngStream& env_rng, RngStream& act_rng,
                     const std::vector<TabularPolicy>& policies, int episode,
                     double loss) {
    std::vector<double> returns;
    returns.reserve(eval_.eval_episodes);
    for (int e = 0; e < eval_.eval_episodes; ++e) {
      Trajectory t = rollout(env, env_rng, act_rng, policies, 0.0, false);
      returns.push_back(t.undiscounted_return());
    }
    EvalPoint p;
    p.episode = episode;
    p.loss = loss;
    if (!returns.empty()) {
      double mean = std::accumulate(returns.begin(), returns.end(), 0.0) /
                    static_cast<double>(returns.size());
      double var = 0.0;
      for (double r : returns) var += (r - mean) * (r - mean);
      var /= static_cast<double>(returns.size());
      p.eval_return_mean = mean;
      p.eval_return_std = std::sqrt(var);
    }
    return p;
  }

  const LearnerConfig& cfg_;
  const EnvDescriptor& desc_;
  const EvalSettings& eval_;
  std::uint64_t seed_;
};

TrainResult train_deterministic(const LearnerConfig& cfg, const EnvDescriptor& desc,
                                std::uint64_t seed, const EvalSettings& eval) {
  ContinuousQuadratic env(desc.n_agents, desc.goal, desc.coupling);
  const int n = desc.n_agents;
  std::vector<RngStream> act_rng;
  for (int w = 0; w < cfg.parallel_envs; ++w)
    act_rng.push_back(RngStream::derive(seed, "act", w));
  RngStream topo_rng = RngStream::derive(seed, "topology");
  RngStream off_rng = RngStream::derive(seed, "offsample");

  TrainResult out;
  out.det_policies.resize(n);
  for (auto& p : out.det_policies) p.weights = {0.0};
  QuadraticActionCritic critic(n);

  std::deque<ContinuousRecord> buffer;
  GraphModelConfig topo_cfg = cfg.topology;
  topo_cfg.n = n;

  int episode = 0;
  int next_eval = eval.eval_every;
  double last_loss = 0.0;

  auto eval_now = [&](int at) {
    std::vector<double> a(n);
    for (int i = 0; i < n; ++i) a[i] = out.det_policies[i].action(env.agent_features(i));
    EvalPoint p;
    p.episode = at;
    p.eval_return_mean = env.reward(a);
    p.eval_return_std = 0.0;
    p.loss = last_loss;
    return p;
  };

  while (episode < cfg.episodes) {
    std::vector<ContinuousRecord> fresh;
    for (int w = 0; w < cfg.parallel_envs && episode < cfg.episodes; ++w) {
      ContinuousRecord rec;
      rec.features.resize(n);
      rec.actions.resize(n);
      for (int i = 0; i < n; ++i) {
        rec.features[i] = env.agent_features(i);
        rec.actions[i] = out.det_policies[i].action(rec.features[i]) +
                         act_rng[w].normal(0.0, cfg.noise_std);
      }
      rec.reward = env.reward(rec.actions);
      out.episode_returns.push_back(rec.reward);
      fresh.push_back(rec);
      ++episode;
    }
    for (const auto& r : fresh) {
      buffer.push_back(r);
      if (buffer.size() > static_cast<std::size_t>(cfg.buffer_capacity)) buffer.pop_front();
    }

    // Replay batch for both critic regression and the policy gradient.
    std::vector<ContinuousRecord> batch;
    const int want = std::max(cfg.off_batch, 1);
    for (int b = 0; b < want; ++b)
      batch.push_back(buffer[static_cast<std::size_t>(
          off_rng.uniform_int(0, static_cast<int>(buffer.size()) - 1))]);
    for (int cstep = 0; cstep < cfg.critic_steps; ++cstep)
      last_loss = critic.sgd_step(batch, cfg.critic_lr);

    AgentTopology E = sample_topology(topo_cfg, topo_rng);
    auto grad = deterministic_tape_gradient(batch, E, critic, out.det_policies, cfg.alpha,
                                            cfg.noise_std);
    for (int i = 0; i < n; ++i)
      for (std::size_t w = 0; w < out.det_policies[i].weights.size(); ++w)
        out.det_policies[i].weights[w] += cfg.actor_lr * grad[i][w];

    while (next_eval <= episode) {
      out.eval_points.push_back(eval_now(next_eval));
      next_eval += eval.eval_every;
    }
  }
  if (out.eval_points.empty() || out.eval_points.back().episode != episode)
    out.eval_points.push_back(eval_now(episode));
  return out;
}

}  // namespace

TrainResult train(const LearnerConfig& cfg, const EnvDescriptor& desc, std::uint64_t seed,
                  const EvalSettings& eval) {
  cfg.validate();
  desc.validate();
  const bool continuous_env = desc.kind == EnvKind::ContinuousQuadratic;
  const bool continuous_algo = cfg.algorithm == Algorithm::DeterministicTAPE;
  if (continuous_env != continuous_algo)
    throw ConfigError(std::string("train: ") + algorithm_name(cfg.algorithm) +
                      " is incompatible with env " + env_kind_name(desc.kind));
  if (continuous_algo) return train_deterministic(cfg, desc, seed, eval);
  DiscreteTrainer trainer(cfg, desc, seed, eval);
  return trainer.run();
}

}  // namespace tape
