#include "tape/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "tape/lab.hpp"
#include "tape/search.hpp"

namespace tape {

namespace fs = std::filesystem;
using nlohmann::json;

static const char* kVersion = "tape-lab 0.1.0";

const char* suite_name(Suite s) {
  switch (s) {
    case Suite::Train: return "train";
    case Suite::Theory: return "theory";
    case Suite::Diversity: return "diversity";
    case Suite::Search: return "search";
  }
  return "?";
}

Suite suite_from_name(const std::string& name) {
  if (name == "train") return Suite::Train;
  if (name == "theory") return Suite::Theory;
  if (name == "diversity") return Suite::Diversity;
  if (name == "search") return Suite::Search;
  throw ConfigError("unknown suite '" + name + "' (expected train|theory|diversity|search)");
}

void ExperimentConfig::validate() const {
  env.validate();
  learner.validate();
  if (seeds.empty()) throw ConfigError("config: at least one seed is required");
  if (eval_every < 1) throw ConfigError("config: eval_every must be >= 1");
  if (eval_episodes < 1) throw ConfigError("config: eval_episodes must be >= 1");
  if (out.empty()) throw ConfigError("config: out directory must be non-empty");
  GraphModelConfig topo = learner.topology;
  topo.n = env.n_agents;
  tape::validate(topo);
}

namespace {

json descriptor_to_json(const EnvDescriptor& d) {
  json j;
  j["kind"] = env_kind_name(d.kind);
  j["n_agents"] = d.n_agents;
  j["horizon"] = d.horizon;
  if (d.kind == EnvKind::Foraging) {
    j["rows"] = d.rows;
    j["cols"] = d.cols;
    j["n_foods"] = d.n_foods;
    j["coop"] = d.coop;
    j["time_limit"] = d.time_limit;
    j["sight"] = d.sight;
  }
  if (d.kind == EnvKind::ContinuousQuadratic) {
    j["goal"] = d.goal;
    j["coupling"] = d.coupling;
  }
  if (d.payoff_override) j["payoff_override"] = *d.payoff_override;
  return j;
}

json learner_to_json(const LearnerConfig& c) {
  json j;
  j["algorithm"] = algorithm_name(c.algorithm);
  j["topology_model"] = graph_model_name(c.topology.model);
  j["p"] = c.topology.p;
  j["ws_k"] = c.topology.ws_k;
  j["ws_beta"] = c.topology.ws_beta;
  j["ba_m"] = c.topology.ba_m;
  j["episodes"] = c.episodes;
  j["parallel_envs"] = c.parallel_envs;
  j["gamma"] = c.gamma;
  j["lambda"] = c.lambda;
  j["kappa"] = c.kappa;
  j["critic_lr"] = c.critic_lr;
  j["actor_lr"] = c.actor_lr;
  j["target_sync"] = c.target_sync;
  j["critic_steps"] = c.critic_steps;
  j["eps_start"] = c.eps_start;
  j["eps_final"] = c.eps_final;
  j["eps_decay_fraction"] = c.eps_decay_fraction;
  j["buffer_capacity"] = c.buffer_capacity;
  j["off_batch"] = c.off_batch;
  j["k_steps"] = c.k_steps;
  j["alpha"] = c.alpha;
  j["noise_std"] = c.noise_std;
  j["critic_kind"] = c.critic_kind == CriticKind::Tabular ? "tabular" : "linear";
  j["critic_scope"] = c.critic_scope == CriticScope::State ? "state" : "obs";
  j["policy_param"] = c.policy_param == PolicyParam::Direct ? "direct" : "softmax";
  j["gradient_form"] = c.gradient_form == GradientForm::Weight ? "weight" : "aristocrat";
  return j;
}

}  // namespace

std::string ExperimentConfig::to_json() const {
  json j;
  j["env"] = descriptor_to_json(env);
  j["learner"] = learner_to_json(learner);
  j["search"] = {{"enabled", learner.search.enabled},
                 {"n_cand", learner.search.n_cand},
                 {"eval_batch", learner.search.eval_batch},
                 {"per_agent", learner.search.per_agent}};
  j["suite"] = suite_name(suite);
  j["seeds"] = seeds;
  j["eval_every"] = eval_every;
  j["eval_episodes"] = eval_episodes;
  j["theory_trials"] = theory_trials;
  j["theory_delta"] = theory_delta;
  j["theory_tolerance"] = theory_tolerance;
  j["variance_samples"] = variance_samples;
  j["variance_p_grid"] = variance_p_grid;
  j["diversity_agents"] = diversity_agents;
  j["diversity_samples"] = diversity_samples;
  j["search_control_samples"] = search_control_samples;
  return j.dump(2);
}

std::string ExperimentConfig::config_hash() const {
  // nlohmann objects keep keys sorted, so the dump is canonical and the hash
  // is stable under field reordering in the source file. The output
  // directory is excluded so relocating results does not change identity.
  json j = json::parse(to_json());
  j.erase("seeds");
  std::string canon = j.dump();
  return to_hex(fnv1a64(canon));
}

namespace {

int line_of_byte(const std::string& text, std::size_t byte) {
  int line = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  return it->get<T>();
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError(origin + ":" + std::to_string(line_of_byte(text, e.byte)) +
                      ": " + e.what());
  }
  ExperimentConfig cfg;
  try {
    if (j.contains("env")) {
      const json& je = j["env"];
      EnvKind kind = env_kind_from_name(get_or<std::string>(je, "kind", "IntroGame"));
      cfg.env = descriptor_for(kind);
      cfg.env.n_agents = get_or(je, "n_agents", cfg.env.n_agents);
      cfg.env.rows = get_or(je, "rows", cfg.env.rows);
      cfg.env.cols = get_or(je, "cols", cfg.env.cols);
      cfg.env.n_foods = get_or(je, "n_foods", cfg.env.n_foods);
      cfg.env.coop = get_or(je, "coop", cfg.env.coop);
      cfg.env.time_limit = get_or(je, "time_limit", cfg.env.time_limit);
      cfg.env.sight = get_or(je, "sight", cfg.env.sight);
      cfg.env.goal = get_or(je, "goal", cfg.env.goal);
      cfg.env.coupling = get_or(je, "coupling", cfg.env.coupling);
      if (kind == EnvKind::Foraging) {
        cfg.env.horizon = cfg.env.time_limit;
        cfg.env.action_counts.assign(cfg.env.n_agents, 6);
      }
      if (je.contains("payoff_override") && !je["payoff_override"].is_null())
        cfg.env.payoff_override = je["payoff_override"].get<std::vector<double>>();
    }
    if (j.contains("learner")) {
      const json& jl = j["learner"];
      LearnerConfig& L = cfg.learner;
      L.algorithm = algorithm_from_name(get_or<std::string>(jl, "algorithm", "StochasticTAPE"));
      L.topology.model =
          graph_model_from_name(get_or<std::string>(jl, "topology_model", "ER"));
      L.topology.p = get_or(jl, "p", L.topology.p);
      L.topology.ws_k = get_or(jl, "ws_k", L.topology.ws_k);
      L.topology.ws_beta = get_or(jl, "ws_beta", L.topology.ws_beta);
      L.topology.ba_m = get_or(jl, "ba_m", L.topology.ba_m);
      L.episodes = get_or(jl, "episodes", L.episodes);
      L.parallel_envs = get_or(jl, "parallel_envs", L.parallel_envs);
      L.gamma = get_or(jl, "gamma", L.gamma);
      L.lambda = get_or(jl, "lambda", L.lambda);
      L.kappa = get_or(jl, "kappa", L.kappa);
      L.critic_lr = get_or(jl, "critic_lr", L.critic_lr);
      L.actor_lr = get_or(jl, "actor_lr", L.actor_lr);
      L.target_sync = get_or(jl, "target_sync", L.target_sync);
      L.critic_steps = get_or(jl, "critic_steps", L.critic_steps);
      L.eps_start = get_or(jl, "eps_start", L.eps_start);
      L.eps_final = get_or(jl, "eps_final", L.eps_final);
      L.eps_decay_fraction = get_or(jl, "eps_decay_fraction", L.eps_decay_fraction);
      L.buffer_capacity = get_or(jl, "buffer_capacity", L.buffer_capacity);
      L.off_batch = get_or(jl, "off_batch", L.off_batch);
      L.k_steps = get_or(jl, "k_steps", L.k_steps);
      L.alpha = get_or(jl, "alpha", L.alpha);
      L.noise_std = get_or(jl, "noise_std", L.noise_std);
      std::string ck = get_or<std::string>(jl, "critic_kind", "tabular");
      if (ck != "tabular" && ck != "linear")
        throw ConfigError("learner.critic_kind must be tabular|linear (got '" + ck + "')");
      L.critic_kind = ck == "tabular" ? CriticKind::Tabular : CriticKind::Linear;
      std::string cs = get_or<std::string>(jl, "critic_scope", "state");
      if (cs != "state" && cs != "obs")
        throw ConfigError("learner.critic_scope must be state|obs (got '" + cs + "')");
      L.critic_scope = cs == "state" ? CriticScope::State : CriticScope::Obs;
      std::string pp = get_or<std::string>(jl, "policy_param", "direct");
      if (pp != "direct" && pp != "softmax")
        throw ConfigError("learner.policy_param must be direct|softmax (got '" + pp + "')");
      L.policy_param = pp == "direct" ? PolicyParam::Direct : PolicyParam::Softmax;
      std::string gf = get_or<std::string>(jl, "gradient_form", "weight");
      if (gf != "weight" && gf != "aristocrat")
        throw ConfigError("learner.gradient_form must be weight|aristocrat (got '" + gf + "')");
      L.gradient_form = gf == "weight" ? GradientForm::Weight : GradientForm::Aristocrat;
    }
    if (j.contains("search")) {
      const json& js = j["search"];
      cfg.learner.search.enabled = get_or(js, "enabled", false);
      cfg.learner.search.n_cand = get_or(js, "n_cand", cfg.learner.search.n_cand);
      cfg.learner.search.eval_batch = get_or(js, "eval_batch", cfg.learner.search.eval_batch);
      cfg.learner.search.per_agent = get_or(js, "per_agent", cfg.learner.search.per_agent);
    }
    cfg.suite = suite_from_name(get_or<std::string>(j, "suite", "train"));
    if (j.contains("seeds")) cfg.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    cfg.eval_every = get_or(j, "eval_every", cfg.eval_every);
    cfg.eval_episodes = get_or(j, "eval_episodes", cfg.eval_episodes);
    cfg.out = get_or<std::string>(j, "out", cfg.out);
    cfg.theory_trials = get_or(j, "theory_trials", cfg.theory_trials);
    cfg.theory_delta = get_or(j, "theory_delta", cfg.theory_delta);
    cfg.theory_tolerance = get_or(j, "theory_tolerance", cfg.theory_tolerance);
    cfg.variance_samples = get_or(j, "variance_samples", cfg.variance_samples);
    if (j.contains("variance_p_grid"))
      cfg.variance_p_grid = j["variance_p_grid"].get<std::vector<double>>();
    cfg.diversity_agents = get_or(j, "diversity_agents", cfg.diversity_agents);
    cfg.diversity_samples = get_or(j, "diversity_samples", cfg.diversity_samples);
    cfg.search_control_samples =
        get_or(j, "search_control_samples", cfg.search_control_samples);
  } catch (const json::exception& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const fs::path& file, const ConfigOverrides& ov) {
  std::ifstream is(file);
  if (!is) throw ConfigError("cannot open config file " + file.string());
  std::stringstream ss;
  ss << is.rdbuf();
  std::string text = ss.str();

  // Apply overrides by patching the parsed config, then re-validate.
  ExperimentConfig cfg = parse_experiment_config(text, file.string());
  if (ov.seed) cfg.seeds = {*ov.seed};
  if (ov.algo) cfg.learner.algorithm = algorithm_from_name(*ov.algo);
  if (ov.env) {
    EnvKind kind = env_kind_from_name(*ov.env);
    EnvDescriptor base = descriptor_for(kind);
    base.coop = cfg.env.coop;
    cfg.env = base;
  }
  if (ov.p) cfg.learner.topology.p = *ov.p;
  if (ov.episodes) cfg.learner.episodes = *ov.episodes;
  if (ov.out) cfg.out = *ov.out;
  if (ov.suite) cfg.suite = suite_from_name(*ov.suite);
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// Manifests

namespace {

std::string now_iso() {
  auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

}  // namespace

void RunManifest::save(const fs::path& file) const {
  json j;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["algorithm"] = algorithm;
  j["env"] = env;
  j["started"] = started;
  j["finished"] = finished;
  j["complete"] = complete;
  j["final_metric"] = final_metric;
  j["artifacts"] = artifacts;
  j["version"] = version;
  std::ofstream os(file);
  os << j.dump(2) << '\n';
}

std::optional<RunManifest> RunManifest::load(const fs::path& file) {
  std::ifstream is(file);
  if (!is) return std::nullopt;
  json j;
  try {
    is >> j;
  } catch (const json::exception&) {
    return std::nullopt;
  }
  RunManifest m;
  m.config_hash = get_or<std::string>(j, "config_hash", "");
  m.seed = get_or<std::uint64_t>(j, "seed", 0);
  m.algorithm = get_or<std::string>(j, "algorithm", "");
  m.env = get_or<std::string>(j, "env", "");
  m.started = get_or<std::string>(j, "started", "");
  m.finished = get_or<std::string>(j, "finished", "");
  m.complete = get_or(j, "complete", false);
  m.final_metric = get_or(j, "final_metric", 0.0);
  if (j.contains("artifacts")) m.artifacts = j["artifacts"].get<std::vector<std::string>>();
  m.version = get_or<std::string>(j, "version", "");
  return m;
}

void write_learning_curve_csv(std::ostream& os, const TrainResult& result,
                              const ExperimentConfig& cfg, std::uint64_t seed) {
  os << "episode,eval_return_mean,eval_return_std,loss,p,seed,algorithm,env\n";
  for (const auto& pt : result.eval_points) {
    os << pt.episode << ',' << format_double(pt.eval_return_mean) << ','
       << format_double(pt.eval_return_std) << ',' << format_double(pt.loss) << ','
       << format_double(cfg.learner.topology.p) << ',' << seed << ','
       << algorithm_name(cfg.learner.algorithm) << ',' << env_kind_name(cfg.env.kind)
       << '\n';
  }
}

// ---------------------------------------------------------------------------
// Suite runners

namespace {

fs::path run_dir_for(const ExperimentConfig& cfg, std::uint64_t seed) {
  return fs::path(cfg.out) /
         (std::string(env_kind_name(cfg.env.kind)) + "-" +
          algorithm_name(cfg.learner.algorithm) + "-" + cfg.config_hash().substr(0, 8) +
          "-s" + std::to_string(seed));
}

int run_train_suite(const ExperimentConfig& cfg) {
  int failures = 0;
  std::vector<std::pair<std::uint64_t, fs::path>> done;
  std::vector<std::thread> workers;
  std::vector<int> results(cfg.seeds.size(), 0);
  for (std::size_t si = 0; si < cfg.seeds.size(); ++si) {
    workers.emplace_back([&, si]() {
      const std::uint64_t seed = cfg.seeds[si];
      fs::path dir = run_dir_for(cfg, seed);
      try {
        if (auto existing = RunManifest::load(dir / "manifest.json");
            existing && existing->complete) {
          return;  // content-addressed: never overwrite a completed run
        }
        fs::create_directories(dir);
        RunManifest man;
        man.config_hash = cfg.config_hash();
        man.seed = seed;
        man.algorithm = algorithm_name(cfg.learner.algorithm);
        man.env = env_kind_name(cfg.env.kind);
        man.started = now_iso();
        man.version = kVersion;
        man.save(dir / "manifest.json");

        EvalSettings ev{cfg.eval_every, cfg.eval_episodes};
        TrainResult res = train(cfg.learner, cfg.env, seed, ev);

        {
          std::ofstream os(dir / "curve.csv");
          write_learning_curve_csv(os, res, cfg, seed);
          man.artifacts.push_back("curve.csv");
        }
        if (!res.policies.empty()) {
          std::ofstream os(dir / "policy.txt");
          save_policies(os, res.policies);
          man.artifacts.push_back("policy.txt");
        }
        if (res.critic) {
          std::ofstream os(dir / "critic.txt");
          res.critic->save(os);
          man.artifacts.push_back("critic.txt");
        }
        if (cfg.learner.search.enabled && res.search_ledger.total() > 0) {
          std::ofstream os(dir / "edge_frequency.csv");
          write_edge_frequency_csv(os, res.search_ledger, cfg.learner.topology.p);
          man.artifacts.push_back("edge_frequency.csv");
        }
        man.final_metric = res.final_metric();
        man.finished = now_iso();
        man.complete = true;
        man.save(dir / "manifest.json");
      } catch (const std::exception& e) {
        std::fprintf(stderr, "seed %llu failed: %s\n",
                     static_cast<unsigned long long>(seed), e.what());
        results[si] = 1;
      }
    });
  }
  for (auto& w : workers) w.join();
  for (int r : results) failures += r;

  // Aggregate CSV across seeds (means of the per-seed eval curves).
  try {
    std::map<int, std::vector<double>> by_episode;
    for (std::uint64_t seed : cfg.seeds) {
      fs::path csv = run_dir_for(cfg, seed) / "curve.csv";
      std::ifstream is(csv);
      if (!is) continue;
      std::string line;
      std::getline(is, line);  // header
      while (std::getline(is, line)) {
        std::istringstream ls(line);
        std::string cell;
        std::getline(ls, cell, ',');
        int episode = std::stoi(cell);
        std::getline(ls, cell, ',');
        by_episode[episode].push_back(std::stod(cell));
      }
    }
    fs::create_directories(cfg.out);
    std::ofstream os(fs::path(cfg.out) /
                     ("aggregate-" + cfg.config_hash().substr(0, 8) + ".csv"));
    os << "episode,mean_eval_return,std_eval_return,seeds,algorithm,env,p\n";
    for (const auto& [episode, vals] : by_episode) {
      double mean = std::accumulate(vals.begin(), vals.end(), 0.0) / vals.size();
      double var = 0.0;
      for (double v : vals) var += (v - mean) * (v - mean);
      var /= vals.size();
      os << episode << ',' << format_double(mean) << ',' << format_double(std::sqrt(var))
         << ',' << vals.size() << ',' << algorithm_name(cfg.learner.algorithm) << ','
         << env_kind_name(cfg.env.kind) << ',' << format_double(cfg.learner.topology.p)
         << '\n';
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "aggregate failed: %s\n", e.what());
    ++failures;
  }
  return failures;
}

int run_theory_suite(const ExperimentConfig& cfg) {
  fs::path dir = run_dir_for(cfg, cfg.seeds[0]);
  fs::create_directories(dir);
  RngStream rng = RngStream::derive(cfg.seeds[0], "theory");
  std::ostringstream summary;
  bool all_ok = true;

  struct GameCase {
    const char* name;
    MatrixGame game;
  };
  std::vector<GameCase> games;
  games.push_back({"IntroGame", intro_game()});
  games.push_back({"Easy", easy_game()});
  games.push_back({"Medium", medium_game()});
  games.push_back({"Hard", hard_game()});

  std::ofstream improvement_csv(dir / "improvement.csv");
  improvement_csv << "game,instance,value_before,value_after,delta,pass\n";
  for (auto& gc : games) {
    ImprovementSuite suite =
        verify_policy_improvement(gc.game, cfg.theory_trials, cfg.theory_delta,
                                  cfg.theory_tolerance, cfg.learner.topology.p, rng);
    int passes = 0;
    for (const auto& r : suite.reports) {
      if (r.pass) ++passes;
      improvement_csv << gc.name << ',' << r.instance << ','
                      << format_double(r.value_before) << ','
                      << format_double(r.value_after) << ',' << format_double(r.delta)
                      << ',' << (r.pass ? 1 : 0) << '\n';
    }
    bool ok = suite.all_pass();
    all_ok = all_ok && ok;
    summary << (ok ? "PASS" : "FAIL") << " policy-improvement " << gc.name << ": "
            << passes << "/" << suite.reports.size() << " improved, monotone "
            << suite.monotone_passes << "/" << suite.monotone_checks
            << ", negative control "
            << (suite.negative_control_failed ? "rejected" : "NOT rejected") << '\n';
  }

  // Lemma 2 fuzz: random sorted pairs with centered second sequence.
  {
    int ok_count = 0;
    const int trials = 100000;
    for (int t = 0; t < trials; ++t) {
      int len = rng.uniform_int(2, 6);
      std::vector<double> a(len), b(len);
      for (double& x : a) x = rng.normal(0.0, 1.0);
      for (double& x : b) x = rng.normal(0.0, 1.0);
      double mean = std::accumulate(b.begin(), b.end(), 0.0) / len;
      for (double& x : b) x -= mean;
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      if (weighted_sum_check(a, b)) ++ok_count;
    }
    bool ok = ok_count == trials;
    all_ok = all_ok && ok;
    summary << (ok ? "PASS" : "FAIL") << " weighted-sum lemma: " << ok_count << "/"
            << trials << '\n';
  }

  // Theorem 2 variance study on the intro game.
  {
    VarianceReport rep = estimate_update_variance(intro_game(), cfg.variance_p_grid,
                                                  cfg.variance_samples, rng);
    std::ofstream os(dir / "variance.csv");
    os << "p,var_tape,var_dop,delta,se_delta,direct_delta,se_direct\n";
    for (const auto& pt : rep.points)
      os << format_double(pt.p) << ',' << format_double(pt.var_tape) << ','
         << format_double(pt.var_dop) << ',' << format_double(pt.delta) << ','
         << format_double(pt.se_delta) << ',' << format_double(pt.direct_delta) << ','
         << format_double(pt.se_direct) << '\n';
    bool slope_ok = rep.slope && *rep.slope >= 1.7 && *rep.slope <= 2.3;
    all_ok = all_ok && rep.dominance_ok && rep.decomposition_ok && slope_ok;
    summary << (rep.dominance_ok ? "PASS" : "FAIL") << " variance dominance\n";
    summary << (rep.decomposition_ok ? "PASS" : "FAIL") << " variance decomposition\n";
    summary << (slope_ok ? "PASS" : "FAIL") << " variance log-log slope = "
            << (rep.slope ? format_double(*rep.slope) : std::string("undefined")) << '\n';
  }

  std::ofstream sm(dir / "summary.txt");
  sm << summary.str();

  RunManifest man;
  man.config_hash = cfg.config_hash();
  man.seed = cfg.seeds[0];
  man.algorithm = "theory";
  man.env = "matrix-games";
  man.started = man.finished = now_iso();
  man.complete = true;
  man.artifacts = {"improvement.csv", "variance.csv", "summary.txt"};
  man.version = kVersion;
  man.save(dir / "manifest.json");
  std::printf("%s", summary.str().c_str());
  return all_ok ? 0 : 1;
}

int run_diversity_suite(const ExperimentConfig& cfg) {
  fs::path dir = run_dir_for(cfg, cfg.seeds[0]);
  fs::create_directories(dir);
  RngStream rng = RngStream::derive(cfg.seeds[0], "diversity");
  std::vector<GraphModelConfig> models;
  for (GraphModel m : {GraphModel::Edgeless, GraphModel::FullyConnected, GraphModel::ER,
                       GraphModel::WS, GraphModel::BA}) {
    GraphModelConfig c = cfg.learner.topology;
    c.model = m;
    if (m == GraphModel::ER) c.p = 0.5;
    models.push_back(c);
  }
  auto reports = topology_diversity_report(models, cfg.diversity_agents,
                                           cfg.diversity_samples, rng);
  std::ofstream scatter(dir / "diversity_scatter.csv");
  scatter << "model,sample,average_degree,connectivity\n";
  std::ofstream stats(dir / "diversity_stats.csv");
  stats << "model,std_average_degree,std_connectivity\n";
  for (const auto& rep : reports) {
    for (std::size_t s = 0; s < rep.samples.size(); ++s)
      scatter << rep.model << ',' << s << ',' << format_double(rep.samples[s].average_degree)
              << ',' << rep.samples[s].connectivity << '\n';
    stats << rep.model << ',' << format_double(rep.std_average_degree) << ','
          << format_double(rep.std_connectivity) << '\n';
    std::printf("%s: std(avg_degree)=%s std(connectivity)=%s\n", rep.model.c_str(),
                format_double(rep.std_average_degree).c_str(),
                format_double(rep.std_connectivity).c_str());
  }
  RunManifest man;
  man.config_hash = cfg.config_hash();
  man.seed = cfg.seeds[0];
  man.algorithm = "diversity";
  man.env = "topology-models";
  man.started = man.finished = now_iso();
  man.complete = true;
  man.artifacts = {"diversity_scatter.csv", "diversity_stats.csv"};
  man.version = kVersion;
  man.save(dir / "manifest.json");
  return 0;
}

int run_search_suite(const ExperimentConfig& cfg) {
  fs::path dir = run_dir_for(cfg, cfg.seeds[0]);
  fs::create_directories(dir);
  std::ostringstream summary;

  // Control: every sampled topology accepted; frequencies must sit at p.
  {
    RngStream rng = RngStream::derive(cfg.seeds[0], "search-control");
    GraphModelConfig topo = cfg.learner.topology;
    topo.model = GraphModel::ER;
    topo.n = 12;
    EdgeFrequencyLedger ledger(topo.n);
    for (std::size_t s = 0; s < cfg.search_control_samples; ++s)
      ledger.record(sample_topology(topo, rng));
    auto stats = edge_frequency_stats(ledger, topo.p);
    double mean_diff = mean_off_diagonal(stats, topo.n);
    double se = std::sqrt(topo.p * (1 - topo.p) /
                          static_cast<double>(cfg.search_control_samples)) /
                std::sqrt(static_cast<double>(topo.n) * (topo.n - 1));
    std::ofstream os(dir / "search_control.csv");
    write_edge_frequency_csv(os, ledger, topo.p);
    bool ok = std::abs(mean_diff) <= 3.0 * se;
    summary << (ok ? "PASS" : "FAIL") << " search-control mean off-diagonal diff "
            << format_double(mean_diff) << " (3SE=" << format_double(3.0 * se) << ")\n";
  }

  // Enabled: search during training on the configured game, selections
  // pooled across the configured seeds.
  {
    ExperimentConfig train_cfg = cfg;
    train_cfg.learner.search.enabled = true;
    EvalSettings ev{cfg.eval_every, cfg.eval_episodes};
    EdgeFrequencyLedger pooled;
    for (std::uint64_t seed : cfg.seeds) {
      TrainResult res = train(train_cfg.learner, train_cfg.env, seed, ev);
      pooled.merge(res.search_ledger);
    }
    std::ofstream os(dir / "search_enabled.csv");
    write_edge_frequency_csv(os, pooled, cfg.learner.topology.p);
    auto stats = edge_frequency_stats(pooled, cfg.learner.topology.p);
    double mean_diff = mean_off_diagonal(stats, pooled.n());
    double f = mean_diff + cfg.learner.topology.p;
    double se = std::sqrt(std::max(f * (1.0 - f), 1e-12) /
                          static_cast<double>(pooled.total()));
    summary << "INFO search-enabled (p=" << format_double(cfg.learner.topology.p)
            << ") mean off-diagonal diff " << format_double(mean_diff) << " (se "
            << format_double(se) << ") over " << pooled.total() << " selections\n";
  }

  std::ofstream sm(dir / "summary.txt");
  sm << summary.str();
  std::printf("%s", summary.str().c_str());

  RunManifest man;
  man.config_hash = cfg.config_hash();
  man.seed = cfg.seeds[0];
  man.algorithm = "search";
  man.env = env_kind_name(cfg.env.kind);
  man.started = man.finished = now_iso();
  man.complete = true;
  man.artifacts = {"search_control.csv", "search_enabled.csv", "summary.txt"};
  man.version = kVersion;
  man.save(dir / "manifest.json");
  return 0;
}

}  // namespace

int run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  switch (cfg.suite) {
    case Suite::Train: return run_train_suite(cfg);
    case Suite::Theory: return run_theory_suite(cfg);
    case Suite::Diversity: return run_diversity_suite(cfg);
    case Suite::Search: return run_search_suite(cfg);
  }
  return 1;
}

std::string emit_report(const fs::path& run_root) {
  struct Entry {
    RunManifest manifest;
    double smoothed_final = 0.0;
    bool has_curve = false;
  };
  std::vector<Entry> entries;
  std::vector<std::string> lab_lines;
  if (!fs::exists(run_root)) throw ConfigError("report: no such directory " + run_root.string());
  for (const auto& sub : fs::directory_iterator(run_root)) {
    if (!sub.is_directory()) continue;
    auto man = RunManifest::load(sub.path() / "manifest.json");
    if (!man || !man->complete) continue;
    Entry e;
    e.manifest = *man;
    std::ifstream is(sub.path() / "curve.csv");
    if (is) {
      std::vector<double> means;
      std::string line;
      std::getline(is, line);
      while (std::getline(is, line)) {
        std::istringstream ls(line);
        std::string cell;
        std::getline(ls, cell, ',');
        std::getline(ls, cell, ',');
        means.push_back(std::stod(cell));
      }
      if (!means.empty()) {
        // Sliding-window smoothing (window 4) applied at report time only.
        std::size_t take = std::min<std::size_t>(4, means.size());
        double s = 0.0;
        for (std::size_t i = means.size() - take; i < means.size(); ++i) s += means[i];
        e.smoothed_final = s / static_cast<double>(take);
        e.has_curve = true;
      }
    }
    std::ifstream sm(sub.path() / "summary.txt");
    if (sm) {
      std::string line;
      while (std::getline(sm, line))
        if (line.rfind("PASS", 0) == 0 || line.rfind("FAIL", 0) == 0)
          lab_lines.push_back(line);
    }
    entries.push_back(std::move(e));
  }
  if (entries.empty()) throw ConfigError("report: no completed runs under " + run_root.string());

  std::map<std::pair<std::string, std::string>, std::vector<const Entry*>> groups;
  for (const auto& e : entries)
    groups[{e.manifest.algorithm, e.manifest.env}].push_back(&e);

  struct Row {
    std::string algorithm, env;
    double mean, stdev;
    int seeds;
  };
  std::vector<Row> rows;
  for (const auto& [key, es] : groups) {
    std::vector<double> finals;
    for (const Entry* e : es)
      finals.push_back(e->has_curve ? e->smoothed_final : e->manifest.final_metric);
    if (finals.empty()) continue;
    double mean = std::accumulate(finals.begin(), finals.end(), 0.0) / finals.size();
    double var = 0.0;
    for (double v : finals) var += (v - mean) * (v - mean);
    var /= finals.size();
    rows.push_back({key.first, key.second, mean, std::sqrt(var),
                    static_cast<int>(finals.size())});
  }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.env != b.env) return a.env < b.env;
    return a.mean > b.mean;
  });

  std::ostringstream os;
  os << "run report: " << run_root.string() << "\n";
  os << "rank  algorithm            env                  mean      std       seeds\n";
  int rank = 1;
  std::string cur_env;
  for (const auto& r : rows) {
    if (r.env != cur_env) {
      cur_env = r.env;
      rank = 1;
    }
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-5d %-20s %-20s %-9.4g %-9.4g %d\n", rank++,
                  r.algorithm.c_str(), r.env.c_str(), r.mean, r.stdev, r.seeds);
    os << buf;
  }
  if (!lab_lines.empty()) {
    int pass = 0;
    for (const auto& l : lab_lines)
      if (l.rfind("PASS", 0) == 0) ++pass;
    os << "lab rollup: " << pass << "/" << lab_lines.size() << " claims passing\n";
    for (const auto& l : lab_lines) os << "  " << l << '\n';
  }
  std::ofstream rep(run_root / "report.txt");
  rep << os.str();
  return os.str();
}

}  // namespace tape
