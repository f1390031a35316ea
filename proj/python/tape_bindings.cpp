#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tape/env.hpp"
#include "tape/gradients.hpp"
#include "tape/lab.hpp"
#include "tape/learner.hpp"
#include "tape/topology.hpp"

namespace py = pybind11;
using namespace tape;

namespace {

std::vector<std::vector<int>> adjacency_rows(const AgentTopology& t) {
  std::vector<std::vector<int>> rows(t.n, std::vector<int>(t.n, 0));
  for (int i = 0; i < t.n; ++i)
    for (int j = 0; j < t.n; ++j) rows[i][j] = t.edge(i, j) ? 1 : 0;
  return rows;
}

GraphModelConfig make_model(const std::string& model, int n, double p, int ws_k,
                            double ws_beta, int ba_m) {
  GraphModelConfig cfg;
  cfg.model = graph_model_from_name(model);
  cfg.n = n;
  cfg.p = p;
  cfg.ws_k = ws_k;
  cfg.ws_beta = ws_beta;
  cfg.ba_m = ba_m;
  return cfg;
}

MatrixGame game_by_name(const std::string& name) {
  return matrix_game_for(env_kind_from_name(name), descriptor_for(env_kind_from_name(name)));
}

}  // namespace

PYBIND11_MODULE(_tape, m) {
  m.doc() = "Topology-based multi-agent policy gradient laboratory (C++ core)";

  py::register_exception<ConfigError>(m, "ConfigError");

  py::class_<AgentTopology>(m, "AgentTopology")
      .def_readonly("n", &AgentTopology::n)
      .def("edge", &AgentTopology::edge)
      .def("valid", &AgentTopology::valid)
      .def("adjacency", &adjacency_rows);

  m.def(
      "sample_topology",
      [](const std::string& model, int n, double p, std::uint64_t seed, int ws_k,
         double ws_beta, int ba_m) {
        GraphModelConfig cfg = make_model(model, n, p, ws_k, ws_beta, ba_m);
        RngStream rng(seed);
        return sample_topology(cfg, rng);
      },
      py::arg("model"), py::arg("n"), py::arg("p") = 0.3, py::arg("seed") = 0,
      py::arg("ws_k") = 4, py::arg("ws_beta") = 0.3, py::arg("ba_m") = 2);

  m.def("graph_metrics", [](const AgentTopology& t) {
    GraphMetrics g = graph_metrics(t);
    return py::make_tuple(g.average_degree, g.connectivity);
  });

  m.def("matrix_payoff", [](const std::string& env, std::vector<int> joint) {
    return game_by_name(env).payoff(joint);
  });

  m.def(
      "individual_q_values",
      [](const std::string& env, std::vector<std::vector<double>> dists) {
        MatrixGame g = game_by_name(env);
        if (dists.empty()) {
          for (int c : g.action_counts())
            dists.emplace_back(c, 1.0 / c);
        }
        return individual_q_values(g, dists);
      },
      py::arg("env"), py::arg("dists") = std::vector<std::vector<double>>{});

  m.def(
      "counterfactual_advantage",
      [](const std::string& env, std::vector<int> joint, int agent,
         std::vector<double> dist) {
        MatrixGame g = game_by_name(env);
        PayoffJointValue q(g);
        return counterfactual_advantage(q, CriticState::keyed("s0"), joint, agent, dist);
      },
      py::arg("env"), py::arg("joint"), py::arg("agent"), py::arg("dist"));

  m.def(
      "verify_policy_improvement",
      [](const std::string& env, int trials, double delta, double tolerance, double p,
         std::uint64_t seed) {
        MatrixGame g = game_by_name(env);
        RngStream rng(seed);
        ImprovementSuite s = verify_policy_improvement(g, trials, delta, tolerance, p, rng);
        int passes = 0;
        for (const auto& r : s.reports)
          if (r.pass) ++passes;
        py::dict out;
        out["trials"] = static_cast<int>(s.reports.size());
        out["passes"] = passes;
        out["monotone_passes"] = s.monotone_passes;
        out["monotone_checks"] = s.monotone_checks;
        out["negative_control_failed"] = s.negative_control_failed;
        out["all_pass"] = s.all_pass();
        return out;
      },
      py::arg("env") = "IntroGame", py::arg("trials") = 20, py::arg("delta") = 1e-4,
      py::arg("tolerance") = 1e-9, py::arg("p") = 0.5, py::arg("seed") = 1);

  m.def(
      "estimate_update_variance",
      [](const std::string& env, std::vector<double> p_grid, std::size_t samples,
         std::uint64_t seed) {
        MatrixGame g = game_by_name(env);
        RngStream rng(seed);
        VarianceReport rep = estimate_update_variance(g, p_grid, samples, rng);
        py::dict out;
        py::list pts;
        for (const auto& pt : rep.points) {
          py::dict d;
          d["p"] = pt.p;
          d["var_tape"] = pt.var_tape;
          d["var_dop"] = pt.var_dop;
          d["delta"] = pt.delta;
          d["direct_delta"] = pt.direct_delta;
          pts.append(d);
        }
        out["points"] = pts;
        out["slope"] = rep.slope ? py::cast(*rep.slope) : py::none();
        out["dominance_ok"] = rep.dominance_ok;
        out["decomposition_ok"] = rep.decomposition_ok;
        return out;
      },
      py::arg("env") = "IntroGame",
      py::arg("p_grid") = std::vector<double>{0.1, 0.3, 0.5, 0.7, 0.9},
      py::arg("samples") = 100000, py::arg("seed") = 1);

  m.def(
      "train",
      [](const std::string& env, const std::string& algorithm, int episodes, double p,
         std::uint64_t seed, double actor_lr, double critic_lr, double kappa,
         int critic_steps, const std::string& policy_param, double eps_final) {
        EnvDescriptor desc = descriptor_for(env_kind_from_name(env));
        LearnerConfig cfg;
        cfg.algorithm = algorithm_from_name(algorithm);
        cfg.topology.p = p;
        cfg.episodes = episodes;
        cfg.actor_lr = actor_lr;
        cfg.critic_lr = critic_lr;
        cfg.kappa = kappa;
        cfg.critic_steps = critic_steps;
        cfg.eps_final = eps_final;
        cfg.policy_param = policy_param == "softmax" ? PolicyParam::Softmax
                                                     : PolicyParam::Direct;
        EvalSettings ev;
        ev.eval_every = std::max(1, episodes / 10);
        ev.eval_episodes = 50;
        TrainResult res = train(cfg, desc, seed, ev);
        py::dict out;
        out["final_metric"] = res.final_metric();
        py::list evals;
        for (const auto& e : res.eval_points)
          evals.append(py::make_tuple(e.episode, e.eval_return_mean));
        out["eval_points"] = evals;
        out["episodes"] = static_cast<int>(res.episode_returns.size());
        return out;
      },
      py::arg("env") = "Easy", py::arg("algorithm") = "StochasticTAPE",
      py::arg("episodes") = 10000, py::arg("p") = 0.5, py::arg("seed") = 1,
      py::arg("actor_lr") = 0.01, py::arg("critic_lr") = 0.1, py::arg("kappa") = 0.9,
      py::arg("critic_steps") = 2, py::arg("policy_param") = "direct",
      py::arg("eps_final") = 0.01);

  m.def("topology_diversity",
        [](int n_agents, int samples, std::uint64_t seed) {
          std::vector<GraphModelConfig> models;
          for (GraphModel gm : {GraphModel::Edgeless, GraphModel::FullyConnected,
                                GraphModel::ER, GraphModel::WS, GraphModel::BA}) {
            GraphModelConfig c;
            c.model = gm;
            c.p = 0.5;
            models.push_back(c);
          }
          RngStream rng(seed);
          auto reports = topology_diversity_report(models, n_agents, samples, rng);
          py::dict out;
          for (const auto& r : reports)
            out[r.model.c_str()] =
                py::make_tuple(r.std_average_degree, r.std_connectivity);
          return out;
        },
        py::arg("n_agents") = 12, py::arg("samples") = 200, py::arg("seed") = 1);
}
