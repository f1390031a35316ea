#include <cstdlib>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "tape/experiment.hpp"
#include "tape/topology.hpp"

int main(int argc, char** argv) {
  CLI::App app{"tape_lab: topology-based multi-agent policy gradient laboratory"};

  std::string config_path;
  std::string report_dir;
  tape::ConfigOverrides ov;
  std::uint64_t seed_val = 0;
  std::string algo, env_name, suite, out_dir;
  double p_val = 0.0;
  int episodes = 0;
  bool dump_topologies = false;
  int dump_count = 1000;

  app.add_option("--config", config_path, "experiment config file (JSON, // comments allowed)");
  auto* seed_opt = app.add_option("--seed", seed_val, "override: run only this seed");
  auto* algo_opt = app.add_option("--algo", algo, "override: algorithm name");
  auto* env_opt = app.add_option("--env", env_name, "override: environment kind");
  auto* p_opt = app.add_option("--p", p_val, "override: ER edge probability");
  auto* ep_opt = app.add_option("--episodes", episodes, "override: training episodes");
  auto* out_opt = app.add_option("--out", out_dir, "override: output directory");
  auto* suite_opt =
      app.add_option("--suite", suite, "suite to run: train|theory|diversity|search");
  app.add_flag("--dump-topologies", dump_topologies,
               "sample topologies from the configured model and write topologies.csv");
  app.add_option("--dump-count", dump_count, "samples for --dump-topologies");
  app.add_option("--report", report_dir, "emit a summary report over a run directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (!report_dir.empty()) {
      std::cout << tape::emit_report(report_dir);
      return 0;
    }
    if (config_path.empty()) {
      std::cerr << "a --config file is required (or --report DIR)\n";
      return 2;
    }
    if (seed_opt->count()) ov.seed = seed_val;
    if (algo_opt->count()) ov.algo = algo;
    if (env_opt->count()) ov.env = env_name;
    if (p_opt->count()) ov.p = p_val;
    if (ep_opt->count()) ov.episodes = episodes;
    if (out_opt->count()) ov.out = out_dir;
    if (suite_opt->count()) ov.suite = suite;
    if (const char* env_out = std::getenv("TAPE_LAB_OUT"); env_out && *env_out)
      ov.out = std::string(env_out);

    tape::ExperimentConfig cfg = tape::load_experiment_config(config_path, ov);

    if (dump_topologies) {
      tape::GraphModelConfig topo = cfg.learner.topology;
      topo.n = cfg.env.n_agents;
      tape::RngStream rng = tape::RngStream::derive(cfg.seeds[0], "dump");
      std::filesystem::create_directories(cfg.out);
      std::ofstream os(std::filesystem::path(cfg.out) / "topologies.csv");
      for (int i = 0; i < dump_count; ++i)
        tape::write_topology_csv(os, tape::sample_topology(topo, rng));
      std::cout << "wrote " << dump_count << " topologies to " << cfg.out
                << "/topologies.csv\n";
      return 0;
    }

    return tape::run_experiment(cfg);
  } catch (const tape::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
