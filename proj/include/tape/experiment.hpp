#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tape/env.hpp"
#include "tape/learner.hpp"

namespace tape {

enum class Suite { Train, Theory, Diversity, Search };

const char* suite_name(Suite s);
Suite suite_from_name(const std::string& name);

struct ExperimentConfig {
  EnvDescriptor env;
  LearnerConfig learner;
  Suite suite = Suite::Train;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4};
  int eval_every = 200;
  int eval_episodes = 100;
  std::string out = "runs";

  // Suite-specific knobs (theory / search studies).
  int theory_trials = 100;
  double theory_delta = 1e-4;
  double theory_tolerance = 1e-9;
  std::size_t variance_samples = 1000000;
  std::vector<double> variance_p_grid{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  int diversity_agents = 12;
  int diversity_samples = 1000;
  std::size_t search_control_samples = 1000000;
  std::uint64_t search_snapshot_rounds = 20000;

  void validate() const;
  /// Canonical-form hash, stable under field reordering in the source file.
  std::string config_hash() const;
  std::string to_json() const;
};

/// Parses a config file (JSON, // comments allowed). Parse and validation
/// errors carry line-level positions. CLI overrides are applied afterwards.
struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> algo;
  std::optional<std::string> env;
  std::optional<double> p;
  std::optional<int> episodes;
  std::optional<std::string> out;
  std::optional<std::string> suite;
};

ExperimentConfig load_experiment_config(const std::filesystem::path& file,
                                        const ConfigOverrides& overrides = {});
ExperimentConfig parse_experiment_config(const std::string& text,
                                         const std::string& origin = "<config>");

struct RunManifest {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string algorithm;
  std::string env;
  std::string started;
  std::string finished;
  bool complete = false;
  double final_metric = 0.0;
  std::vector<std::string> artifacts;
  std::string version;

  void save(const std::filesystem::path& file) const;
  static std::optional<RunManifest> load(const std::filesystem::path& file);
};

/// Executes the configured suite, one run per seed for training suites.
/// Output directories are content-addressed by config hash + seed; an
/// existing completed run is left untouched. Returns the number of failures.
int run_experiment(const ExperimentConfig& cfg);

/// Per-algorithm mean +- std of the final metric across seeds, rank ordering,
/// and a lab pass/fail rollup. Returns the report text (also written to
/// report.txt in the directory).
std::string emit_report(const std::filesystem::path& run_root);

/// Learning-curve CSV schema:
/// episode,eval_return_mean,eval_return_std,loss,p,seed,algorithm,env
void write_learning_curve_csv(std::ostream& os, const TrainResult& result,
                              const ExperimentConfig& cfg, std::uint64_t seed);

}  // namespace tape
