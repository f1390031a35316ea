#pragma once

#include <cstdint>
#include <functional>
#include <unordered_map>
#include <vector>

#include "tape/critic.hpp"
#include "tape/gradients.hpp"
#include "tape/topology.hpp"

namespace tape {

struct SearchConfig {
  bool enabled = false;
  int n_cand = 8;        // candidate topologies per update
  int eval_batch = 64;   // held-out states for post-update value estimation
  bool per_agent = true; // per-agent selection (vs one joint selection)

  void validate() const {
    if (n_cand < 1) throw ConfigError("SearchConfig: n_cand must be >= 1");
    if (eval_batch < 1) throw ConfigError("SearchConfig: eval_batch must be >= 1");
  }
};

/// Counts how often each edge appears among selected topologies.
class EdgeFrequencyLedger {
 public:
  EdgeFrequencyLedger() = default;
  explicit EdgeFrequencyLedger(int n) : n_(n), counts_(static_cast<std::size_t>(n) * n, 0) {}

  void record(const AgentTopology& t);
  void merge(const EdgeFrequencyLedger& other);
  int n() const { return n_; }
  std::uint64_t total() const { return total_; }
  double frequency(int i, int j) const;

 private:
  int n_ = 0;
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

/// Per-cell (frequency - p); the diagonal reports 1 - p. Throws on an empty
/// ledger. Row-major n*n.
std::vector<double> edge_frequency_stats(const EdgeFrequencyLedger& ledger, double p);

/// Mean off-diagonal entry of an edge_frequency_stats matrix.
double mean_off_diagonal(const std::vector<double>& stats, int n);

/// Produces agent i's post-update policy rows for one candidate topology.
/// The learner supplies this so search evaluates exactly the update rule in
/// use (direct or softmax parameterization).
using CandidateUpdateFn = std::function<std::unordered_map<ObsKey, std::vector<double>>(
    int agent, const AgentTopology& candidate)>;

struct SearchResult {
  AgentTopology selected;
  int selected_index = 0;
  std::unordered_map<ObsKey, std::vector<double>> updated_rows;
  std::vector<double> candidate_values;
};

/// Heuristic graph search: sample n_cand topologies from the ER model, update
/// agent i's policy under each, estimate the post-update global Q by
/// averaging q_tot over the evaluation states with actions drawn from the
/// updated joint policy (common random numbers across candidates), and pick
/// the argmax (ties -> lowest index).
SearchResult heuristic_topology_search(
    int agent, const std::vector<TabularPolicy>& policies,
    const JointValueModel& qtot, const CandidateUpdateFn& update_fn,
    const std::vector<const TransitionRecord*>& eval_states,
    const GraphModelConfig& model, const SearchConfig& cfg, RngStream& rng);

/// Heatmap CSV rows: source, destination, frequency, difference.
void write_edge_frequency_csv(std::ostream& os, const EdgeFrequencyLedger& ledger, double p);

}  // namespace tape
