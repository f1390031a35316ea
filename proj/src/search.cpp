#include "tape/search.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace tape {

void EdgeFrequencyLedger::record(const AgentTopology& t) {
  if (n_ == 0) {
    n_ = t.n;
    counts_.assign(static_cast<std::size_t>(n_) * n_, 0);
  }
  if (t.n != n_) throw ContractViolation("EdgeFrequencyLedger: agent count mismatch");
  for (std::size_t i = 0; i < counts_.size(); ++i)
    if (t.adj[i]) ++counts_[i];
  ++total_;
}

void EdgeFrequencyLedger::merge(const EdgeFrequencyLedger& other) {
  if (other.total_ == 0) return;
  if (n_ == 0) {
    *this = other;
    return;
  }
  if (other.n_ != n_) throw ContractViolation("EdgeFrequencyLedger: agent count mismatch");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  total_ += other.total_;
}

double EdgeFrequencyLedger::frequency(int i, int j) const {
  if (total_ == 0) throw ContractViolation("EdgeFrequencyLedger: empty ledger");
  return static_cast<double>(counts_[static_cast<std::size_t>(i) * n_ + j]) /
         static_cast<double>(total_);
}

std::vector<double> edge_frequency_stats(const EdgeFrequencyLedger& ledger, double p) {
  if (ledger.total() == 0)
    throw ContractViolation("edge_frequency_stats: empty ledger");
  const int n = ledger.n();
  std::vector<double> out(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<std::size_t>(i) * n + j] = ledger.frequency(i, j) - p;
  return out;
}

double mean_off_diagonal(const std::vector<double>& stats, int n) {
  double s = 0.0;
  int m = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) {
        s += stats[static_cast<std::size_t>(i) * n + j];
        ++m;
      }
  return m > 0 ? s / m : 0.0;
}

namespace {

int sample_from(const std::vector<double>& dist, double u) {
  double acc = 0.0;
  for (std::size_t a = 0; a < dist.size(); ++a) {
    acc += dist[a];
    if (u < acc) return static_cast<int>(a);
  }
  return static_cast<int>(dist.size()) - 1;
}

}  // namespace

SearchResult heuristic_topology_search(
    int agent, const std::vector<TabularPolicy>& policies,
    const JointValueModel& qtot, const CandidateUpdateFn& update_fn,
    const std::vector<const TransitionRecord*>& eval_states,
    const GraphModelConfig& model, const SearchConfig& cfg, RngStream& rng) {
  cfg.validate();
  const int n = static_cast<int>(policies.size());
  std::vector<AgentTopology> candidates;
  candidates.reserve(cfg.n_cand);
  for (int c = 0; c < cfg.n_cand; ++c) candidates.push_back(sample_topology(model, rng));

  // Common random numbers: one uniform per (state, agent), shared across
  // candidates so identical candidates evaluate identically.
  std::vector<std::vector<double>> draws(eval_states.size(), std::vector<double>(n));
  for (auto& row : draws)
    for (double& u : row) u = rng.uniform01();

  std::vector<double> values(cfg.n_cand, 0.0);
  std::vector<std::unordered_map<ObsKey, std::vector<double>>> rows(cfg.n_cand);
  for (int c = 0; c < cfg.n_cand; ++c) {
    rows[c] = update_fn(agent, candidates[c]);
    double acc = 0.0;
    for (std::size_t s = 0; s < eval_states.size(); ++s) {
      const TransitionRecord& rec = *eval_states[s];
      CriticState cs = rec.critic_state();
      JointAction a(n, 0);
      for (int j = 0; j < n; ++j) {
        if (j == agent) {
          auto it = rows[c].find(rec.obs[j]);
          if (it != rows[c].end()) {
            a[j] = sample_from(it->second, draws[s][j]);
          } else {
            a[j] = sample_from(policies[j].distribution(rec.obs[j], 0.0), draws[s][j]);
          }
        } else {
          a[j] = sample_from(policies[j].distribution(rec.obs[j], 0.0), draws[s][j]);
        }
      }
      acc += qtot.q_tot(cs, a);
    }
    values[c] = eval_states.empty() ? 0.0 : acc / static_cast<double>(eval_states.size());
  }

  int best = 0;
  for (int c = 1; c < cfg.n_cand; ++c)
    if (values[c] > values[best]) best = c;

  SearchResult r;
  r.selected = candidates[best];
  r.selected_index = best;
  r.updated_rows = std::move(rows[best]);
  r.candidate_values = std::move(values);
  return r;
}

void write_edge_frequency_csv(std::ostream& os, const EdgeFrequencyLedger& ledger, double p) {
  os << "source,destination,frequency,difference\n";
  const int n = ledger.n();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double f = ledger.frequency(i, j);
      os << i << ',' << j << ',' << format_double(f) << ',' << format_double(f - p) << '\n';
    }
}

}  // namespace tape
