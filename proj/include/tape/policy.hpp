#pragma once

#include <iosfwd>
#include <span>
#include <unordered_map>
#include <vector>

#include "tape/common.hpp"

namespace tape {

/// Euclidean projection onto the probability simplex.
std::vector<double> project_to_simplex(std::vector<double> v);

/// One agent's tabular policy: a probability vector per observation key.
/// Unknown keys read as uniform (the new-state default). Snapshots are used
/// for rollouts; only the learner mutates.
class TabularPolicy {
 public:
  TabularPolicy() = default;
  explicit TabularPolicy(int n_actions) : n_actions_(n_actions) {}

  int n_actions() const { return n_actions_; }

  /// (1-eps) * theta + eps * uniform. Throws ConfigError for eps outside [0,1].
  std::vector<double> distribution(const ObsKey& key, double eps) const;
  double prob(const ObsKey& key, int action, double eps) const;
  int sample(const ObsKey& key, double eps, RngStream& rng) const;

  bool has_key(const ObsKey& key) const { return table_.count(key) != 0; }
  const std::vector<double>& row(const ObsKey& key);  // inserts uniform if absent
  std::vector<double> row_or_uniform(const ObsKey& key) const;
  void set_row(const ObsKey& key, std::vector<double> probs);

  const std::unordered_map<ObsKey, std::vector<double>>& table() const { return table_; }

  /// Every stored row is non-negative and sums to 1 within tol.
  bool on_simplex(double tol = 1e-9) const;

 private:
  int n_actions_ = 0;
  std::unordered_map<ObsKey, std::vector<double>> table_;
};

/// Per-(observation-key, action) stepsizes with a global scale. Rows must sum
/// to zero (simplex tangency).
struct PolicyUpdate {
  std::unordered_map<ObsKey, std::vector<double>> beta;
  double delta = 1.0;

  bool tangent(double tol = 1e-9) const;
};

/// theta' = project_to_simplex(theta + delta * beta). When theta + delta*beta
/// is already feasible the projection is the identity.
void apply_policy_update(TabularPolicy& policy, const PolicyUpdate& update);

/// Subtract the row mean: the Euclidean projection of a gradient onto the
/// simplex tangent space.
std::vector<double> center(std::vector<double> v);

/// Flat key->value checkpoint lines: "pi <agent> <obs-key> <action> <prob>".
void save_policies(std::ostream& os, const std::vector<TabularPolicy>& policies);
std::vector<TabularPolicy> load_policies(std::istream& is, const std::vector<int>& action_counts);

/// Deterministic policy mapping observation features to a scalar action.
struct LinearDeterministicPolicy {
  std::vector<double> weights;

  double action(std::span<const double> features) const {
    double a = 0.0;
    for (std::size_t i = 0; i < weights.size() && i < features.size(); ++i)
      a += weights[i] * features[i];
    return a;
  }
};

}  // namespace tape
