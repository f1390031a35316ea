#include "tape/policy.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

namespace tape {

std::vector<double> project_to_simplex(std::vector<double> v) {
  // Sort-based algorithm: find the threshold tau with
  // x_i = max(v_i - tau, 0) and sum x = 1.
  const std::size_t n = v.size();
  std::vector<double> u = v;
  std::sort(u.begin(), u.end(), std::greater<double>());
  double css = 0.0;
  double tau = 0.0;
  std::size_t rho = 0;
  for (std::size_t i = 0; i < n; ++i) {
    css += u[i];
    double t = (css - 1.0) / static_cast<double>(i + 1);
    if (u[i] - t > 0.0) {
      rho = i + 1;
      tau = t;
    }
  }
  (void)rho;
  for (double& x : v) x = std::max(x - tau, 0.0);
  double s = std::accumulate(v.begin(), v.end(), 0.0);
  if (s > 0.0)
    for (double& x : v) x /= s;
  return v;
}

std::vector<double> center(std::vector<double> v) {
  if (v.empty()) return v;
  double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  for (double& x : v) x -= mean;
  return v;
}

std::vector<double> TabularPolicy::distribution(const ObsKey& key, double eps) const {
  if (!(eps >= 0.0 && eps <= 1.0))
    throw ConfigError("policy_distribution: eps must be in [0,1] (got " +
                      std::to_string(eps) + ")");
  std::vector<double> d;
  auto it = table_.find(key);
  if (it == table_.end()) {
    d.assign(n_actions_, 1.0 / n_actions_);
    return d;  // uniform; the eps mixture of uniform is uniform
  }
  d = it->second;
  const double u = eps / n_actions_;
  for (double& x : d) x = (1.0 - eps) * x + u;
  return d;
}

double TabularPolicy::prob(const ObsKey& key, int action, double eps) const {
  auto it = table_.find(key);
  double base = it == table_.end() ? 1.0 / n_actions_ : it->second[action];
  return (1.0 - eps) * base + eps / n_actions_;
}

int TabularPolicy::sample(const ObsKey& key, double eps, RngStream& rng) const {
  std::vector<double> d = distribution(key, eps);
  double u = rng.uniform01();
  double acc = 0.0;
  for (int a = 0; a < n_actions_; ++a) {
    acc += d[a];
    if (u < acc) return a;
  }
  return n_actions_ - 1;
}

std::vector<double> TabularPolicy::row_or_uniform(const ObsKey& key) const {
  auto it = table_.find(key);
  if (it != table_.end()) return it->second;
  return std::vector<double>(n_actions_, 1.0 / n_actions_);
}

const std::vector<double>& TabularPolicy::row(const ObsKey& key) {
  auto it = table_.find(key);
  if (it == table_.end()) {
    std::vector<double> uniform(n_actions_, 1.0 / n_actions_);
    it = table_.emplace(key, std::move(uniform)).first;
  }
  return it->second;
}

void TabularPolicy::set_row(const ObsKey& key, std::vector<double> probs) {
  table_[key] = std::move(probs);
}

bool TabularPolicy::on_simplex(double tol) const {
  for (const auto& [key, row] : table_) {
    double s = 0.0;
    for (double x : row) {
      if (x < -tol) return false;
      s += x;
    }
    if (std::abs(s - 1.0) > tol) return false;
  }
  return true;
}

bool PolicyUpdate::tangent(double tol) const {
  for (const auto& [key, row] : beta) {
    double s = std::accumulate(row.begin(), row.end(), 0.0);
    if (std::abs(s) > tol) return false;
  }
  return true;
}

void save_policies(std::ostream& os, const std::vector<TabularPolicy>& policies) {
  for (std::size_t i = 0; i < policies.size(); ++i) {
    std::map<ObsKey, const std::vector<double>*> ordered;
    for (const auto& [key, row] : policies[i].table()) ordered.emplace(key, &row);
    for (const auto& [key, row] : ordered)
      for (std::size_t a = 0; a < row->size(); ++a)
        os << "pi " << i << ' ' << key << ' ' << a << ' '
           << format_double_exact((*row)[a]) << '\n';
  }
}

std::vector<TabularPolicy> load_policies(std::istream& is,
                                         const std::vector<int>& action_counts) {
  std::vector<TabularPolicy> out;
  out.reserve(action_counts.size());
  for (int c : action_counts) out.emplace_back(c);
  std::unordered_map<std::string, std::vector<double>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag, key;
    int agent, action;
    double v;
    ls >> tag >> agent >> key >> action >> v;
    if (tag != "pi") continue;
    auto& row = rows[std::to_string(agent) + "\x1f" + key];
    if (row.empty()) row.assign(action_counts[agent], 0.0);
    row[action] = v;
  }
  for (auto& [combined, row] : rows) {
    auto sep = combined.find('\x1f');
    int agent = std::stoi(combined.substr(0, sep));
    out[agent].set_row(combined.substr(sep + 1), row);
  }
  return out;
}

void apply_policy_update(TabularPolicy& policy, const PolicyUpdate& update) {
  for (const auto& [key, beta_row] : update.beta) {
    std::vector<double> v = policy.row(key);
    bool feasible = true;
    double sum = 0.0;
    for (std::size_t a = 0; a < v.size(); ++a) {
      v[a] += update.delta * beta_row[a];
      if (v[a] < 0.0) feasible = false;
      sum += v[a];
    }
    if (feasible && std::abs(sum - 1.0) <= 1e-12) {
      policy.set_row(key, std::move(v));
    } else {
      policy.set_row(key, project_to_simplex(std::move(v)));
    }
  }
}

}  // namespace tape
