#include "tape/topology.hpp"

#include <algorithm>
#include <deque>
#include <ostream>
#include <set>
#include <sstream>
#include <utility>

namespace tape {

bool AgentTopology::valid() const {
  if (n < 1) return false;
  if (adj.size() != static_cast<std::size_t>(n) * n) return false;
  for (int i = 0; i < n; ++i)
    if (!edge(i, i)) return false;
  return true;
}

const char* graph_model_name(GraphModel m) {
  switch (m) {
    case GraphModel::Edgeless: return "Edgeless";
    case GraphModel::FullyConnected: return "FullyConnected";
    case GraphModel::ER: return "ER";
    case GraphModel::WS: return "WS";
    case GraphModel::BA: return "BA";
  }
  return "?";
}

GraphModel graph_model_from_name(const std::string& name) {
  if (name == "Edgeless") return GraphModel::Edgeless;
  if (name == "FullyConnected") return GraphModel::FullyConnected;
  if (name == "ER") return GraphModel::ER;
  if (name == "WS") return GraphModel::WS;
  if (name == "BA") return GraphModel::BA;
  throw ConfigError("unknown graph model '" + name +
                    "' (expected Edgeless|FullyConnected|ER|WS|BA)");
}

void validate(const GraphModelConfig& cfg) {
  if (cfg.n < 1)
    throw ConfigError("GraphModelConfig: n must be >= 1 (got " +
                      std::to_string(cfg.n) + ")");
  if (cfg.model == GraphModel::ER && !(cfg.p >= 0.0 && cfg.p <= 1.0))
    throw ConfigError("GraphModelConfig: p must be in [0,1] (got " +
                      std::to_string(cfg.p) + ")");
  if (cfg.model == GraphModel::WS) {
    if (cfg.ws_k < 0 || cfg.ws_k % 2 != 0 || cfg.ws_k >= cfg.n)
      throw ConfigError("GraphModelConfig: ws_k must be even and < n (got ws_k=" +
                        std::to_string(cfg.ws_k) + ", n=" + std::to_string(cfg.n) + ")");
    if (!(cfg.ws_beta >= 0.0 && cfg.ws_beta <= 1.0))
      throw ConfigError("GraphModelConfig: ws_beta must be in [0,1] (got " +
                        std::to_string(cfg.ws_beta) + ")");
  }
  if (cfg.model == GraphModel::BA && (cfg.ba_m < 1 || cfg.ba_m >= cfg.n))
    throw ConfigError("GraphModelConfig: ba_m must satisfy 1 <= ba_m < n (got ba_m=" +
                      std::to_string(cfg.ba_m) + ", n=" + std::to_string(cfg.n) + ")");
}

namespace {

// Undirected edge list -> symmetric adjacency with self-edges.
AgentTopology from_undirected(int n, const std::set<std::pair<int, int>>& edges) {
  AgentTopology t(n);
  for (const auto& [u, v] : edges) {
    t.set(u, v, true);
    t.set(v, u, true);
  }
  return t;
}

AgentTopology sample_ws(const GraphModelConfig& cfg, RngStream& rng) {
  const int n = cfg.n;
  std::set<std::pair<int, int>> edges;
  auto norm = [](int a, int b) { return a < b ? std::make_pair(a, b) : std::make_pair(b, a); };
  for (int j = 1; j <= cfg.ws_k / 2; ++j)
    for (int i = 0; i < n; ++i) edges.insert(norm(i, (i + j) % n));
  // Rewire ring edges with probability ws_beta, keeping the graph simple.
  for (int j = 1; j <= cfg.ws_k / 2; ++j) {
    for (int i = 0; i < n; ++i) {
      if (!rng.bernoulli(cfg.ws_beta)) continue;
      auto old_edge = norm(i, (i + j) % n);
      if (!edges.count(old_edge)) continue;  // already rewired away
      int w = rng.uniform_int(0, n - 1);
      int attempts = 0;
      while ((w == i || edges.count(norm(i, w))) && attempts < 8 * n) {
        w = rng.uniform_int(0, n - 1);
        ++attempts;
      }
      if (w == i || edges.count(norm(i, w))) continue;  // node saturated
      edges.erase(old_edge);
      edges.insert(norm(i, w));
    }
  }
  return from_undirected(n, edges);
}

AgentTopology sample_ba(const GraphModelConfig& cfg, RngStream& rng) {
  const int n = cfg.n;
  const int m = cfg.ba_m;
  std::set<std::pair<int, int>> edges;
  auto norm = [](int a, int b) { return a < b ? std::make_pair(a, b) : std::make_pair(b, a); };
  // Preferential attachment over a repeated-node pool: the first new node
  // links to the m seed nodes, later nodes sample targets with probability
  // proportional to degree.
  std::vector<int> repeated;
  std::vector<int> targets(m);
  for (int i = 0; i < m; ++i) targets[i] = i;
  for (int source = m; source < n; ++source) {
    for (int t : targets) {
      edges.insert(norm(source, t));
      repeated.push_back(t);
      repeated.push_back(source);
    }
    std::set<int> picked;
    while (static_cast<int>(picked.size()) < m) {
      int idx = rng.uniform_int(0, static_cast<int>(repeated.size()) - 1);
      picked.insert(repeated[idx]);
    }
    targets.assign(picked.begin(), picked.end());
  }
  return from_undirected(n, edges);
}

}  // namespace

AgentTopology sample_topology(const GraphModelConfig& cfg, RngStream& rng) {
  validate(cfg);
  const int n = cfg.n;
  switch (cfg.model) {
    case GraphModel::Edgeless:
      return AgentTopology(n);
    case GraphModel::FullyConnected: {
      AgentTopology t(n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) t.set(i, j, true);
      return t;
    }
    case GraphModel::ER: {
      AgentTopology t(n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          if (i != j) t.set(i, j, rng.bernoulli(cfg.p));
      return t;
    }
    case GraphModel::WS:
      return sample_ws(cfg, rng);
    case GraphModel::BA:
      return sample_ba(cfg, rng);
  }
  throw ConfigError("GraphModelConfig: unknown model");
}

namespace {

// Unit-capacity max flow (Edmonds-Karp) on an undirected adjacency matrix.
int max_flow_units(std::vector<std::uint8_t> cap, int n, int s, int t) {
  int flow = 0;
  auto at = [n](std::vector<std::uint8_t>& c, int i, int j) -> std::uint8_t& {
    return c[static_cast<std::size_t>(i) * n + j];
  };
  while (true) {
    std::vector<int> parent(n, -1);
    parent[s] = s;
    std::deque<int> q{s};
    while (!q.empty() && parent[t] < 0) {
      int u = q.front();
      q.pop_front();
      for (int v = 0; v < n; ++v)
        if (parent[v] < 0 && at(cap, u, v) > 0) {
          parent[v] = u;
          q.push_back(v);
        }
    }
    if (parent[t] < 0) break;
    for (int v = t; v != s; v = parent[v]) {
      at(cap, parent[v], v) -= 1;
      at(cap, v, parent[v]) += 1;
    }
    ++flow;
  }
  return flow;
}

}  // namespace

GraphMetrics graph_metrics(const AgentTopology& t) {
  const int n = t.n;
  GraphMetrics m;
  if (n <= 1) return m;
  // Undirected simple projection, capacity 1 each direction.
  std::vector<std::uint8_t> und(static_cast<std::size_t>(n) * n, 0);
  int edge_count = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (t.edge(i, j) || t.edge(j, i)) {
        und[static_cast<std::size_t>(i) * n + j] = 1;
        und[static_cast<std::size_t>(j) * n + i] = 1;
        ++edge_count;
      }
  m.average_degree = 2.0 * edge_count / n;
  int best = n * n;
  for (int target = 1; target < n; ++target)
    best = std::min(best, max_flow_units(und, n, 0, target));
  m.connectivity = best;
  return m;
}

void write_topology_csv(std::ostream& os, const AgentTopology& t) {
  os << t.n;
  for (std::uint8_t e : t.adj) os << ',' << static_cast<int>(e);
  os << '\n';
}

}  // namespace tape
