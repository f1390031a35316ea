#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "tape/common.hpp"

namespace tape {

/// Directed agent topology with mandatory self-edges. Edge i->j means agent
/// i's policy gradient includes agent j's utility. Immutable after
/// construction and safe to share across workers.
struct AgentTopology {
  int n = 0;
  std::vector<std::uint8_t> adj;  // row-major n*n, adj[i*n+j]

  AgentTopology() = default;
  explicit AgentTopology(int agents)
      : n(agents), adj(static_cast<std::size_t>(agents) * agents, 0) {
    for (int i = 0; i < n; ++i) set(i, i, true);
  }

  bool edge(int i, int j) const { return adj[static_cast<std::size_t>(i) * n + j] != 0; }
  void set(int i, int j, bool v) { adj[static_cast<std::size_t>(i) * n + j] = v ? 1 : 0; }

  bool valid() const;

  bool operator==(const AgentTopology& o) const { return n == o.n && adj == o.adj; }
};

enum class GraphModel { Edgeless, FullyConnected, ER, WS, BA };

const char* graph_model_name(GraphModel m);
GraphModel graph_model_from_name(const std::string& name);

struct GraphModelConfig {
  GraphModel model = GraphModel::ER;
  int n = 2;             // agent count
  double p = 0.3;        // ER edge probability
  int ws_k = 4;          // WS neighbor count, even, < n
  double ws_beta = 0.3;  // WS rewiring probability
  int ba_m = 2;          // BA attachment count, 1 <= ba_m < n
  std::uint64_t seed = 0;
};

/// Throws ConfigError naming the violated bound.
void validate(const GraphModelConfig& cfg);

/// Samples one topology. ER draws each off-diagonal entry independently
/// (row-major order); WS/BA build the standard undirected graph, then the
/// adjacency is symmetrized and self-edges added.
AgentTopology sample_topology(const GraphModelConfig& cfg, RngStream& rng);

struct GraphMetrics {
  double average_degree = 0.0;
  int connectivity = 0;
};

/// Metrics on the undirected simple projection (self-edges dropped,
/// e_ij or e_ji => one undirected edge). Connectivity is the global edge
/// connectivity, 0 if disconnected, computed by max-flow from vertex 0 to
/// every other vertex.
GraphMetrics graph_metrics(const AgentTopology& t);

/// Dump format used by --dump-topologies: one line per topology,
/// "n,e00,e01,...,e(n-1)(n-1)" row-major.
void write_topology_csv(std::ostream& os, const AgentTopology& t);

}  // namespace tape
