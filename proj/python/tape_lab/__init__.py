"""Topology-based multi-agent policy gradient laboratory.

Thin python surface over the C++ core: topology sampling and metrics, the
one-step matrix games, gradient diagnostics, the theorem checks, and small
training runs.
"""

from ._tape import (
    AgentTopology,
    ConfigError,
    counterfactual_advantage,
    estimate_update_variance,
    graph_metrics,
    individual_q_values,
    matrix_payoff,
    sample_topology,
    topology_diversity,
    train,
    verify_policy_improvement,
)

__all__ = [
    "AgentTopology",
    "ConfigError",
    "counterfactual_advantage",
    "estimate_update_variance",
    "graph_metrics",
    "individual_q_values",
    "matrix_payoff",
    "sample_topology",
    "topology_diversity",
    "train",
    "verify_policy_improvement",
]
