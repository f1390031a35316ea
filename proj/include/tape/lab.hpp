#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tape/env.hpp"
#include "tape/gradients.hpp"
#include "tape/topology.hpp"

namespace tape {

struct ImprovementReport {
  std::string instance;
  double value_before = 0.0;
  double value_after = 0.0;
  double delta = 0.0;
  bool pass = false;
};

/// For `trials` random interior tabular joint policies: fit the exact
/// one-step critic, take the exact stochastic-TAPE update direction under a
/// sampled topology, apply it with scale delta, and check the enumerated
/// joint value did not decrease beyond tolerance. Also verifies the Lemma-3
/// monotone condition on every produced update.
struct ImprovementSuite {
  std::vector<ImprovementReport> reports;
  int monotone_passes = 0;
  int monotone_checks = 0;
  bool negative_control_failed = false;  // sign-flipped direction must fail
  bool all_pass() const;
};

ImprovementSuite verify_policy_improvement(const MatrixGame& game, int trials,
                                           double delta, double tolerance,
                                           double topology_p, RngStream& rng);

/// Lemma-3 biconditional over all action pairs of all agents:
/// Q_i(s,a) >= Q_i(s,a') <=> beta(s,a) >= beta(s,a'), ties allowed.
/// `tol` treats |x-y| <= tol as a tie (numeric-noise guard).
bool check_monotone_condition(const std::vector<double>& beta,
                              const std::vector<double>& local_q, double tol = 1e-12);

/// Lemma 2: both sequences sorted ascending and sum(b) = 0 imply
/// sum a_i b_i >= 0. Throws ContractViolation on a precondition break.
bool weighted_sum_check(std::span<const double> a_seq, std::span<const double> b_seq,
                        double tol = 1e-9);

struct VariancePoint {
  double p = 0.0;
  double var_tape = 0.0;
  double var_dop = 0.0;
  double delta = 0.0;          // var_tape - var_dop
  double se_delta = 0.0;       // standard error of delta
  double direct_delta = 0.0;   // p^2 * sum_j Var[C_j] from an independent stream
  double se_direct = 0.0;
};

struct VarianceReport {
  std::vector<VariancePoint> points;
  std::optional<double> slope;  // log-log slope of delta vs p; unset if degenerate
  bool dominance_ok = false;    // Var[TAPE] >= Var[DOP] - 3 SE everywhere
  bool decomposition_ok = false;  // delta matches p^2 sum Var[C_j] within 3 SE
};

/// Theorem-2 study: fixed uniform policies, exact critic, fixed (s, a_i);
/// xi_TAPE replaces E_ij by its analytic expectation p, so the measured
/// variance is over transition sampling only.
VarianceReport estimate_update_variance(const MatrixGame& game,
                                        const std::vector<double>& p_grid,
                                        std::size_t samples, RngStream& rng);

struct DiversitySample {
  double average_degree = 0.0;
  int connectivity = 0;
};

struct DiversityModelReport {
  std::string model;
  std::vector<DiversitySample> samples;
  double std_average_degree = 0.0;
  double std_connectivity = 0.0;
};

std::vector<DiversityModelReport> topology_diversity_report(
    const std::vector<GraphModelConfig>& models, int n_agents, int samples,
    RngStream& rng);

}  // namespace tape
