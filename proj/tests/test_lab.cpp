#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tape/lab.hpp"

using namespace tape;

TEST_CASE("policy improvement holds on 100 random instances per game") {
  RngStream rng(101);
  for (auto game : {intro_game(), easy_game(), medium_game(), hard_game()}) {
    ImprovementSuite suite = verify_policy_improvement(game, 100, 1e-4, 1e-9, 0.5, rng);
    REQUIRE(suite.reports.size() == 100);
    int passes = 0;
    for (const auto& r : suite.reports)
      if (r.pass) ++passes;
    CHECK(passes == 100);
    CHECK(suite.monotone_passes == suite.monotone_checks);
    CHECK(suite.negative_control_failed);
    CHECK(suite.all_pass());
  }
}

TEST_CASE("zero update direction leaves the value unchanged") {
  MatrixGame g = intro_game();
  std::vector<std::vector<double>> uni{{0.5, 0.5}, {0.5, 0.5}};
  double before = one_step_value(g, uni);
  // beta = 0 means J(after) == J(before) exactly.
  auto updated = uni;
  CHECK(one_step_value(g, updated) == doctest::Approx(before).epsilon(1e-15));
}

TEST_CASE("monotone condition checker") {
  SUBCASE("constant local values require constant stepsizes") {
    CHECK(check_monotone_condition({0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}));
    CHECK_FALSE(check_monotone_condition({0.1, 0.0, 0.0}, {1.0, 1.0, 1.0}));
  }
  SUBCASE("exact TAPE update on the intro game satisfies the condition") {
    MatrixGame g = intro_game();
    std::vector<std::vector<double>> uni{{0.5, 0.5}, {0.5, 0.5}};
    TabularDecomposedCritic critic = fit_one_step_least_squares(g, uni);
    AgentTopology full(2);
    full.set(0, 1, true);
    full.set(1, 0, true);
    auto beta = exact_tape_update(g, uni, critic, full);
    CriticState s = CriticState::keyed("s0");
    for (int i = 0; i < 2; ++i) {
      std::vector<double> q{critic.local_q(s, i, 0), critic.local_q(s, i, 1)};
      CHECK(check_monotone_condition(beta[i], q));
    }
  }
  SUBCASE("random stepsizes decoupled from the values fail with high probability") {
    RngStream rng(7);
    int failures = 0;
    const int trials = 200;
    for (int t = 0; t < trials; ++t) {
      std::vector<double> q{rng.normal(0, 1), rng.normal(0, 1), rng.normal(0, 1)};
      std::vector<double> beta{rng.normal(0, 1), rng.normal(0, 1), rng.normal(0, 1)};
      if (!check_monotone_condition(beta, q)) ++failures;
    }
    CHECK(failures > trials / 2);
  }
}

TEST_CASE("weighted sum check (rearrangement-style lemma)") {
  CHECK(weighted_sum_check(std::vector<double>{1, 2, 3}, std::vector<double>{-1, 0, 1}));
  CHECK(weighted_sum_check(std::vector<double>{1, 2, 3}, std::vector<double>{0, 0, 0}));

  SUBCASE("property fuzzing over random sorted centered pairs") {
    RngStream rng(3);
    for (int t = 0; t < 100000; ++t) {
      int len = rng.uniform_int(2, 5);
      std::vector<double> a(len), b(len);
      for (double& x : a) x = rng.normal(0, 1);
      for (double& x : b) x = rng.normal(0, 1);
      double mean = std::accumulate(b.begin(), b.end(), 0.0) / len;
      for (double& x : b) x -= mean;
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      REQUIRE(weighted_sum_check(a, b));
    }
  }
  SUBCASE("precondition violations raise") {
    CHECK_THROWS_AS(
        weighted_sum_check(std::vector<double>{3, 2, 1}, std::vector<double>{-1, 0, 1}),
        ContractViolation);
    CHECK_THROWS_AS(
        weighted_sum_check(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}),
        ContractViolation);
  }
}

TEST_CASE("update variance study") {
  RngStream rng(19);
  SUBCASE("p=0 gives exactly zero gap") {
    VarianceReport rep = estimate_update_variance(intro_game(), {0.0}, 20000, rng);
    REQUIRE(rep.points.size() == 1);
    CHECK(rep.points[0].delta == 0.0);
    CHECK(rep.points[0].var_dop == 0.0);
  }
  SUBCASE("gap is non-negative and follows p^2 on the intro game") {
    std::vector<double> grid{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    VarianceReport rep = estimate_update_variance(intro_game(), grid, 200000, rng);
    REQUIRE(rep.points.size() == grid.size());
    for (const auto& pt : rep.points) {
      CHECK(pt.delta >= 0.0);
      CHECK(pt.var_tape >= pt.var_dop - 3.0 * pt.se_delta);
    }
    CHECK(rep.dominance_ok);
    CHECK(rep.decomposition_ok);
    REQUIRE(rep.slope.has_value());
    CHECK(*rep.slope >= 1.7);
    CHECK(*rep.slope <= 2.3);
    // Direct decomposition: Var[C_B] = 1.5625 at uniform on the intro game.
    for (const auto& pt : rep.points)
      CHECK(pt.direct_delta ==
            doctest::Approx(pt.p * pt.p * 1.5625).epsilon(0.05));
  }
  SUBCASE("degenerate constant payoffs report an undefined slope") {
    MatrixGame flat({2, 2}, {1.0, 1.0, 1.0, 1.0});
    VarianceReport rep = estimate_update_variance(flat, {0.1, 0.5, 0.9}, 10000, rng);
    CHECK_FALSE(rep.slope.has_value());
    CHECK(rep.dominance_ok);
  }
}

TEST_CASE("topology diversity study") {
  RngStream rng(23);
  std::vector<GraphModelConfig> models(5);
  models[0].model = GraphModel::Edgeless;
  models[1].model = GraphModel::FullyConnected;
  models[2].model = GraphModel::ER;
  models[2].p = 0.5;
  models[3].model = GraphModel::WS;
  models[3].ws_k = 4;
  models[3].ws_beta = 0.3;
  models[4].model = GraphModel::BA;
  models[4].ba_m = 2;

  auto reports = topology_diversity_report(models, 12, 1000, rng);
  REQUIRE(reports.size() == 5);

  SUBCASE("degenerate baselines collapse to single points") {
    for (const auto& s : reports[0].samples) {
      CHECK(s.average_degree == 0.0);
      CHECK(s.connectivity == 0);
    }
    for (const auto& s : reports[1].samples) {
      CHECK(s.average_degree == doctest::Approx(11.0));
      CHECK(s.connectivity == 11);
    }
    CHECK(reports[0].std_average_degree == 0.0);
    CHECK(reports[1].std_average_degree == 0.0);
  }
  SUBCASE("ER spreads wider than WS and BA") {
    double er = reports[2].std_average_degree;
    CHECK(er > reports[3].std_average_degree);
    CHECK(er > reports[4].std_average_degree);
    CHECK(er > 0.3);
  }
}
