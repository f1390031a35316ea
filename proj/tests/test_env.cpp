#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "tape/env.hpp"

using namespace tape;

TEST_CASE("intro game payoffs match the worked example") {
  MatrixGame g = intro_game();
  CHECK(g.payoff({0, 0}) == 2.0);
  CHECK(g.payoff({0, 1}) == -4.0);
  CHECK(g.payoff({1, 0}) == -1.0);
  CHECK(g.payoff({1, 1}) == 0.0);

  RngStream rng(1);
  g.reset(rng);
  StepResult r = g.step({0, 1});
  CHECK(r.reward == -4.0);
  CHECK(r.done);
}

TEST_CASE("escalation games carry the stated penalties and local optimum") {
  CHECK(easy_game().payoff({0, 1}) == -8.0);
  CHECK(medium_game().payoff({0, 1}) == -16.0);
  CHECK(hard_game().payoff({1, 1}) == 1.0);
  CHECK(hard_game(2.5).payoff({1, 1}) == 2.5);
  CHECK(easy_game().max_payoff() == 4.0);
}

TEST_CASE("matrix games are not monotonic: best responses depend on the other agent") {
  for (MatrixGame g : {easy_game(), medium_game(), hard_game()}) {
    // Best response of agent 0 to opponent action 0 vs action 1 must differ
    // somewhere (and symmetrically), otherwise the game would be solvable
    // independently.
    auto best0 = [&](int b) {
      int arg = 0;
      for (int a = 1; a < 3; ++a)
        if (g.payoff({a, b}) > g.payoff({arg, b})) arg = a;
      return arg;
    };
    auto best1 = [&](int a) {
      int arg = 0;
      for (int b = 1; b < 3; ++b)
        if (g.payoff({a, b}) > g.payoff({a, arg})) arg = b;
      return arg;
    };
    bool varies0 = best0(0) != best0(1) || best0(0) != best0(2);
    bool varies1 = best1(0) != best1(1) || best1(0) != best1(2);
    CHECK(varies0);
    CHECK(varies1);
  }
}

TEST_CASE("out-of-range actions violate the contract") {
  MatrixGame g = intro_game();
  RngStream rng(1);
  g.reset(rng);
  CHECK_THROWS_AS(g.step({0, 2}), ContractViolation);
}

TEST_CASE("payoff override replaces the tensor") {
  EnvDescriptor d = descriptor_for(EnvKind::Easy);
  d.payoff_override = std::vector<double>{1, 0, 0, 0, 1, 0, 0, 0, 1};
  MatrixGame g = matrix_game_for(EnvKind::Easy, d);
  CHECK(g.payoff({0, 0}) == 1.0);
  CHECK(g.payoff({0, 1}) == 0.0);
}

TEST_CASE("foraging: cooperative collection rule") {
  // 2 agents of level 1 next to a level-2 food: both loading collects, one
  // alone does not.
  ForagingWorld w(5, 5, 2, 1, /*coop=*/false, /*time_limit=*/10);
  w.place({{1, 1, 1}, {1, 3, 1}}, {{1, 2, 2, false}});

  SUBCASE("one loader is not enough") {
    StepResult r = w.step({ForagingWorld::Load, ForagingWorld::Noop});
    CHECK(r.reward == 0.0);
    CHECK_FALSE(w.foods()[0].collected);
  }
  SUBCASE("both loading collects and the return is 1") {
    StepResult r = w.step({ForagingWorld::Load, ForagingWorld::Load});
    CHECK(r.reward == doctest::Approx(1.0));
    CHECK(w.foods()[0].collected);
    CHECK(r.done);
  }
}

TEST_CASE("foraging: coop flag requires every agent to participate") {
  ForagingWorld w(6, 6, 3, 1, /*coop=*/true, /*time_limit=*/10);
  // Food level 2 would be satisfied by two loaders, but coop demands all 3.
  w.place({{1, 1, 1}, {1, 3, 1}, {4, 4, 1}}, {{1, 2, 2, false}});
  StepResult r = w.step({ForagingWorld::Load, ForagingWorld::Load, ForagingWorld::Noop});
  CHECK(r.reward == 0.0);
  CHECK_FALSE(w.foods()[0].collected);
}

TEST_CASE("foraging: movement, blocking, and collisions") {
  ForagingWorld w(5, 5, 2, 1, false, 10);
  w.place({{2, 0, 1}, {2, 2, 1}}, {{4, 4, 1, false}});

  SUBCASE("simultaneous moves into one cell all fail") {
    // Both agents target (2,1).
    w.step({ForagingWorld::Right, ForagingWorld::Left});
    CHECK(w.agents()[0].col == 0);
    CHECK(w.agents()[1].col == 2);
  }
  SUBCASE("moving off-grid is a noop") {
    w.step({ForagingWorld::Left, ForagingWorld::Noop});
    CHECK(w.agents()[0].col == 0);
  }
  SUBCASE("agents cannot walk onto food or other agents") {
    ForagingWorld w2(5, 5, 2, 1, false, 10);
    w2.place({{4, 3, 1}, {3, 4, 1}}, {{4, 4, 1, false}});
    w2.step({ForagingWorld::Right, ForagingWorld::Down});
    CHECK(w2.agents()[0].col == 3);  // blocked by food
    CHECK(w2.agents()[1].row == 3);  // blocked by food
  }
}

TEST_CASE("foraging: no food collected means zero return") {
  ForagingWorld w(8, 8, 2, 3, true, 25);
  RngStream rng(3);
  w.reset(rng);
  double total = 0.0;
  StepResult r;
  do {
    r = w.step({ForagingWorld::Noop, ForagingWorld::Noop});
    total += r.reward;
  } while (!r.done);
  CHECK(total == 0.0);
  CHECK(w.steps_taken() == 25);
}

TEST_CASE("foraging: horizon is enforced and return stays in [0,1]") {
  EnvDescriptor d = descriptor_for(EnvKind::Foraging);
  auto env = make_env(d);
  RngStream env_rng(11);
  RngStream act_rng(12);
  for (int episode = 0; episode < 50; ++episode) {
    env->reset(env_rng);
    double total = 0.0;
    int steps = 0;
    StepResult r;
    do {
      JointAction a(2);
      for (int i = 0; i < 2; ++i) a[i] = act_rng.uniform_int(0, 5);
      r = env->step(a);
      total += r.reward;
      ++steps;
    } while (!r.done);
    CHECK(steps <= d.time_limit);
    CHECK(total >= 0.0);
    CHECK(total <= 1.0 + 1e-12);
  }
}

TEST_CASE("foraging: determinism under fixed seed and action sequence") {
  auto run = [](std::uint64_t seed) {
    ForagingWorld w(8, 8, 2, 3, true, 25);
    RngStream env_rng(seed);
    RngStream act_rng(99);
    std::vector<StateKey> keys;
    for (int e = 0; e < 5; ++e) {
      StepResult r = w.reset(env_rng);
      keys.push_back(r.state);
      do {
        JointAction a(2);
        for (int i = 0; i < 2; ++i) a[i] = act_rng.uniform_int(0, 5);
        r = w.step(a);
        keys.push_back(r.state);
      } while (!r.done);
    }
    return keys;
  };
  CHECK(run(7) == run(7));
  CHECK(run(7) != run(8));
}

TEST_CASE("foraging features have the documented layout") {
  ForagingWorld w(5, 5, 2, 2, false, 10);
  w.place({{1, 1, 1}, {3, 3, 1}}, {{1, 2, 2, false}, {4, 4, 1, false}});
  auto f = w.agent_features(0);
  // bias, row, col, level, 2 foods x 5, 1 other agent x 3
  CHECK(f.size() == 4 + 5 * 2 + 3);
  CHECK(f[0] == 1.0);
  CHECK(f[3] == 1.0);           // own level
  CHECK(f[8] == 1.0);           // food 0 adjacent
  CHECK(f[4] == 0.0);           // food 0 not collected
}

TEST_CASE("continuous quadratic reward") {
  ContinuousQuadratic env(3, 2.0, 0.5);
  std::vector<double> a{1.0, 0.5, 0.5};
  // sum = 2 -> first term 0; coupling: (1-0.5)^2 + 0 = 0.25 -> -0.125
  CHECK(env.reward(a) == doctest::Approx(-0.5 * 0.25));
  std::vector<double> b{0.0, 0.0, 0.0};
  CHECK(env.reward(b) == doctest::Approx(-4.0));
}

TEST_CASE("make_env validates its descriptor") {
  EnvDescriptor d = descriptor_for(EnvKind::Foraging);
  d.n_agents = 1;
  CHECK_THROWS_AS(make_env(d), ConfigError);

  EnvDescriptor c = descriptor_for(EnvKind::ContinuousQuadratic);
  CHECK_THROWS_AS(make_env(c), ConfigError);

  EnvDescriptor ok = descriptor_for(EnvKind::Foraging);
  auto env = make_env(ok);
  CHECK(env->n_agents() == 2);
  CHECK(env->max_steps() == 25);

  EnvDescriptor big = descriptor_for(EnvKind::Foraging);
  big.rows = 15;
  big.cols = 15;
  big.n_agents = 4;
  big.n_foods = 5;
  big.time_limit = 120;
  big.horizon = 120;
  big.action_counts.assign(4, 6);
  auto env2 = make_env(big);
  CHECK(env2->n_agents() == 4);
  CHECK(env2->max_steps() == 120);
}

TEST_CASE("intro game descriptor shape") {
  EnvDescriptor d = descriptor_for(EnvKind::IntroGame);
  CHECK(d.n_agents == 2);
  CHECK(d.action_counts == std::vector<int>{2, 2});
  CHECK(d.horizon == 1);
}
