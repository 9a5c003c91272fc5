#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "zsmg/instances.hpp"
#include "zsmg/io.hpp"
#include "zsmg/sampling.hpp"

using namespace zsmg;

TEST(GenerativeDraw, PointMass) {
  const auto g = MarkovGame::create({3, 1, 1}, 0.5, {0, 0, 1, 1, 0, 0, 0, 1, 0}, {0, 0, 0});
  std::mt19937_64 e(1);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(generative_draw(g, 0, 0, 0, e), 2);
  EXPECT_THROW(generative_draw(g, 3, 0, 0, e), Error);
}

TEST(GenerativeDraw, UniformFrequencies) {
  std::vector<double> p(16, 0.25);
  const auto g = MarkovGame::create({4, 1, 1}, 0.5, p, {0, 0, 0, 0});
  std::mt19937_64 e(2);
  const int n = 100000;
  std::vector<int> hits(4, 0);
  for (int i = 0; i < n; ++i) ++hits[generative_draw(g, 1, 0, 0, e)];
  const double sigma = std::sqrt(n * 0.25 * 0.75);
  for (int h : hits) EXPECT_LE(std::abs(h - n * 0.25), 3 * sigma);
}

TEST(GenerativeDraw, Deterministic) {
  const auto g = random_game(5, 2, 2, 0.5, 5, 3);
  auto e1 = triple_engine({9, 4}, 1, 1, 0);
  auto e2 = triple_engine({9, 4}, 1, 1, 0);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(generative_draw(g, 1, 1, 0, e1), generative_draw(g, 1, 1, 0, e2));
}

TEST(EstimateModel, CountRatio) {
  const EmpiricalModel m{{2, 1, 1}, 5, {3, 2, 0, 5}};
  m.validate();
  const auto p = m.p_hat();
  EXPECT_DOUBLE_EQ(p[0], 0.6);
  EXPECT_DOUBLE_EQ(p[1], 0.4);
}

TEST(EstimateModel, DeterministicGameExact) {
  const auto g = random_game(4, 2, 3, 0.7, 1, 5);
  const auto m = estimate_model(g, 17, {1, 0});
  EXPECT_EQ(m.p_hat(), g.transitions());
}

TEST(EstimateModel, CallCountAndRowSums) {
  const auto g = random_game(3, 2, 2, 0.5, 3, 6);
  GenerativeModel sampler(g);
  const auto m = estimate_model(sampler, 40, {2, 0});
  EXPECT_EQ(sampler.calls(), 40LL * 3 * 2 * 2);
  EXPECT_NO_THROW(m.validate());
}

TEST(EstimateModel, SeedDeterminismAndStreams) {
  const auto g = random_game(3, 2, 2, 0.5, 3, 7);
  EXPECT_EQ(estimate_model(g, 50, {3, 1}), estimate_model(g, 50, {3, 1}));
  EXPECT_NE(estimate_model(g, 50, {3, 1}).counts, estimate_model(g, 50, {3, 2}).counts);
}

TEST(EstimateModel, ConcentrationEnvelope) {
  const auto g = random_game(3, 2, 2, 0.5, 3, 8);
  const int n = 10000;
  const double bound = 5 * std::sqrt(std::log(6.0 * 3 * 2 * 2) / (2.0 * n));
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto m = estimate_model(g, n, {seed, 0});
    EXPECT_LE(max_abs_diff(m.p_hat(), g.transitions()), bound);
  }
}

TEST(EmpiricalGame, ReusesTransitions) {
  const auto g = random_game(3, 2, 2, 0.5, 3, 9);
  // N=1 draws give point masses.
  const auto one = estimate_model(g, 1, {4, 0});
  for (double p : one.p_hat()) EXPECT_TRUE(p == 0.0 || p == 1.0);
  const auto model = estimate_model(g, 30, {5, 0});
  std::vector<double> r2(g.rewards().size(), 0.25);
  const auto g1 = empirical_game(model, g.rewards(), 0.5);
  const auto g2 = empirical_game(model, r2, 0.5);
  EXPECT_EQ(g1.transitions(), g2.transitions());
  EXPECT_EQ(g2.rewards(), r2);
  EXPECT_THROW(empirical_game(model, {0.1}, 0.5), Error);
}

TEST(EmpiricalGame, ExactModelReproducesGame) {
  // Counts proportional to a rational P give P-hat = P.
  const auto g = MarkovGame::create({2, 1, 1}, 0.6, {0.25, 0.75, 0.5, 0.5}, {0.3, 0.9});
  const EmpiricalModel m{{2, 1, 1}, 4, {1, 3, 2, 2}};
  EXPECT_EQ(empirical_game(m, g.rewards(), 0.6), g);
}

TEST(RewardAgnostic, SingleRewardMatchesDirectPlanning) {
  const auto g = random_game(3, 2, 2, 0.7, 3, 10);
  PlanConfig cfg;
  cfg.eps_opt = 1e-8;
  const auto res = reward_agnostic_pipeline(g, 64, {g.rewards()}, cfg, {11, 0});
  const auto direct = shapley_value_iteration(
      empirical_game(estimate_model(g, 64, {11, 0}), g.rewards(), 0.7), cfg);
  ASSERT_EQ(res.size(), 1u);
  EXPECT_EQ(res[0].q_star_hat.values, direct.q_star_hat.values);
  EXPECT_EQ(res[0].mu_hat, direct.mu_hat);
}

TEST(RewardAgnostic, ComplementaryRewards) {
  // Deterministic game invariant under swapping the players' actions: then
  // the maximizer of 1 - r faces the same game as the minimizer of r.
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const GameDims d{3, 3, 3};
  std::vector<double> p(d.triples() * 3, 0.0), r(d.triples());
  for (int s = 0; s < 3; ++s)
    for (int a = 0; a < 3; ++a)
      for (int b = a; b < 3; ++b) {
        const int next = static_cast<int>(rng() % 3);
        const double x = u(rng);
        for (auto [i, j] : {std::pair{a, b}, std::pair{b, a}}) {
          p[d.triple(s, i, j) * 3 + next] = 1.0;
          r[d.triple(s, i, j)] = x;
        }
      }
  const auto g = MarkovGame::create(d, 0.8, p, r);
  std::vector<double> flipped(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) flipped[i] = 1.0 - r[i];
  PlanConfig cfg;
  cfg.eps_opt = 1e-9;
  const auto res = reward_agnostic_pipeline(g, 10, {r, flipped}, cfg, {13, 0});
  for (int s = 0; s < 3; ++s)
    EXPECT_NEAR(res[1].v_star_hat[s], 1.0 / (1.0 - 0.8) - res[0].v_star_hat[s], 1e-8);
}

TEST(RewardAgnostic, PermutationInvariance) {
  const auto g = random_game(3, 2, 2, 0.7, 3, 14);
  std::vector<std::vector<double>> rewards;
  std::mt19937_64 rng(15);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 3; ++k) {
    std::vector<double> r(g.rewards().size());
    for (auto& x : r) x = u(rng);
    rewards.push_back(r);
  }
  PlanConfig cfg;
  const auto a = reward_agnostic_pipeline(g, 32, rewards, cfg, {16, 0});
  std::vector<std::vector<double>> reversed(rewards.rbegin(), rewards.rend());
  const auto b = reward_agnostic_pipeline(g, 32, reversed, cfg, {16, 0});
  for (int k = 0; k < 3; ++k) {
    EXPECT_EQ(a[k].q_star_hat.values, b[2 - k].q_star_hat.values);
    EXPECT_EQ(a[k].mu_hat, b[2 - k].mu_hat);
    EXPECT_EQ(a[k].nu_hat, b[2 - k].nu_hat);
  }
}

TEST(RewardAgnostic, SamplesOnce) {
  const auto g = random_game(3, 2, 2, 0.7, 3, 17);
  GenerativeModel sampler(g);
  std::vector<std::vector<double>> rewards(3, g.rewards());
  reward_agnostic_pipeline(sampler, 0.7, 20, rewards, PlanConfig{}, {18, 0});
  EXPECT_EQ(sampler.calls(), 20LL * 3 * 2 * 2);
}

TEST(ModelJson, RoundTrip) {
  const auto g = random_game(3, 2, 2, 0.7, 3, 19);
  const auto m = estimate_model(g, 25, {20, 0});
  EXPECT_EQ(model_from_json(json::parse(to_json(m).dump())), m);
  auto bad = to_json(m);
  bad["counts"][0][0][0][0] = bad["counts"][0][0][0][0].get<long long>() + 1;
  EXPECT_THROW(model_from_json(bad), Error);
}
