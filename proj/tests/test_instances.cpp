#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "zsmg/instances.hpp"
#include "zsmg/io.hpp"

using namespace zsmg;

namespace {

// Each construction inequality written out again, directly from alpha1/alpha2.
bool feasible_by_hand(double gamma, double eps, double a1, double a2) {
  const double p0 = gamma;
  auto f = [&](double p) { return gamma / (1 - gamma * p); };
  const double m = p0 - 2 * a1 - 2 * a2;
  const bool simplex = a1 > 0 && a2 >= 2 * a1 && p0 > 0.5 + 2 * a1 + 2 * a2 && p0 < 1 &&
                       a2 / (1 - p0) < 0.5 && m > 0 && a2 / m < 0.5;
  const bool null_gap = f(p0) - f(p0 - a1) >= 20 * eps && f(p0 - a1) - f(p0 - 2 * a1) >= 20 * eps;
  const double w1 = f(p0) - f(p0 - a2), w2 = f(p0 - a2) - f(p0 - 2 * a2);
  const bool window = w1 >= 20 * eps && w1 <= 48 * eps && w2 >= 20 * eps && w2 <= 48 * eps;
  const bool separated = f(p0 - 2 * a1) - f(p0 - a2) >= eps;
  const double beta = (f(p0 - a1) - f(p0 - 2 * a2) + eps) / (f(p0) - f(p0 - 2 * a2));
  return simplex && null_gap && window && separated && beta <= 1 - 19.0 / 96;
}

const CheckResult& check(const InstanceReport& r, const std::string& name) {
  for (const auto& c : r.checks)
    if (c.name == name) return c;
  throw std::runtime_error("missing check " + name);
}

}  // namespace

TEST(SelectConstants, FeasibleAtModerateDiscount) {
  const auto c = select_constants(0.7, 1e-3);
  const double unit = (1 - 0.49) * (1 - 0.49) * 1e-3 / 0.7;
  EXPECT_NEAR(c.alpha1, c.c_prime * unit, 1e-15);
  EXPECT_NEAR(c.alpha2, c.c * unit, 1e-15);
  EXPECT_GE(c.c, 2 * c.c_prime);
  EXPECT_TRUE(feasible_by_hand(0.7, 1e-3, c.alpha1, c.alpha2));
}

TEST(SelectConstants, LargeEpsInfeasible) {
  try {
    select_constants(0.7, 0.05);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::infeasible);
    EXPECT_NE(std::string(e.what()).find("first violated constraint"), std::string::npos);
  }
  EXPECT_THROW(select_constants(0.5, 1e-3), Error);
}

TEST(BuildHardInstance, NullClosedForm) {
  const auto inst = build_hard_instance(make_hard_spec(2, 2, 3, 0.9, 1e-3));
  const double expected = 0.9 / (1 - 0.81);
  EXPECT_NEAR(expected, 4.736842, 1e-6);
  for (int k = 0; k < 2; ++k)
    for (int a = 0; a < 2; ++a)
      for (int b = 1; b < 3; ++b) EXPECT_NEAR(inst.q_closed_form(k, a, b), expected, 1e-12);
  // Cross-check by evaluating any policy pair on the built game.
  const auto& g = inst.game;
  const auto mu = StationaryPolicy::uniform(Player::max_player, g.num_states(), 2);
  const auto nu = StationaryPolicy::uniform(Player::min_player, g.num_states(), 3);
  const auto ev = policy_evaluate(g, mu, nu);
  for (int k = 0; k < 2; ++k)
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 3; ++b) EXPECT_NEAR(ev.q(k, a, b), inst.q_closed_form(k, a, b), 1e-10);
  EXPECT_EQ(g.num_states(), 2 + 2 * 2 * 2 * 3);
}

TEST(BuildHardInstance, NullHasUniquePureEquilibrium) {
  const auto inst = build_hard_instance(make_hard_spec(2, 3, 3, 0.8, 1e-3));
  for (int k = 0; k < 2; ++k) {
    ASSERT_TRUE(inst.claimed_ne.count(k));
    EXPECT_EQ(inst.claimed_ne.at(k), std::make_pair(0, 0));
    const Matrix m = state_matrix(inst.q_closed_form, k);
    const auto b = value_bounds(m);
    EXPECT_EQ(b.maximin, b.minimax);
    const auto sol = solve_exact(m);
    EXPECT_NEAR(sol.max_strategy(0), 1.0, 1e-12);
    EXPECT_NEAR(sol.min_strategy(0), 1.0, 1e-12);
  }
}

TEST(BuildHardInstance, AlternativeMovesEquilibrium) {
  const HardTriple t{1, 2, 1};
  const auto inst = build_hard_instance(make_hard_spec(2, 3, 2, 0.8, 1e-3, t, t));
  EXPECT_EQ(inst.claimed_ne.at(1), std::make_pair(2, 1));
  EXPECT_EQ(inst.claimed_ne.at(0), std::make_pair(0, 0));
  const auto sol = solve_exact(state_matrix(inst.q_closed_form, 1));
  EXPECT_NEAR(sol.max_strategy(2), 1.0, 1e-12);
  EXPECT_NEAR(sol.min_strategy(1), 1.0, 1e-12);
  // The reward stays in [0, 1] and is constant across actions at y1.
  for (double r : inst.game.rewards()) {
    EXPECT_GE(r, 0.0);
    EXPECT_LE(r, 1.0);
  }
}

TEST(BuildHardInstance, RejectsBadSpecs) {
  auto spec = make_hard_spec(1, 2, 2, 0.7, 1e-3, HardTriple{0, 0, 0});
  EXPECT_THROW(build_hard_instance(spec), Error);  // l2 must avoid the first column
  spec = make_hard_spec(1, 2, 2, 0.7, 1e-3);
  spec.alpha2 = spec.alpha1;
  EXPECT_THROW(build_hard_instance(spec), Error);
}

TEST(VerifyInstance, FeasibleSpecsPass) {
  for (double gamma : {0.7, 0.9})
    for (double eps : {5e-4, 1e-3}) {
      const HardTriple t{0, 1, 1};
      for (auto alt : {std::optional<HardTriple>{}, std::optional<HardTriple>{t}}) {
        const auto inst = build_hard_instance(make_hard_spec(1, 2, 3, gamma, eps, alt, alt));
        const auto report = verify_instance(inst);
        for (const auto& c : report.checks) EXPECT_TRUE(c.passed) << c.name << ": " << c.detail;
      }
    }
}

TEST(VerifyInstance, ZeroedPerturbationFailsSaddle) {
  const HardTriple t{0, 1, 1};
  auto spec = make_hard_spec(1, 2, 2, 0.7, 1e-3, t, t);
  spec.alpha2 = 0.0;
  const auto report = verify_instance(build_hard_instance(spec, false));
  EXPECT_FALSE(check(report, "strict_saddle").passed);
  EXPECT_FALSE(report.all_passed());
}

TEST(VerifyInstance, MismatchedRewardClaimsNothing) {
  const auto inst = build_hard_instance(make_hard_spec(1, 2, 2, 0.7, 1e-3, std::nullopt, HardTriple{0, 1, 1}));
  EXPECT_TRUE(inst.claimed_ne.empty());
  // Equilibrium value sits between the first-column entries.
  const Matrix m = state_matrix(inst.q_closed_form, 0);
  const auto sol = solve_exact(m);
  const auto& s = inst.spec;
  auto f = [&](double p) { return s.gamma / (1 - s.gamma * p); };
  EXPECT_GE(sol.value, f(s.p0 - 2 * s.alpha1) - 1e-12);
  EXPECT_LE(sol.value, f(s.p0 - s.alpha1) + 1e-12);
  EXPECT_TRUE(verify_instance(inst).all_passed());
}

TEST(EmbedMdp, MatchesMdpOracle) {
  // Two states, two actions: stay (r=0.5) or move to the rewarding state (r=0).
  const std::vector<double> p = {1, 0, 0, 1, 0, 1, 0, 1};
  const std::vector<double> r = {0.5, 0.0, 1.0, 1.0};
  const auto v = oracle::mdp_value(2, 2, p, r, 0.9);
  EXPECT_NEAR(v[1], 10.0, 1e-9);
  EXPECT_NEAR(v[0], 9.0, 1e-9);  // move once, then collect 1 forever
  const auto g = embed_mdp(2, 2, p, r, 0.9, 3);
  PlanConfig cfg;
  cfg.eps_opt = 1e-9;
  const auto plan = shapley_value_iteration(g, cfg);
  EXPECT_NEAR(plan.v_star_hat[0], 9.0, 1e-8);
  const auto mu_opt = StationaryPolicy::deterministic(Player::max_player, 2, {1, 0});
  std::mt19937_64 rng(41);
  for (int t = 0; t < 5; ++t)
    EXPECT_NEAR(nash_gap(g, mu_opt, oracle::random_policy(rng, Player::min_player, 2, 3)), 0.0, 1e-7);
}

TEST(EmbedMdp, SingleDummyActionReproducesValueIteration) {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int s = 3, a = 2;
  std::vector<double> p(s * a * s), r(s * a);
  for (int i = 0; i < s * a; ++i) {
    double tot = 0;
    for (int j = 0; j < s; ++j) tot += (p[i * s + j] = u(rng));
    for (int j = 0; j < s; ++j) p[i * s + j] /= tot;
    r[i] = u(rng);
  }
  const auto g = embed_mdp(s, a, p, r, 0.8, 1);
  PlanConfig cfg;
  cfg.eps_opt = 1e-10;
  const auto plan = shapley_value_iteration(g, cfg);
  const auto v = oracle::mdp_value(s, a, p, r, 0.8);
  for (int x = 0; x < s; ++x) EXPECT_NEAR(plan.v_star_hat[x], v[x], 1e-10);
  EXPECT_THROW(embed_mdp(s, a, p, {0.1}, 0.8, 1), Error);
}

TEST(RandomGame, Properties) {
  const auto det = random_game(6, 2, 2, 0.5, 1, 1);
  for (double x : det.transitions()) EXPECT_TRUE(x == 0.0 || x == 1.0);
  EXPECT_EQ(random_game(4, 3, 2, 0.9, 2, 77), random_game(4, 3, 2, 0.9, 2, 77));
  EXPECT_THROW(random_game(3, 2, 2, 0.5, 4, 1), Error);
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto g = random_game(3, 2, 2, 0.5, 2, seed);
    for (int s = 0; s < 3; ++s)
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
          double sum = 0.0;
          int support = 0;
          for (double x : g.transition_row(s, a, b)) {
            sum += x;
            support += x > 0.0;
          }
          EXPECT_NEAR(sum, 1.0, 1e-12);
          EXPECT_EQ(support, 2);
        }
  }
}

TEST(HardInstanceJson, SidecarRoundTrip) {
  const HardTriple t{0, 1, 1};
  const auto inst = build_hard_instance(make_hard_spec(1, 2, 2, 0.7, 1e-3, t, t));
  const auto side = sidecar_json(inst);
  const auto spec = hard_spec_from_json(side["spec"]);
  EXPECT_EQ(build_hard_instance(spec).game, inst.game);
  EXPECT_EQ(side["claimed_ne"]["0"], json::array({1, 1}));
  EXPECT_EQ(game_from_json(to_json(inst.game)), inst.game);
}
