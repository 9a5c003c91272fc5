#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "zsmg/experiment.hpp"

using namespace zsmg;

namespace {

std::vector<ExperimentRecord> synthetic(double (*f)(double)) {
  std::vector<ExperimentRecord> out;
  for (long long n : {10LL, 100LL, 1000LL, 10000LL})
    for (std::uint64_t s = 0; s < 5; ++s) {
      ExperimentRecord r;
      r.instance_id = "syn";
      r.N = n;
      r.seed = {s, 0};
      r.q_error_inf = f(static_cast<double>(n)) * (1.0 + 0.01 * (static_cast<double>(s) - 2.0));
      out.push_back(r);
    }
  return out;
}

ExperimentConfig base_config(const json& instance) {
  return config_from_json({{"instance", instance},
                           {"n_grid", {16, 64, 256}},
                           {"seeds", {1, 2, 3, 4, 5}},
                           {"eps_opt", 1e-7}});
}

}  // namespace

TEST(FitRate, RecoversPowerLaws) {
  auto fit = fit_rate(synthetic([](double n) { return 3.0 / std::sqrt(n); }), Metric::q_error_inf);
  EXPECT_NEAR(fit.slope, -0.5, 1e-12);
  EXPECT_NEAR(fit.intercept, std::log(3.0), 1e-12);
  EXPECT_NEAR(fit.r_squared, 1.0, 1e-12);
  fit = fit_rate(synthetic([](double n) { return 0.2 / n; }), Metric::q_error_inf);
  EXPECT_NEAR(fit.slope, -1.0, 1e-12);
}

TEST(FitRate, RefusesDegenerateData) {
  try {
    fit_rate(synthetic([](double) { return 0.0; }), Metric::q_error_inf);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::degenerate);
  }
  auto few = synthetic([](double n) { return 1.0 / n; });
  few.resize(8);  // only two N values
  EXPECT_THROW(fit_rate(few, Metric::q_error_inf), Error);
}

TEST(RunSweep, DeterministicGameIsExact) {
  const auto g = random_game(4, 2, 3, 0.8, 1, 3);
  auto cfg = base_config({{"kind", "random"}});
  const auto records = run_sweep({"det", g, {}}, cfg);
  ASSERT_EQ(records.size(), 15u);
  for (const auto& r : records) {
    EXPECT_LE(r.q_error_inf, 1e-7);
    EXPECT_LE(r.q_true_error_inf, 1e-7);
    EXPECT_LE(r.nash_gap_direct, 2e-7);
    EXPECT_LE(r.eps_opt_certified, 1e-7);
  }
}

TEST(RunSweep, LargeSampleErrorsAreSmall) {
  const auto g = random_game(2, 2, 2, 0.5, 2, 4);
  auto cfg = base_config({{"kind", "random"}});
  cfg.n_grid = {1000000};
  cfg.seeds = {{9, 0}};
  const auto r = run_sweep({"big", g, {}}, cfg).at(0);
  // Hoeffding scale sqrt(log(16 / 1e-3) / 2e6) ~ 2e-3, times 1/(1-gamma)^2.
  EXPECT_LE(r.q_error_inf, 1e-2);
  EXPECT_LE(r.nash_gap_direct, 2e-2);
}

TEST(RunSweep, RewardAgnosticSharesSamples) {
  const auto g = random_game(3, 2, 2, 0.7, 2, 5);
  std::vector<std::vector<double>> rewards;
  for (int k = 0; k < 3; ++k) rewards.push_back(random_game(3, 2, 2, 0.7, 2, 50 + k).rewards());
  auto cfg = base_config({{"kind", "random"}});
  const auto records = run_sweep({"ra", g, rewards}, cfg);
  ASSERT_EQ(records.size(), 3u * 15u);
  EXPECT_EQ(records[0].instance_id, "ra#r0");
  EXPECT_EQ(records[2].instance_id, "ra#r2");
  GenerativeModel sampler(g);
  reward_agnostic_pipeline(sampler, 0.7, 64, rewards, cfg.plan, {1, 0});
  EXPECT_EQ(sampler.calls(), 64LL * g.dims().triples());
}

TEST(RunSweep, CsvDeterministicAcrossWorkers) {
  const auto g = random_game(3, 2, 2, 0.7, 2, 6);
  auto cfg = base_config({{"kind", "random"}});
  const auto one = to_csv(run_sweep({"w", g, {}}, cfg));
  cfg.workers = 2;
  const auto two = to_csv(run_sweep({"w", g, {}}, cfg));
  EXPECT_EQ(one, two);
  EXPECT_EQ(one.substr(0, one.find('\n')), kCsvHeader);
  EXPECT_EQ(std::count(one.begin(), one.end(), '\n'), 16);
}

TEST(RunSweep, OneStepBoundOnEveryRecord) {
  const auto g = random_game(4, 3, 3, 0.8, 3, 7);
  auto cfg = base_config({{"kind", "random"}});
  const auto records = run_sweep({"b", g, {}}, cfg);
  for (const auto& r : records)
    EXPECT_LE(r.nash_gap_onestep, 4.0 / (1.0 - 0.8) * r.q_error_inf + 1e-6);
  const auto summary = sweep_summary(records, cfg.fit_metrics);
  EXPECT_EQ(summary["onestep_bound_violations"], 0);
  EXPECT_EQ(summary["cells"], records.size());
}

TEST(Config, ParsesAndRejects) {
  const json good = {{"instance", {{"kind", "hard"}, {"gamma", 0.7}, {"eps", 1e-3}}},
                     {"n_grid", {8, 16, 32}},
                     {"seeds", {1, {{"seed", 2}, {"stream_id", 3}}}},
                     {"oracle", {{"kind", "smooth_regularized"}, {"tau_max", 1e-3}}},
                     {"output", "out.csv"}};
  const auto cfg = config_from_json(good, "/tmp/base");
  EXPECT_EQ(cfg.seeds[1].stream_id, 3u);
  EXPECT_EQ(cfg.plan.oracle, OracleKind::smooth_regularized);
  EXPECT_EQ(cfg.output, "/tmp/base/out.csv");
  EXPECT_EQ(cfg.summary, "/tmp/base/out.csv.summary.json");
  EXPECT_EQ(resolve_instance(cfg).game.num_states(), 1 + 2 * 4);

  auto bad = good;
  bad["n_grid"] = {16, 8};
  EXPECT_THROW(config_from_json(bad), Error);
  bad = good;
  bad.erase("seeds");
  EXPECT_THROW(config_from_json(bad), Error);
  bad = good;
  bad["oracle"] = "simplex";
  EXPECT_THROW(config_from_json(bad), Error);
  bad = good;
  bad["fit_metrics"] = {"q_error_two"};
  EXPECT_THROW(config_from_json(bad), Error);
  bad = good;
  bad["instance"]["kind"] = "cube";
  EXPECT_THROW(resolve_instance(config_from_json(bad)), Error);
}
