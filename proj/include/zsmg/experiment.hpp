#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "zsmg/error.hpp"
#include "zsmg/evaluation.hpp"
#include "zsmg/game.hpp"
#include "zsmg/instances.hpp"
#include "zsmg/io.hpp"
#include "zsmg/planner.hpp"
#include "zsmg/sampling.hpp"

namespace zsmg {

enum class Metric { q_error_inf, q_true_error_inf, nash_gap_direct, nash_gap_onestep };

inline std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::q_error_inf: return "q_error_inf";
    case Metric::q_true_error_inf: return "q_true_error_inf";
    case Metric::nash_gap_direct: return "nash_gap_direct";
    case Metric::nash_gap_onestep: return "nash_gap_onestep";
  }
  return "unknown";
}

inline Metric metric_from_string(const std::string& name) {
  for (Metric m : {Metric::q_error_inf, Metric::q_true_error_inf, Metric::nash_gap_direct,
                   Metric::nash_gap_onestep})
    if (to_string(m) == name) return m;
  detail::fail(ErrorKind::invalid_input, "unknown metric \"" + name + "\"");
}

struct ExperimentRecord {
  std::string instance_id;
  long long N = 0;
  RngSpec seed;
  double q_error_inf = 0.0;
  double q_true_error_inf = 0.0;
  double nash_gap_direct = 0.0;
  double nash_gap_onestep = 0.0;
  double eps_opt_certified = 0.0;
  double runtime_ms = -1.0;  ///< negative when not recorded
  double gamma = 0.0;        ///< carried for summaries, not written to CSV

  double get(Metric m) const {
    switch (m) {
      case Metric::q_error_inf: return q_error_inf;
      case Metric::q_true_error_inf: return q_true_error_inf;
      case Metric::nash_gap_direct: return nash_gap_direct;
      case Metric::nash_gap_onestep: return nash_gap_onestep;
    }
    return 0.0;
  }
};

/// One game to sweep plus the rewards planned on it.
struct SweepInstance {
  std::string id;
  MarkovGame game;
  std::vector<std::vector<double>> rewards;  ///< reward-agnostic list; empty = game's own reward
};

struct ExperimentConfig {
  json instance;  ///< {"kind": "file" | "hard" | "random" | "embed_mdp", ...}
  std::string instance_id;
  std::vector<long long> n_grid;
  std::vector<RngSpec> seeds;
  PlanConfig plan;
  bool reward_agnostic = false;
  std::vector<std::string> reward_files;
  std::string output;
  std::string summary;
  std::vector<Metric> fit_metrics{Metric::q_error_inf, Metric::q_true_error_inf,
                                  Metric::nash_gap_direct, Metric::nash_gap_onestep};
  int workers = 1;
  bool record_runtime = false;
};

namespace detail {

inline PlanConfig plan_from_json(const json& j) {
  PlanConfig plan;
  if (j.contains("eps_opt")) plan.eps_opt = number_field(j, "eps_opt", "config");
  if (j.contains("max_iters")) plan.max_iters = field(j, "max_iters", "config").get<long>();
  if (!j.contains("oracle")) return plan;
  const auto& o = j["oracle"];
  const std::string kind = o.is_string() ? o.get<std::string>() : o.value("kind", std::string());
  if (kind == "exact_lp") return plan;
  require(kind == "smooth_regularized", ErrorKind::invalid_input,
          "oracle.kind must be exact_lp or smooth_regularized");
  plan.oracle = OracleKind::smooth_regularized;
  const std::string reg = o.value("regularizer", std::string("neg_entropy"));
  const double tau_max = o.value("tau_max", 1e-3);
  const double tau_min = o.value("tau_min", tau_max);
  if (reg == "neg_entropy") {
    plan.regularizer = RegularizerSpec::entropy(tau_max, tau_min);
  } else {
    require(reg == "tsallis", ErrorKind::invalid_input,
            "oracle.regularizer must be neg_entropy or tsallis");
    plan.regularizer = RegularizerSpec::tsallis(o.value("q", 0.5), tau_max, tau_min);
  }
  plan.validate();
  return plan;
}

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline double median(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

}  // namespace detail

/// Parses the sweep config. Relative paths resolve against `base_dir`.
inline ExperimentConfig config_from_json(const json& j, const std::filesystem::path& base_dir = {}) {
  using detail::require;
  ExperimentConfig cfg;
  cfg.instance = detail::field(j, "instance", "config");
  require(cfg.instance.is_object() && cfg.instance.contains("kind"), ErrorKind::invalid_input,
          "config.instance needs a \"kind\"");
  cfg.instance_id = j.value("instance_id", cfg.instance["kind"].get<std::string>());
  for (const auto& n : detail::field(j, "n_grid", "config")) {
    require(n.is_number_integer() && n.get<long long>() >= 1, ErrorKind::invalid_input,
            "n_grid entries must be positive integers");
    cfg.n_grid.push_back(n.get<long long>());
  }
  require(!cfg.n_grid.empty(), ErrorKind::invalid_input, "n_grid must not be empty");
  for (std::size_t i = 1; i < cfg.n_grid.size(); ++i)
    require(cfg.n_grid[i] > cfg.n_grid[i - 1], ErrorKind::invalid_input,
            "n_grid must be strictly increasing");
  for (const auto& s : detail::field(j, "seeds", "config")) {
    if (s.is_number_unsigned() || s.is_number_integer()) {
      cfg.seeds.push_back({s.get<std::uint64_t>(), 0});
    } else {
      require(s.is_object(), ErrorKind::invalid_input, "seeds entries must be integers or objects");
      cfg.seeds.push_back({s.at("seed").get<std::uint64_t>(), s.value("stream_id", std::uint64_t{0})});
    }
  }
  require(!cfg.seeds.empty(), ErrorKind::invalid_input, "seeds must not be empty");
  cfg.plan = detail::plan_from_json(j);
  if (j.contains("protocol")) {
    const auto& p = j["protocol"];
    const std::string kind = p.is_string() ? p.get<std::string>() : p.value("kind", std::string());
    if (kind == "reward_agnostic") {
      cfg.reward_agnostic = true;
      for (const auto& f : detail::field(p, "rewards", "config.protocol"))
        cfg.reward_files.push_back((base_dir / f.get<std::string>()).string());
      require(!cfg.reward_files.empty(), ErrorKind::invalid_input,
              "reward_agnostic protocol needs at least one reward file");
    } else {
      require(kind == "reward_aware", ErrorKind::invalid_input,
              "protocol must be reward_aware or reward_agnostic");
    }
  }
  cfg.output = (base_dir / j.value("output", std::string("sweep.csv"))).string();
  cfg.summary = j.contains("summary") ? (base_dir / j["summary"].get<std::string>()).string()
                                      : cfg.output + ".summary.json";
  if (j.contains("fit_metrics")) {
    cfg.fit_metrics.clear();
    for (const auto& m : j["fit_metrics"]) cfg.fit_metrics.push_back(metric_from_string(m.get<std::string>()));
  }
  cfg.workers = std::max(1, j.value("workers", 1));
  cfg.record_runtime = j.value("record_runtime", false);
  if (cfg.instance.contains("path"))
    cfg.instance["path"] = (base_dir / cfg.instance["path"].get<std::string>()).string();
  return cfg;
}

/// MDP file: {"gamma", "num_states", "num_actions", "transition": [S][A][S], "reward": [S][A]}.
inline MarkovGame load_embedded_mdp(const std::filesystem::path& path, int dummy_actions) {
  const auto j = read_json(path);
  const std::string where = "mdp";
  const int s = detail::int_field(j, "num_states", where);
  const int a = detail::int_field(j, "num_actions", where);
  detail::require(s > 0 && a > 0, ErrorKind::invalid_input, "MDP dimensions must be positive");
  std::vector<double> p;
  std::vector<double> r;
  detail::flatten(detail::field(j, "transition", where), {s, a, s}, 0, "transition", p);
  detail::flatten(detail::field(j, "reward", where), {s, a}, 0, "reward", r);
  return embed_mdp(s, a, p, r, detail::number_field(j, "gamma", where), dummy_actions);
}

/// Materializes the configured instance.
inline SweepInstance resolve_instance(const ExperimentConfig& cfg) {
  const auto& in = cfg.instance;
  const std::string kind = in.at("kind").get<std::string>();
  auto game = [&]() -> MarkovGame {
    if (kind == "file") return load_game(in.at("path").get<std::string>());
    if (kind == "embed_mdp")
      return load_embedded_mdp(in.at("path").get<std::string>(), in.value("dummy_actions", 1));
    if (kind == "random") {
      return random_game(in.at("states").get<int>(), in.at("max_actions").get<int>(),
                         in.at("min_actions").get<int>(), in.at("gamma").get<double>(),
                         in.value("branching", in.at("states").get<int>()),
                         in.value("seed", std::uint64_t{0}));
    }
    detail::require(kind == "hard", ErrorKind::invalid_input,
                    "instance.kind must be file, hard, random or embed_mdp");
    const auto spec = make_hard_spec(in.value("K", 1), in.value("L1", 2), in.value("L2", 2),
                                     in.at("gamma").get<double>(), in.at("eps").get<double>(),
                                     detail::triple_from(in.value("alternative", json()), "alternative"),
                                     detail::triple_from(in.value("reward", json()), "reward"));
    return build_hard_instance(spec).game;
  }();
  SweepInstance out{cfg.instance_id, std::move(game), {}};
  for (const auto& f : cfg.reward_files) {
    std::vector<double> r;
    const auto& d = out.game.dims();
    detail::flatten(detail::field(read_json(f), "reward", f), {d.states, d.max_actions, d.min_actions},
                    0, "reward", r);
    out.rewards.push_back(std::move(r));
  }
  return out;
}

namespace detail {

/// The four error metrics of one planned empirical game against the truth.
inline void score(ExperimentRecord& rec, const MarkovGame& truth, const MarkovGame& empirical,
                  const PlanResult& plan, const QTable& q_star) {
  const auto on_empirical = policy_evaluate(empirical, plan.mu_hat, plan.nu_hat);
  const auto on_truth = policy_evaluate(truth, plan.mu_hat, plan.nu_hat);
  rec.q_error_inf = max_abs_diff(on_empirical.q, q_star);
  rec.q_true_error_inf = max_abs_diff(on_truth.q, q_star);
  rec.nash_gap_direct = nash_gap(truth, plan.mu_hat, plan.nu_hat);
  const auto [mu_tilde, nu_tilde] = one_step_ne_extract(on_empirical.q);
  rec.nash_gap_onestep = nash_gap(truth, mu_tilde, nu_tilde);
  rec.eps_opt_certified = plan.certified_eps_opt;
}

}  // namespace detail

/// Runs every (N, seed) cell. Records come back sorted by N, then seed,
/// then reward index, regardless of how the worker pool schedules cells.
inline std::vector<ExperimentRecord> run_sweep(const SweepInstance& inst, const ExperimentConfig& cfg) {
  const auto& d = inst.game.dims();
  detail::require(static_cast<double>(d.triples()) <= 2e4, ErrorKind::invalid_input,
                  "instance too large for exact reference solutions");
  cfg.plan.validate();
  const double gamma = inst.game.discount();

  // Truth per reward, with its reference Q* at eps_opt / 100.
  std::vector<MarkovGame> truths;
  std::vector<std::string> ids;
  if (inst.rewards.empty()) {
    truths.push_back(inst.game);
    ids.push_back(inst.id);
  } else {
    for (std::size_t i = 0; i < inst.rewards.size(); ++i) {
      truths.push_back(inst.game.with_reward(inst.rewards[i]));
      ids.push_back(inst.id + "#r" + std::to_string(i));
    }
  }
  std::vector<QTable> q_star;
  PlanConfig reference = cfg.plan;
  reference.oracle = OracleKind::exact_lp;
  reference.eps_opt = cfg.plan.eps_opt / 100.0;
  for (const auto& g : truths) q_star.push_back(shapley_value_iteration(g, reference).q_star_hat);

  struct Cell {
    long long n;
    RngSpec seed;
  };
  std::vector<Cell> cells;
  for (long long n : cfg.n_grid)
    for (const auto& s : cfg.seeds) cells.push_back({n, s});
  std::stable_sort(cells.begin(), cells.end(), [](const Cell& x, const Cell& y) {
    if (x.n != y.n) return x.n < y.n;
    if (x.seed.seed != y.seed.seed) return x.seed.seed < y.seed.seed;
    return x.seed.stream_id < y.seed.stream_id;
  });

  std::vector<std::vector<ExperimentRecord>> results(cells.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      try {
        const auto start = std::chrono::steady_clock::now();
        // Sampling never sees a reward; each reward reuses the same counts.
        const auto model = estimate_model(inst.game, cells[i].n, cells[i].seed);
        for (std::size_t r = 0; r < truths.size(); ++r) {
          const auto empirical = empirical_game(model, truths[r].rewards(), gamma);
          const auto plan = shapley_value_iteration(empirical, cfg.plan);
          ExperimentRecord rec;
          rec.instance_id = ids[r];
          rec.N = cells[i].n;
          rec.seed = cells[i].seed;
          rec.gamma = gamma;
          detail::score(rec, truths[r], empirical, plan, q_star[r]);
          if (cfg.record_runtime) {
            rec.runtime_ms = std::chrono::duration<double, std::milli>(
                                 std::chrono::steady_clock::now() - start)
                                 .count();
          }
          results[i].push_back(std::move(rec));
        }
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(cells.size());
        return;
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    const int workers = std::min<int>(cfg.workers, static_cast<int>(cells.size()));
    for (int w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<ExperimentRecord> out;
  for (auto& batch : results)
    for (auto& rec : batch) out.push_back(std::move(rec));
  return out;
}

inline constexpr const char* kCsvHeader =
    "instance_id,N,seed,q_error_inf,q_true_error_inf,nash_gap_direct,nash_gap_onestep,"
    "eps_opt_certified,runtime_ms";

/// Seeds are written as "seed" or "seed:stream" when the stream is nonzero.
inline std::string to_csv(const std::vector<ExperimentRecord>& records) {
  using detail::format_double;
  std::string out = std::string(kCsvHeader) + "\n";
  for (const auto& r : records) {
    std::string seed = std::to_string(r.seed.seed);
    if (r.seed.stream_id != 0) seed += ":" + std::to_string(r.seed.stream_id);
    out += detail::csv_field(r.instance_id) + "," + std::to_string(r.N) + "," +
           detail::csv_field(seed) + "," + format_double(r.q_error_inf) + "," +
           format_double(r.q_true_error_inf) + "," + format_double(r.nash_gap_direct) + "," +
           format_double(r.nash_gap_onestep) + "," + format_double(r.eps_opt_certified) + "," +
           (r.runtime_ms >= 0.0 ? format_double(r.runtime_ms) : std::string()) + "\n";
  }
  return out;
}

struct RateFit {
  Metric metric = Metric::q_error_inf;
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::vector<long long> n_grid;
  std::vector<double> medians;
};

inline constexpr double kMetricFloor = 1e-12;

/// OLS of log(median over seeds) on log N. Needs >= 3 distinct N with >= 5
/// seeds each; throws `degenerate` when a median sits at the numerical floor.
inline RateFit fit_rate(const std::vector<ExperimentRecord>& records, Metric metric) {
  std::vector<long long> grid;
  for (const auto& r : records) grid.push_back(r.N);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  detail::require(grid.size() >= 3, ErrorKind::invalid_input,
                  "rate fit needs at least 3 distinct N, got " + std::to_string(grid.size()));
  RateFit fit;
  fit.metric = metric;
  fit.n_grid = grid;
  std::vector<double> xs;
  std::vector<double> ys;
  for (long long n : grid) {
    std::vector<double> vals;
    for (const auto& r : records)
      if (r.N == n) vals.push_back(r.get(metric));
    detail::require(vals.size() >= 5, ErrorKind::invalid_input,
                    "rate fit needs at least 5 seeds at N=" + std::to_string(n));
    const double m = detail::median(vals);
    detail::require(m > kMetricFloor, ErrorKind::degenerate,
                    std::string(to_string(metric)) + " median at N=" + std::to_string(n) + " is " +
                        detail::format_double(m) + ", below the numerical floor; not fitted");
    fit.medians.push_back(m);
    xs.push_back(std::log(static_cast<double>(n)));
    ys.push_back(std::log(m));
  }
  const double k = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i] / k;
    my += ys[i] / k;
  }
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return fit;
}

inline json to_json(const RateFit& fit) {
  return {{"metric", to_string(fit.metric)}, {"slope", fit.slope},
          {"intercept", fit.intercept},      {"r_squared", fit.r_squared},
          {"n_grid", fit.n_grid},            {"medians", fit.medians}};
}

/// Fits per instance id and metric, plus record-level audits.
inline json sweep_summary(const std::vector<ExperimentRecord>& records,
                          const std::vector<Metric>& metrics) {
  std::vector<std::string> ids;
  for (const auto& r : records)
    if (std::find(ids.begin(), ids.end(), r.instance_id) == ids.end()) ids.push_back(r.instance_id);
  json fits = json::array();
  json skipped = json::array();
  for (const auto& id : ids) {
    std::vector<ExperimentRecord> subset;
    for (const auto& r : records)
      if (r.instance_id == id) subset.push_back(r);
    for (Metric m : metrics) {
      try {
        auto j = to_json(fit_rate(subset, m));
        j["instance_id"] = id;
        fits.push_back(std::move(j));
      } catch (const Error& e) {
        skipped.push_back({{"instance_id", id}, {"metric", to_string(m)}, {"reason", e.what()},
                           {"kind", to_string(e.kind())}});
      }
    }
  }
  long long in_range = 0;
  long long ordering_violations = 0;
  for (const auto& r : records) {
    if (r.q_error_inf > 0.0 && r.q_error_inf <= 1.0 / std::sqrt(1.0 - r.gamma)) ++in_range;
    if (r.nash_gap_onestep > 4.0 / (1.0 - r.gamma) * r.q_error_inf + 1e-6) ++ordering_violations;
  }
  return {{"fits", fits},
          {"not_fitted", skipped},
          {"cells", records.size()},
          {"cells_in_rate_range", in_range},
          {"onestep_bound_violations", ordering_violations}};
}

}  // namespace zsmg
