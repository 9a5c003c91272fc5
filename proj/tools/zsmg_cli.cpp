#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "zsmg/zsmg.hpp"

namespace {

using namespace zsmg;

std::optional<HardTriple> parse_triple(const std::string& text) {
  if (text.empty()) return std::nullopt;
  HardTriple t;
  char c1 = 0, c2 = 0;
  std::istringstream in(text);
  if (!(in >> t.k >> c1 >> t.l1 >> c2 >> t.l2) || c1 != ',' || c2 != ',' || !in.eof()) {
    detail::fail(ErrorKind::invalid_input, "expected k,l1,l2 but got \"" + text + "\"");
  }
  return t;
}

PlanConfig plan_config(double eps, const std::string& oracle, const std::string& regularizer,
                       double tau, double q) {
  PlanConfig plan;
  plan.eps_opt = eps;
  if (oracle == "smooth_regularized") {
    plan.oracle = OracleKind::smooth_regularized;
    plan.regularizer = regularizer == "tsallis" ? RegularizerSpec::tsallis(q, tau, tau)
                                                : RegularizerSpec::entropy(tau, tau);
  }
  plan.validate();
  return plan;
}

void print(const json& j) { std::cout << j.dump(2) << "\n"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zero-sum Markov game planning and sample-complexity experiments"};
  app.require_subcommand(1);

  // solve
  auto* solve = app.add_subcommand("solve", "plan on a game file and print V*, policies, certificate");
  std::string solve_path;
  double solve_eps = 1e-6;
  std::string solve_oracle = "exact_lp";
  std::string solve_reg = "neg_entropy";
  double solve_tau = 1e-3;
  double solve_q = 0.5;
  bool solve_finite = false;
  solve->add_option("game", solve_path, "game JSON file")->required()->check(CLI::ExistingFile);
  solve->add_option("--eps", solve_eps, "target eps_opt");
  solve->add_option("--oracle", solve_oracle, "policy extraction oracle")
      ->check(CLI::IsMember({"exact_lp", "smooth_regularized"}));
  solve->add_option("--regularizer", solve_reg)->check(CLI::IsMember({"neg_entropy", "tsallis"}));
  solve->add_option("--tau", solve_tau, "regularization temperature for both players");
  solve->add_option("--q", solve_q, "Tsallis index");
  solve->add_flag("--finite-rewards", solve_finite, "accept rewards outside [0,1]");

  // estimate
  auto* estimate = app.add_subcommand("estimate", "sample N transitions per triple and write the counts");
  std::string est_path, est_out;
  long long est_n = 0;
  std::uint64_t est_seed = 0, est_stream = 0;
  estimate->add_option("game", est_path)->required()->check(CLI::ExistingFile);
  estimate->add_option("--n", est_n, "samples per (s,a,b)")->required()->check(CLI::PositiveNumber);
  estimate->add_option("--seed", est_seed)->required();
  estimate->add_option("--stream", est_stream);
  estimate->add_option("--out", est_out, "model JSON path (stdout if omitted)");

  // instance
  auto* instance = app.add_subcommand("instance", "write generated game files");
  instance->require_subcommand(1);
  auto* hard = instance->add_subcommand("hard", "lower-bound family member");
  int h_k = 1, h_l1 = 2, h_l2 = 2;
  double h_gamma = 0.7, h_eps = 1e-3;
  std::string h_alt, h_reward, h_out, h_sidecar;
  hard->add_option("--K", h_k);
  hard->add_option("--L1", h_l1);
  hard->add_option("--L2", h_l2);
  hard->add_option("--gamma", h_gamma);
  hard->add_option("--eps", h_eps);
  hard->add_option("--alt", h_alt, "alternative hypothesis k,l1,l2 (0-based, l2 >= 1)");
  hard->add_option("--reward", h_reward, "reward id k,l1,l2 (default r_1)");
  hard->add_option("--out", h_out, "game JSON path")->required();
  hard->add_option("--sidecar", h_sidecar, "instance sidecar path (default <out>.instance.json)");

  auto* random = instance->add_subcommand("random", "random game");
  int r_states = 4, r_max = 3, r_min = 3, r_branching = 0;
  double r_gamma = 0.8;
  std::uint64_t r_seed = 0;
  std::string r_out;
  random->add_option("--states", r_states);
  random->add_option("--max-actions", r_max);
  random->add_option("--min-actions", r_min);
  random->add_option("--gamma", r_gamma);
  random->add_option("--branching", r_branching, "successors per row (default: all states)");
  random->add_option("--seed", r_seed);
  random->add_option("--out", r_out)->required();

  auto* embed = instance->add_subcommand("embed", "single-controller game from an MDP file");
  std::string e_mdp, e_out;
  int e_dummy = 1;
  embed->add_option("--mdp", e_mdp, "MDP JSON file")->required()->check(CLI::ExistingFile);
  embed->add_option("--dummy-actions", e_dummy);
  embed->add_option("--out", e_out)->required();

  // sweep
  auto* sweep = app.add_subcommand("sweep", "run a sample-budget sweep and fit rates");
  std::string sweep_path;
  sweep->add_option("config", sweep_path)->required()->check(CLI::ExistingFile);

  // verify
  auto* verify = app.add_subcommand("verify", "check a hard instance sidecar");
  std::string verify_path;
  verify->add_option("instance", verify_path)->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*solve) {
      const auto game = game_from_json(read_json(solve_path),
                                       solve_finite ? RewardRange::finite : RewardRange::unit_interval);
      const auto plan =
          shapley_value_iteration(game, plan_config(solve_eps, solve_oracle, solve_reg, solve_tau, solve_q));
      print({{"value", plan.v_star_hat.values},
             {"mu", to_json(plan.mu_hat)},
             {"nu", to_json(plan.nu_hat)},
             {"certified_eps_opt", plan.certified_eps_opt},
             {"iterations", plan.iterations}});
    } else if (*estimate) {
      const auto model = estimate_model(load_game(est_path), est_n, {est_seed, est_stream});
      if (est_out.empty()) {
        std::cout << to_json(model).dump() << "\n";
      } else {
        save_json(est_out, to_json(model));
      }
    } else if (*hard) {
      const auto inst = build_hard_instance(
          make_hard_spec(h_k, h_l1, h_l2, h_gamma, h_eps, parse_triple(h_alt), parse_triple(h_reward)));
      save_json(h_out, to_json(inst.game));
      const std::string sidecar = h_sidecar.empty() ? h_out + ".instance.json" : h_sidecar;
      save_json(sidecar, sidecar_json(inst));
      print({{"game", h_out}, {"sidecar", sidecar}, {"spec", to_json(inst.spec)}});
    } else if (*random) {
      const auto game = random_game(r_states, r_max, r_min, r_gamma,
                                    r_branching > 0 ? r_branching : r_states, r_seed);
      save_json(r_out, to_json(game));
    } else if (*embed) {
      save_json(e_out, to_json(load_embedded_mdp(e_mdp, e_dummy)));
    } else if (*sweep) {
      const auto cfg = config_from_json(read_json(sweep_path),
                                        std::filesystem::path(sweep_path).parent_path());
      const auto records = run_sweep(resolve_instance(cfg), cfg);
      write_text_atomic(cfg.output, to_csv(records));
      auto summary = sweep_summary(records, cfg.fit_metrics);
      summary["csv"] = cfg.output;
      save_json(cfg.summary, summary);
      print(summary);
    } else if (*verify) {
      const auto sidecar = read_json(verify_path);
      const auto inst = build_hard_instance(hard_spec_from_json(detail::field(sidecar, "spec", "instance")));
      auto report = verify_instance(inst);
      if (sidecar.contains("q_closed_form")) {
        std::vector<double> stored;
        const auto& d = inst.q_closed_form.dims;
        detail::flatten(sidecar["q_closed_form"], {d.states, d.max_actions, d.min_actions}, 0,
                        "q_closed_form", stored);
        const double diff = max_abs_diff(stored, inst.q_closed_form.values);
        report.checks.push_back({"sidecar_consistency", diff <= 1e-12,
                                 "max |stored - rebuilt| = " + std::to_string(diff)});
      }
      print(to_json(report));
      if (!report.all_passed()) {
        std::cerr << json{{"error", "certification_failed"},
                          {"message", "one or more instance checks failed"}}
                         .dump()
                  << "\n";
        return 1;
      }
    }
  } catch (const Error& e) {
    std::cerr << json{{"error", to_string(e.kind())}, {"message", e.what()}}.dump() << "\n";
    return 1;
  } catch (const json::exception& e) {
    std::cerr << json{{"error", "invalid_input"}, {"message", e.what()}}.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "internal"}, {"message", e.what()}}.dump() << "\n";
    return 1;
  }
  return 0;
}
