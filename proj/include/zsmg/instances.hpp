#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "zsmg/error.hpp"
#include "zsmg/evaluation.hpp"
#include "zsmg/game.hpp"
#include "zsmg/matrix_game.hpp"
#include "zsmg/planner.hpp"
#include "zsmg/sampling.hpp"

namespace zsmg {

// ---------------------------------------------------------------------------
// Lower-bound family. Indices k, l1, l2 are 0-based; action b_0 plays the
// role of the distinguished first column, so alternatives need l2 != 0.

struct HardTriple {
  int k = 0;
  int l1 = 0;
  int l2 = 1;
  bool operator==(const HardTriple&) const = default;
};

struct HardInstanceSpec {
  int K = 1;
  int L1 = 2;
  int L2 = 2;
  double gamma = 0.7;
  double eps = 1e-3;
  double p0 = 0.7;
  double alpha1 = 0.0;
  double alpha2 = 0.0;
  double c_prime = 0.0;  ///< alpha1 = c' (1 - gamma p0)^2 eps / gamma
  double c = 0.0;        ///< alpha2 = c  (1 - gamma p0)^2 eps / gamma
  std::optional<HardTriple> alternative;  ///< empty = null hypothesis
  std::optional<HardTriple> reward;       ///< empty = r_1
};

struct ConstantChoice {
  double c_prime = 0.0;
  double c = 0.0;
  double alpha1 = 0.0;
  double alpha2 = 0.0;
};

namespace detail {

/// gamma / (1 - gamma p): closed-form Q of an x-state whose y1 loops with p.
inline double loop_value(double gamma, double p) { return gamma / (1.0 - gamma * p); }

struct Constraint {
  std::string name;
  bool holds = false;
};

/// Every construction inequality, in a fixed order.
inline std::vector<Constraint> construction_constraints(double gamma, double eps, double p0,
                                                        double a1, double a2) {
  const auto f = [&](double p) { return loop_value(gamma, p); };
  const double null_gap = std::min(f(p0) - f(p0 - a1), f(p0 - a1) - f(p0 - 2 * a1));
  const double g_row = f(p0) - f(p0 - a2);
  const double g_col = f(p0 - a2) - f(p0 - 2 * a2);
  const double separation = f(p0 - 2 * a1) - f(p0 - a2);
  const double beta = (f(p0 - a1) - f(p0 - 2 * a2) + eps) / (f(p0) - f(p0 - 2 * a2));
  const double margin = p0 - 2 * a1 - 2 * a2;
  return {
      {"alpha2 >= 2 alpha1 > 0", a1 > 0.0 && a2 >= 2 * a1},
      {"p0 in (1/2 + 2 alpha1 + 2 alpha2, 1)", p0 > 0.5 + 2 * a1 + 2 * a2 && p0 < 1.0},
      {"alpha2 / (1 - p0) in (0, 1/2)", a2 / (1.0 - p0) > 0.0 && a2 / (1.0 - p0) < 0.5},
      {"alpha2 / (p0 - 2 alpha1 - 2 alpha2) in (0, 1/2)",
       margin > 0.0 && a2 / margin > 0.0 && a2 / margin < 0.5},
      {"null gap >= 20 eps", null_gap >= 20 * eps},
      {"alternative gap window [20 eps, 48 eps]",
       g_row >= 20 * eps && g_row <= 48 * eps && g_col >= 20 * eps && g_col <= 48 * eps},
      {"first-column separation >= eps", separation >= eps},
      {"beta <= 1 - 19/96", beta <= 1.0 - 19.0 / 96.0},
  };
}

}  // namespace detail

/// Grid search (step 0.5) over c' in [1, 200], c in [2c', 400]; smallest
/// feasible c wins, then smallest c'. Throws `infeasible` naming the first
/// constraint violated by the candidate that gets furthest down the list.
inline ConstantChoice select_constants(double gamma, double eps) {
  detail::require(gamma > 0.5 && gamma < 1.0, ErrorKind::invalid_input,
                  "gamma must lie in (1/2, 1), got " + std::to_string(gamma));
  detail::require(eps > 0.0 && std::isfinite(eps), ErrorKind::invalid_input, "eps must be positive");
  const double p0 = gamma;
  const double unit = (1.0 - gamma * p0) * (1.0 - gamma * p0) * eps / gamma;
  std::size_t best_prefix = 0;
  std::string first_violation;
  for (int ci = 4; ci <= 800; ++ci) {
    const double c = 0.5 * ci;
    for (int pi = 2; pi <= 400 && pi <= ci / 2; ++pi) {
      const double cp = 0.5 * pi;
      const auto checks = detail::construction_constraints(gamma, eps, p0, cp * unit, c * unit);
      std::size_t prefix = 0;
      while (prefix < checks.size() && checks[prefix].holds) ++prefix;
      if (prefix == checks.size()) return {cp, c, cp * unit, c * unit};
      if (prefix > best_prefix || first_violation.empty()) {
        best_prefix = prefix;
        first_violation = checks[prefix].name;
      }
    }
  }
  detail::fail(ErrorKind::infeasible, "no (c', c) on the grid satisfies the construction for gamma=" +
                                          std::to_string(gamma) + ", eps=" + std::to_string(eps) +
                                          "; first violated constraint: " + first_violation);
}

/// Spec with constants chosen by select_constants.
inline HardInstanceSpec make_hard_spec(int K, int L1, int L2, double gamma, double eps,
                                       std::optional<HardTriple> alternative = std::nullopt,
                                       std::optional<HardTriple> reward = std::nullopt) {
  const auto choice = select_constants(gamma, eps);
  return {K, L1, L2, gamma, eps, gamma, choice.alpha1, choice.alpha2, choice.c_prime, choice.c,
          alternative, reward};
}

/// Structural and construction checks on a spec; throws on the first failure.
inline void validate_hard_spec(const HardInstanceSpec& spec) {
  using detail::require;
  require(spec.K >= 1 && spec.L1 >= 2 && spec.L2 >= 2, ErrorKind::invalid_input,
          "hard instance needs K >= 1 and L1, L2 >= 2");
  require(spec.gamma > 0.5 && spec.gamma < 1.0, ErrorKind::invalid_input,
          "gamma must lie in (1/2, 1)");
  require(spec.eps > 0.0, ErrorKind::invalid_input, "eps must be positive");
  auto check_triple = [&](const std::optional<HardTriple>& t, const char* what) {
    if (!t) return;
    require(t->k >= 0 && t->k < spec.K && t->l1 >= 0 && t->l1 < spec.L1 && t->l2 >= 1 &&
                t->l2 < spec.L2,
            ErrorKind::invalid_input,
            std::string(what) + " index out of range (l2 must differ from the first column)");
  };
  check_triple(spec.alternative, "alternative");
  check_triple(spec.reward, "reward");
  for (const auto& c :
       detail::construction_constraints(spec.gamma, spec.eps, spec.p0, spec.alpha1, spec.alpha2)) {
    require(c.holds, ErrorKind::infeasible, "hard instance spec violates: " + c.name);
  }
}

struct HardInstance {
  HardInstanceSpec spec;
  MarkovGame game;
  QTable q_closed_form;  ///< over the K x-states
  std::map<int, std::pair<int, int>> claimed_ne;  ///< x-state -> (a, b)
};

inline int hard_x_state(const HardInstanceSpec&, int k) { return k; }
inline int hard_y1_state(const HardInstanceSpec& s, int k, int a, int b) {
  return s.K + (k * s.L1 + a) * s.L2 + b;
}
inline int hard_y2_state(const HardInstanceSpec& s, int k, int a, int b) {
  return s.K + s.K * s.L1 * s.L2 + (k * s.L1 + a) * s.L2 + b;
}

/// Self-loop probability p_{x_k, a, b} under the spec's hypothesis.
inline double hard_loop_probability(const HardInstanceSpec& spec, int k, int a, int b) {
  double p = b == 0 ? (a == 0 ? spec.p0 - spec.alpha1 : spec.p0 - 2 * spec.alpha1) : spec.p0;
  if (spec.alternative && spec.alternative->k == k && spec.alternative->l1 == a &&
      spec.alternative->l2 == b) {
    p -= spec.alpha2;
  }
  return p;
}

/// Reward iota at y1(k, a, b) under the spec's reward id.
inline double hard_reward_level(const HardInstanceSpec& spec, int k, int a, int b) {
  if (!spec.reward) return 1.0;
  const auto& r = *spec.reward;
  if (r.k == k && r.l2 == b && r.l1 != a) {
    HardInstanceSpec null_spec = spec;
    null_spec.alternative.reset();
    const double p = hard_loop_probability(null_spec, k, a, b);
    return (1.0 - spec.gamma * p) / (1.0 - spec.gamma * (p - 2 * spec.alpha2));
  }
  return 1.0;
}

inline HardInstance build_hard_instance(const HardInstanceSpec& spec, bool validate = true) {
  if (validate) {
    validate_hard_spec(spec);
  } else {
    detail::require(spec.K >= 1 && spec.L1 >= 1 && spec.L2 >= 1, ErrorKind::invalid_input,
                    "hard instance needs positive K, L1, L2");
  }
  const int pairs = spec.K * spec.L1 * spec.L2;
  const GameDims d{spec.K + 2 * pairs, spec.L1, spec.L2};
  std::vector<double> transition(d.triples() * d.states, 0.0);
  std::vector<double> reward(d.triples(), 0.0);
  auto row = [&](int s, int a, int b) { return transition.data() + d.triple(s, a, b) * d.states; };

  QTable q({spec.K, spec.L1, spec.L2});
  for (int k = 0; k < spec.K; ++k) {
    for (int a = 0; a < spec.L1; ++a) {
      for (int b = 0; b < spec.L2; ++b) {
        const int y1 = hard_y1_state(spec, k, a, b);
        const int y2 = hard_y2_state(spec, k, a, b);
        const double p = hard_loop_probability(spec, k, a, b);
        const double iota = hard_reward_level(spec, k, a, b);
        detail::require(p >= 0.0 && p <= 1.0, ErrorKind::invalid_input,
                        "loop probability outside [0,1]");
        row(hard_x_state(spec, k), a, b)[y1] = 1.0;
        for (int a2 = 0; a2 < spec.L1; ++a2) {
          for (int b2 = 0; b2 < spec.L2; ++b2) {
            row(y1, a2, b2)[y1] = p;
            row(y1, a2, b2)[y2] += 1.0 - p;
            row(y2, a2, b2)[y2] = 1.0;
            reward[d.triple(y1, a2, b2)] = iota;
          }
        }
        q(k, a, b) = spec.gamma * iota / (1.0 - spec.gamma * p);
      }
    }
  }

  HardInstance inst{spec, MarkovGame::create(d, spec.gamma, std::move(transition), std::move(reward)),
                    std::move(q), {}};
  const bool matched = (!spec.alternative && !spec.reward) ||
                       (spec.alternative && spec.reward && *spec.alternative == *spec.reward);
  if (matched) {
    for (int k = 0; k < spec.K; ++k) {
      if (spec.alternative && spec.alternative->k == k) {
        inst.claimed_ne[k] = {spec.alternative->l1, spec.alternative->l2};
      } else {
        inst.claimed_ne[k] = {0, 0};
      }
    }
  }
  return inst;
}

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct InstanceReport {
  std::vector<CheckResult> checks;
  bool all_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
  }
};

/// Runs every structural check on a built instance and reports each one.
inline InstanceReport verify_instance(const HardInstance& inst, double tol = 1e-6) {
  const auto& spec = inst.spec;
  const double eps = spec.eps;
  InstanceReport report;
  auto add = [&](std::string name, bool ok, std::string detail) {
    report.checks.push_back({std::move(name), ok, std::move(detail)});
  };

  // Closed form against the planner.
  {
    PlanConfig config;
    config.eps_opt = 1e-8;
    double worst = 0.0;
    try {
      const auto plan = shapley_value_iteration(inst.game, config);
      for (int k = 0; k < spec.K; ++k)
        for (int a = 0; a < spec.L1; ++a)
          for (int b = 0; b < spec.L2; ++b)
            worst = std::max(worst, std::abs(plan.q_star_hat(hard_x_state(spec, k), a, b) -
                                             inst.q_closed_form(k, a, b)));
      add("closed_form_q", worst <= tol, "max |Q_planner - Q_closed| = " + std::to_string(worst));
    } catch (const Error& e) {
      add("closed_form_q", false, e.what());
    }
  }

  // Strict saddle at each claimed equilibrium. The comparison between the
  // claimed entry and the first column of its row only needs eps separation.
  {
    bool ok = true;
    double worst_margin = std::numeric_limits<double>::infinity();
    std::string where;
    for (const auto& [k, ab] : inst.claimed_ne) {
      const auto [a, b] = ab;
      const Matrix m = state_matrix(inst.q_closed_form, k);
      const double v = m(a, b);
      for (int b2 = 0; b2 < spec.L2; ++b2) {
        if (b2 == b) continue;
        const double need = (b2 == 0 && b != 0) ? eps : 20 * eps;
        const double margin = m(a, b2) - v;
        worst_margin = std::min(worst_margin, margin - need);
        if (margin < need - 1e-9) {
          ok = false;
          where = "x" + std::to_string(k) + " column " + std::to_string(b2);
        }
      }
      for (int a2 = 0; a2 < spec.L1; ++a2) {
        if (a2 == a) continue;
        const double margin = v - m(a2, b);
        worst_margin = std::min(worst_margin, margin - 20 * eps);
        if (margin < 20 * eps - 1e-9) {
          ok = false;
          where = "x" + std::to_string(k) + " row " + std::to_string(a2);
        }
      }
      const auto bounds = value_bounds(m);
      if (std::abs(bounds.maximin - bounds.minimax) > 1e-12) {
        ok = false;
        where = "x" + std::to_string(k) + " has no pure saddle";
      }
    }
    if (inst.claimed_ne.empty()) {
      add("strict_saddle", true, "no pure equilibrium claimed for this hypothesis/reward pair");
    } else {
      add("strict_saddle", ok,
          ok ? "slack over required margins " + std::to_string(worst_margin) : "fails at " + where);
    }
  }

  // Gap window from the constants, plus the measured gaps around the
  // alternative's claimed entry (its column, and its row outside column 0).
  {
    const auto f = [&](double p) { return detail::loop_value(spec.gamma, p); };
    std::vector<double> gaps = {f(spec.p0) - f(spec.p0 - spec.alpha2),
                                f(spec.p0 - spec.alpha2) - f(spec.p0 - 2 * spec.alpha2)};
    if (spec.alternative && inst.claimed_ne.count(spec.alternative->k)) {
      const auto& t = *spec.alternative;
      const Matrix m = state_matrix(inst.q_closed_form, t.k);
      for (int b2 = 1; b2 < spec.L2; ++b2)
        if (b2 != t.l2) gaps.push_back(std::abs(m(t.l1, b2) - m(t.l1, t.l2)));
      for (int a2 = 0; a2 < spec.L1; ++a2)
        if (a2 != t.l1) gaps.push_back(std::abs(m(a2, t.l2) - m(t.l1, t.l2)));
    }
    const auto [lo, hi] = std::minmax_element(gaps.begin(), gaps.end());
    const bool ok = *lo >= 20 * eps - 1e-9 && *hi <= 48 * eps + 1e-9;
    add("gap_window", ok,
        "gaps in eps units: [" + std::to_string(*lo / eps) + ", " + std::to_string(*hi / eps) + "]");
  }

  // Beta threshold.
  {
    const auto f = [&](double p) { return detail::loop_value(spec.gamma, p); };
    const double beta = (f(spec.p0 - spec.alpha1) - f(spec.p0 - 2 * spec.alpha2) + eps) /
                        (f(spec.p0) - f(spec.p0 - 2 * spec.alpha2));
    add("beta_bound", beta <= 1.0 - 19.0 / 96.0,
        "beta = " + std::to_string(beta) + ", bound " + std::to_string(1.0 - 19.0 / 96.0));
  }

  // Census: joint actions at x-states plus one per action-invariant y-state.
  {
    const auto& g = inst.game;
    const auto& d = g.dims();
    bool invariant = true;
    for (int s = spec.K; s < d.states; ++s) {
      const auto first = g.transition_row(s, 0, 0);
      for (int a = 0; a < d.max_actions; ++a)
        for (int b = 0; b < d.min_actions; ++b) {
          const auto r = g.transition_row(s, a, b);
          invariant = invariant && std::equal(first.begin(), first.end(), r.begin()) &&
                      g.reward(s, a, b) == g.reward(s, 0, 0);
        }
    }
    const long long census =
        static_cast<long long>(spec.K) * d.max_actions * d.min_actions + (d.states - spec.K);
    const long long expected = 3LL * spec.K * spec.L1 * spec.L2;
    add("pair_census", invariant && census == expected,
        std::to_string(census) + " state-joint-action pairs, expected " + std::to_string(expected));
  }

  // Each alternative differs from the null in exactly one loop probability.
  {
    HardInstanceSpec null_spec = spec;
    null_spec.alternative.reset();
    const auto null_game = build_hard_instance(null_spec, false).game;
    bool ok = true;
    int alternatives = 0;
    for (int k = 0; k < spec.K; ++k)
      for (int a = 0; a < spec.L1; ++a)
        for (int b = 1; b < spec.L2; ++b) {
          HardInstanceSpec alt_spec = null_spec;
          alt_spec.alternative = HardTriple{k, a, b};
          const auto alt = build_hard_instance(alt_spec, false).game;
          int differing = 0;
          for (int s = 0; s < null_game.num_states(); ++s) {
            const auto x = null_game.transition_row(s, 0, 0);
            const auto y = alt.transition_row(s, 0, 0);
            if (!std::equal(x.begin(), x.end(), y.begin())) ++differing;
          }
          ok = ok && differing == 1;
          ++alternatives;
        }
    add("single_entry_difference", ok,
        std::to_string(alternatives) + " alternatives compared with the null model");
  }
  return report;
}

// ---------------------------------------------------------------------------
// Other generators.

/// Markov game in which the minimizer's action has no effect.
inline MarkovGame embed_mdp(int states, int actions, const std::vector<double>& transitions,
                            const std::vector<double>& rewards, double gamma, int dummy_actions) {
  detail::require(states > 0 && actions > 0 && dummy_actions > 0, ErrorKind::invalid_input,
                  "embed_mdp: dimensions must be positive");
  detail::require(transitions.size() == static_cast<std::size_t>(states) * actions * states,
                  ErrorKind::dimension_mismatch, "embed_mdp: transition array must be [S][A][S]");
  detail::require(rewards.size() == static_cast<std::size_t>(states) * actions,
                  ErrorKind::dimension_mismatch, "embed_mdp: reward array must be [S][A]");
  const GameDims d{states, actions, dummy_actions};
  std::vector<double> p(d.triples() * states);
  std::vector<double> r(d.triples());
  for (int s = 0; s < states; ++s)
    for (int a = 0; a < actions; ++a)
      for (int b = 0; b < dummy_actions; ++b) {
        const std::size_t t = d.triple(s, a, b);
        r[t] = rewards[static_cast<std::size_t>(s) * actions + a];
        std::copy_n(transitions.begin() + (static_cast<std::ptrdiff_t>(s) * actions + a) * states,
                    states, p.begin() + static_cast<std::ptrdiff_t>(t) * states);
      }
  return MarkovGame::create(d, gamma, std::move(p), std::move(r));
}

/// Rows supported on `branching` distinct successors with positive random
/// weights; rewards uniform on [0,1]. Deterministic in the seed.
inline MarkovGame random_game(int states, int max_actions, int min_actions, double gamma,
                              int branching, std::uint64_t seed) {
  detail::require(states > 0 && max_actions > 0 && min_actions > 0, ErrorKind::invalid_input,
                  "random_game: dimensions must be positive");
  detail::require(branching >= 1 && branching <= states, ErrorKind::invalid_input,
                  "random_game: branching must lie in [1, S]");
  const GameDims d{states, max_actions, min_actions};
  std::mt19937_64 engine(seed);
  std::vector<double> p(d.triples() * states, 0.0);
  std::vector<double> r(d.triples());
  std::vector<int> order(states);
  for (std::size_t t = 0; t < d.triples(); ++t) {
    std::iota(order.begin(), order.end(), 0);
    for (int i = 0; i < branching; ++i) {  // partial Fisher-Yates
      const int j = i + static_cast<int>(unit_uniform(engine) * (states - i));
      std::swap(order[i], order[std::min(j, states - 1)]);
    }
    double total = 0.0;
    std::vector<double> w(branching);
    for (double& x : w) {
      x = 1.0 - unit_uniform(engine);  // (0, 1]
      total += x;
    }
    for (int i = 0; i < branching; ++i) p[t * states + order[i]] = w[i] / total;
    r[t] = unit_uniform(engine);
  }
  return MarkovGame::create(d, gamma, std::move(p), std::move(r));
}

}  // namespace zsmg
