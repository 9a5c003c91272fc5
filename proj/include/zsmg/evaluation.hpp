#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "zsmg/error.hpp"
#include "zsmg/game.hpp"

namespace zsmg {

/// Above this many unknowns the discounted linear systems switch from dense
/// LU to Richardson iteration.
inline constexpr int kDenseSolveLimit = 4096;

struct Evaluation {
  QTable q;
  VTable v;
};

struct BestResponse {
  StationaryPolicy policy;
  VTable v;  ///< value of the (fixed policy, response) pair
  QTable q;
};

/// Sigma(s,a,b): variance of the discounted return, plus the residual of
/// its Bellman-type equation.
struct VarianceTable {
  QTable sigma;
  double residual = 0.0;
};

namespace detail {

inline void check_pair(const MarkovGame& game, const StationaryPolicy& mu,
                       const StationaryPolicy& nu) {
  require(mu.owner() == Player::max_player && nu.owner() == Player::min_player,
          ErrorKind::invalid_input, "policy pair must be (max_player, min_player)");
  mu.check_fits(game.dims());
  nu.check_fits(game.dims());
}

/// (P V)(s,a,b) for every triple.
inline std::vector<double> expected_next(const MarkovGame& game, std::span<const double> v) {
  const auto& d = game.dims();
  require(static_cast<int>(v.size()) == d.states, ErrorKind::dimension_mismatch,
          "value vector has " + std::to_string(v.size()) + " entries, game has " +
              std::to_string(d.states) + " states");
  std::vector<double> out(d.triples());
  const double* p = game.transitions().data();
  for (std::size_t t = 0; t < d.triples(); ++t) {
    double acc = 0.0;
    for (int next = 0; next < d.states; ++next) acc += p[next] * v[next];
    out[t] = acc;
    p += d.states;
  }
  return out;
}

/// sum_{a,b} mu(a|s) nu(b|s) x(s,a,b)
inline std::vector<double> joint_average(const GameDims& d, const StationaryPolicy& mu,
                                         const StationaryPolicy& nu,
                                         std::span<const double> x) {
  std::vector<double> out(d.states, 0.0);
  for (int s = 0; s < d.states; ++s) {
    double acc = 0.0;
    for (int a = 0; a < d.max_actions; ++a) {
      const double pa = mu.prob(s, a);
      if (pa == 0.0) continue;
      for (int b = 0; b < d.min_actions; ++b) acc += pa * nu.prob(s, b) * x[d.triple(s, a, b)];
    }
    out[s] = acc;
  }
  return out;
}

inline Eigen::MatrixXd induced_transition(const MarkovGame& game, const StationaryPolicy& mu,
                                          const StationaryPolicy& nu) {
  const auto& d = game.dims();
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(d.states, d.states);
  for (int s = 0; s < d.states; ++s) {
    for (int a = 0; a < d.max_actions; ++a) {
      const double pa = mu.prob(s, a);
      if (pa == 0.0) continue;
      for (int b = 0; b < d.min_actions; ++b) {
        const double w = pa * nu.prob(s, b);
        if (w == 0.0) continue;
        const auto row = game.transition_row(s, a, b);
        for (int next = 0; next < d.states; ++next) p(s, next) += w * row[next];
      }
    }
  }
  return p;
}

/// Solves x = rhs + factor * P^{mu,nu} x for 0 <= factor < 1.
inline std::vector<double> solve_discounted(const MarkovGame& game, const StationaryPolicy& mu,
                                            const StationaryPolicy& nu, double factor,
                                            const std::vector<double>& rhs) {
  const int n = game.num_states();
  if (n <= kDenseSolveLimit) {
    Eigen::MatrixXd system = -factor * induced_transition(game, mu, nu);
    system.diagonal().array() += 1.0;
    const Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(rhs.data(), n);
    const Eigen::VectorXd x = system.partialPivLu().solve(b);
    require(x.allFinite(), ErrorKind::numerical,
            "singular policy system; the game or policies are corrupted");
    return {x.data(), x.data() + n};
  }
  // Richardson: x <- rhs + factor * P x, contraction with modulus `factor`.
  std::vector<double> x = rhs;
  const double scale = 1.0 + std::abs(*std::max_element(rhs.begin(), rhs.end(), [](double l, double r) {
                         return std::abs(l) < std::abs(r);
                       }));
  const double stop = 1e-14 * scale * (1.0 - factor);
  const int cap = 100000;
  for (int it = 0; it < cap; ++it) {
    const auto pv = joint_average(game.dims(), mu, nu, expected_next(game, x));
    double delta = 0.0;
    for (int s = 0; s < n; ++s) {
      const double next = rhs[s] + factor * pv[s];
      delta = std::max(delta, std::abs(next - x[s]));
      x[s] = next;
    }
    if (delta <= stop) return x;
  }
  fail(ErrorKind::not_converged, "Richardson iteration did not converge");
}

inline std::vector<double> induced_reward(const MarkovGame& game, const StationaryPolicy& mu,
                                          const StationaryPolicy& nu) {
  return joint_average(game.dims(), mu, nu, game.rewards());
}

inline QTable q_from_v(const MarkovGame& game, const VTable& v) {
  const auto ev = expected_next(game, v.values);
  QTable q(game.dims());
  for (std::size_t t = 0; t < ev.size(); ++t)
    q.values[t] = game.rewards()[t] + game.discount() * ev[t];
  return q;
}

}  // namespace detail

/// Exact evaluation of a policy pair: V solves (I - gamma P^{mu,nu}) V = r^{mu,nu},
/// then Q = r + gamma P V.
inline Evaluation policy_evaluate(const MarkovGame& game, const StationaryPolicy& mu,
                                  const StationaryPolicy& nu) {
  detail::check_pair(game, mu, nu);
  VTable v(detail::solve_discounted(game, mu, nu, game.discount(),
                                    detail::induced_reward(game, mu, nu)));
  QTable q = detail::q_from_v(game, v);
  return {std::move(q), std::move(v)};
}

/// Policy Bellman operator (T q)(s,a,b) = r(s,a,b) + gamma sum_s' P(s'|s,a,b) E_{mu,nu}[q(s',.,.)].
inline QTable policy_bellman(const MarkovGame& game, const StationaryPolicy& mu,
                             const StationaryPolicy& nu, const QTable& q) {
  detail::check_pair(game, mu, nu);
  detail::require(q.dims == game.dims(), ErrorKind::dimension_mismatch, "Q-table shape mismatch");
  VTable v(detail::joint_average(game.dims(), mu, nu, q.values));
  return detail::q_from_v(game, v);
}

/// Best response of the opponent of `policy`'s owner, found as an MDP solve.
///
/// Value iteration runs to 1e-10 (1-gamma)/gamma, the greedy policy is
/// extracted with ties going to the lowest action index, and a policy
/// iteration pass confirms it against exact evaluations. The returned values
/// are those of the exactly evaluated (policy, response) pair.
inline BestResponse best_response(const MarkovGame& game, const StationaryPolicy& policy) {
  const auto& d = game.dims();
  policy.check_fits(d);
  const bool respond_as_min = policy.owner() == Player::max_player;
  const int n = respond_as_min ? d.min_actions : d.max_actions;
  const double gamma = game.discount();
  const double sign = respond_as_min ? -1.0 : 1.0;  // maximize sign * value

  // Q_resp(s, c) = sum_x pi(x|s) (r + gamma P V)(s, x, c) with the responder's action c.
  auto response_q = [&](std::span<const double> v) {
    const auto ev = detail::expected_next(game, v);
    std::vector<double> out(static_cast<std::size_t>(d.states) * n, 0.0);
    for (int s = 0; s < d.states; ++s) {
      for (int a = 0; a < d.max_actions; ++a) {
        for (int b = 0; b < d.min_actions; ++b) {
          const std::size_t t = d.triple(s, a, b);
          const double w = respond_as_min ? policy.prob(s, a) : policy.prob(s, b);
          if (w == 0.0) continue;
          const int c = respond_as_min ? b : a;
          out[static_cast<std::size_t>(s) * n + c] += w * (game.rewards()[t] + gamma * ev[t]);
        }
      }
    }
    return out;
  };
  auto greedy = [&](const std::vector<double>& q, int s) {
    double best = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < n; ++c) best = std::max(best, sign * q[static_cast<std::size_t>(s) * n + c]);
    const double tie = 1e-12 * std::max(1.0, std::abs(best));
    for (int c = 0; c < n; ++c)
      if (sign * q[static_cast<std::size_t>(s) * n + c] >= best - tie) return c;
    return 0;
  };

  std::vector<double> v(d.states, 0.0);
  const double stop = gamma > 0.0 ? 1e-10 * (1.0 - gamma) / gamma : 0.0;
  const int vi_cap = 1000000;
  for (int it = 0; it < vi_cap; ++it) {
    const auto q = response_q(v);
    double delta = 0.0;
    for (int s = 0; s < d.states; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      for (int c = 0; c < n; ++c) best = std::max(best, sign * q[static_cast<std::size_t>(s) * n + c]);
      delta = std::max(delta, std::abs(sign * best - v[s]));
      v[s] = sign * best;
    }
    if (delta <= stop) break;
    if (it + 1 == vi_cap) detail::fail(ErrorKind::not_converged, "best-response value iteration");
  }

  std::vector<int> choice(d.states);
  {
    const auto q = response_q(v);
    for (int s = 0; s < d.states; ++s) choice[s] = greedy(q, s);
  }
  const Player responder = respond_as_min ? Player::min_player : Player::max_player;
  auto evaluate = [&](const std::vector<int>& ch) {
    const auto response = StationaryPolicy::deterministic(responder, n, ch);
    return respond_as_min ? policy_evaluate(game, policy, response)
                          : policy_evaluate(game, response, policy);
  };

  Evaluation eval = evaluate(choice);
  for (int round = 0; round < 100 * d.states + 10; ++round) {
    const auto q = response_q(eval.v.values);
    bool changed = false;
    for (int s = 0; s < d.states; ++s) {
      const int g = greedy(q, s);
      const double current = sign * q[static_cast<std::size_t>(s) * n + choice[s]];
      const double improved = sign * q[static_cast<std::size_t>(s) * n + g];
      if (improved > current + 1e-12 * std::max(1.0, std::abs(current))) {
        choice[s] = g;
        changed = true;
      }
    }
    if (!changed) {
      return {StationaryPolicy::deterministic(responder, n, choice), std::move(eval.v),
              std::move(eval.q)};
    }
    eval = evaluate(choice);
  }
  detail::fail(ErrorKind::not_converged, "best-response policy iteration did not stabilize");
}

/// max_s max(V^{*,nu}(s) - V^{mu,nu}(s), V^{mu,nu}(s) - V^{mu,*}(s)).
/// The pair is an eps-Nash equilibrium iff the result is <= eps.
inline double nash_gap(const MarkovGame& game, const StationaryPolicy& mu,
                       const StationaryPolicy& nu) {
  detail::check_pair(game, mu, nu);
  const auto pair = policy_evaluate(game, mu, nu);
  const auto max_dev = best_response(game, nu);  // V^{*,nu}
  const auto min_dev = best_response(game, mu);  // V^{mu,*}
  double gap = -std::numeric_limits<double>::infinity();
  for (int s = 0; s < game.num_states(); ++s) {
    gap = std::max(gap, max_dev.v[s] - pair.v[s]);
    gap = std::max(gap, pair.v[s] - min_dev.v[s]);
  }
  return gap;
}

/// Var_{P(.|s,a,b)}(V) for every triple, computed in centered form.
inline QTable variance_under(const MarkovGame& game, const VTable& v) {
  const auto& d = game.dims();
  const auto mean = detail::expected_next(game, v.values);
  QTable out(d);
  const double* p = game.transitions().data();
  for (std::size_t t = 0; t < d.triples(); ++t) {
    double acc = 0.0;
    for (int next = 0; next < d.states; ++next) {
      const double dev = v[next] - mean[t];
      acc += p[next] * dev * dev;
    }
    out.values[t] = std::max(acc, 0.0);
    p += d.states;
  }
  return out;
}

/// Solves Sigma = gamma^2 Var_P(V^{mu,nu}) + gamma^2 P^{mu,nu} Sigma.
inline VarianceTable return_variance(const MarkovGame& game, const StationaryPolicy& mu,
                                     const StationaryPolicy& nu) {
  const auto eval = policy_evaluate(game, mu, nu);
  const auto& d = game.dims();
  const double g2 = game.discount() * game.discount();
  const auto var = variance_under(game, eval.v);

  // Reduce to states: sigma_state = E_{mu,nu}[Sigma(s,.,.)].
  auto rhs = detail::joint_average(d, mu, nu, var.values);
  for (double& x : rhs) x *= g2;
  const auto state_sigma = detail::solve_discounted(game, mu, nu, g2, rhs);
  const auto next = detail::expected_next(game, state_sigma);

  VarianceTable out{QTable(d), 0.0};
  for (std::size_t t = 0; t < d.triples(); ++t)
    out.sigma.values[t] = g2 * var.values[t] + g2 * next[t];

  const auto back = detail::expected_next(
      game, detail::joint_average(d, mu, nu, out.sigma.values));
  for (std::size_t t = 0; t < d.triples(); ++t) {
    const double res = out.sigma.values[t] - g2 * var.values[t] - g2 * back[t];
    out.residual = std::max(out.residual, std::abs(res));
  }
  return out;
}

/// G_{s,u}: state s becomes absorbing with per-step reward (1-gamma) u.
inline MarkovGame make_absorbing(const MarkovGame& game, int state, double u) {
  const auto& d = game.dims();
  detail::require(state >= 0 && state < d.states, ErrorKind::invalid_input,
                  "absorbing state " + std::to_string(state) + " out of range");
  detail::require(std::isfinite(u), ErrorKind::invalid_input, "absorbing value must be finite");
  auto transition = game.transitions();
  auto reward = game.rewards();
  for (int a = 0; a < d.max_actions; ++a) {
    for (int b = 0; b < d.min_actions; ++b) {
      const std::size_t t = d.triple(state, a, b);
      std::fill_n(transition.begin() + t * d.states, d.states, 0.0);
      transition[t * d.states + state] = 1.0;
      reward[t] = (1.0 - game.discount()) * u;
    }
  }
  return MarkovGame::create(d, game.discount(), std::move(transition), std::move(reward),
                            RewardRange::finite);
}

}  // namespace zsmg
