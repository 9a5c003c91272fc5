#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "zsmg/error.hpp"
#include "zsmg/evaluation.hpp"
#include "zsmg/game.hpp"
#include "zsmg/matrix_game.hpp"

namespace zsmg {

enum class OracleKind { exact_lp, smooth_regularized };

struct PlanConfig {
  double eps_opt = 1e-6;
  OracleKind oracle = OracleKind::exact_lp;
  RegularizerSpec regularizer;  ///< used only by smooth_regularized
  long max_iters = 1000000;

  void validate() const {
    detail::require(eps_opt > 0.0 && std::isfinite(eps_opt), ErrorKind::invalid_input,
                    "eps_opt must be positive");
    detail::require(max_iters > 0, ErrorKind::invalid_input, "max_iters must be positive");
    if (oracle == OracleKind::smooth_regularized) regularizer.validate();
  }
};

struct PlanResult {
  QTable q_star_hat;
  VTable v_star_hat;
  StationaryPolicy mu_hat;
  StationaryPolicy nu_hat;
  double certified_eps_opt = 0.0;
  long iterations = 0;
  std::vector<double> residuals;  ///< ||Q_{k+1} - Q_k||_inf per sweep
};

/// Payoff matrix of state s, rows = max actions.
inline Matrix state_matrix(const QTable& q, int s) {
  Matrix m(q.dims.max_actions, q.dims.min_actions);
  for (int a = 0; a < q.dims.max_actions; ++a)
    for (int b = 0; b < q.dims.min_actions; ++b) m(a, b) = q(s, a, b);
  return m;
}

namespace detail {

inline double matrix_value(const Matrix& m) {
  const auto bounds = value_bounds(m);
  if (bounds.maximin == bounds.minimax) return bounds.maximin;
  return solve_exact(m).value;
}

inline std::pair<StationaryPolicy, StationaryPolicy> assemble(
    const GameDims& d, const std::vector<MatrixGameSolution>& per_state) {
  std::vector<double> mu(static_cast<std::size_t>(d.states) * d.max_actions);
  std::vector<double> nu(static_cast<std::size_t>(d.states) * d.min_actions);
  for (int s = 0; s < d.states; ++s) {
    const auto& sol = per_state[s];
    for (int a = 0; a < d.max_actions; ++a)
      mu[static_cast<std::size_t>(s) * d.max_actions + a] = sol.max_strategy(a);
    for (int b = 0; b < d.min_actions; ++b)
      nu[static_cast<std::size_t>(s) * d.min_actions + b] = sol.min_strategy(b);
  }
  return {StationaryPolicy::create(Player::max_player, d.states, d.max_actions, std::move(mu)),
          StationaryPolicy::create(Player::min_player, d.states, d.min_actions, std::move(nu))};
}

}  // namespace detail

/// Per-state exact equilibrium of q(s,.,.): the one-step Nash equilibrium.
inline std::pair<StationaryPolicy, StationaryPolicy> one_step_ne_extract(const QTable& q) {
  detail::require(q.dims.triples() == q.values.size() && q.dims.states > 0,
                  ErrorKind::dimension_mismatch, "Q-table shape mismatch");
  std::vector<MatrixGameSolution> per_state;
  per_state.reserve(q.dims.states);
  for (int s = 0; s < q.dims.states; ++s) per_state.push_back(solve_exact(state_matrix(q, s), 1e-9));
  return detail::assemble(q.dims, per_state);
}

/// Per-state regularized equilibrium of q(s,.,.).
inline std::pair<StationaryPolicy, StationaryPolicy> smooth_extract(const QTable& q,
                                                                    const RegularizerSpec& reg) {
  detail::require(q.dims.triples() == q.values.size() && q.dims.states > 0,
                  ErrorKind::dimension_mismatch, "Q-table shape mismatch");
  reg.validate();
  std::vector<MatrixGameSolution> per_state;
  per_state.reserve(q.dims.states);
  for (int s = 0; s < q.dims.states; ++s)
    per_state.push_back(solve_regularized(state_matrix(q, s), reg));
  return detail::assemble(q.dims, per_state);
}

/// ||V^{*,nu} - V^{mu,*}||_inf. Both one-sided distances to V* (and the
/// Nash gap of the pair) are bounded by it, since V^{mu,*} <= V* <= V^{*,nu}.
inline double certify_pair(const MarkovGame& game, const StationaryPolicy& mu,
                           const StationaryPolicy& nu) {
  const auto upper = best_response(game, nu);
  const auto lower = best_response(game, mu);
  return max_abs_diff(upper.v, lower.v);
}

/// Shapley value iteration followed by policy extraction and certification.
///
/// Sweeps Q <- r + gamma P val(Q) until gamma ||dQ|| / (1-gamma) <= eps_opt/4.
/// The extracted pair is certified with exact best responses; if the
/// certificate exceeds eps_opt the stopping threshold is divided by 4 and
/// iteration resumes, up to 8 times, before giving up.
inline PlanResult shapley_value_iteration(const MarkovGame& game, const PlanConfig& config) {
  config.validate();
  const auto& d = game.dims();
  const double gamma = game.discount();

  QTable q(d, 0.0);
  VTable v(d.states, 0.0);
  std::vector<double> residuals;
  long iterations = 0;
  double threshold = config.eps_opt / 4.0;
  double certified = 0.0;
  constexpr int kTightenings = 8;

  for (int round = 0; round <= kTightenings; ++round) {
    while (true) {
      if (iterations >= config.max_iters) {
        detail::fail(ErrorKind::not_converged,
                     "value iteration hit max_iters=" + std::to_string(config.max_iters) +
                         "; last residual " +
                         std::to_string(residuals.empty() ? 0.0 : residuals.back()));
      }
      const auto ev = detail::expected_next(game, v.values);
      double delta = 0.0;
      for (std::size_t t = 0; t < q.values.size(); ++t) {
        const double updated = game.rewards()[t] + gamma * ev[t];
        delta = std::max(delta, std::abs(updated - q.values[t]));
        q.values[t] = updated;
      }
      ++iterations;
      residuals.push_back(delta);
      for (int s = 0; s < d.states; ++s) v[s] = detail::matrix_value(state_matrix(q, s));
      if (gamma * delta <= threshold * (1.0 - gamma)) break;
    }

    auto [mu, nu] = config.oracle == OracleKind::exact_lp
                        ? one_step_ne_extract(q)
                        : smooth_extract(q, config.regularizer);
    certified = certify_pair(game, mu, nu);
    if (certified <= config.eps_opt) {
      return {std::move(q), std::move(v), std::move(mu), std::move(nu), certified, iterations,
              std::move(residuals)};
    }
    threshold /= 4.0;
  }
  detail::fail(ErrorKind::certification_failed,
               "certified eps_opt " + std::to_string(certified) + " exceeds requested " +
                   std::to_string(config.eps_opt));
}

}  // namespace zsmg
