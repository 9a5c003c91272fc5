#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "zsmg/error.hpp"

namespace zsmg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Mixed strategies for a one-shot zero-sum matrix game (rows maximize).
struct MatrixGameSolution {
  Vector max_strategy;  ///< u, over rows
  Vector min_strategy;  ///< theta, over columns
  double value = 0.0;
  double duality_gap = 0.0;  ///< max_i (M theta)_i - min_j (u^T M)_j
};

enum class RegularizerKind { neg_entropy, tsallis };

/// Strongly convex penalty applied to each player's mixed strategy. Both
/// players are penalized for concentration: the maximizer optimizes
/// u^T M theta - tau_max * Omega(u) and the minimizer u^T M theta + tau_min * Omega(theta).
struct RegularizerSpec {
  RegularizerKind kind = RegularizerKind::neg_entropy;
  double q = 0.5;  ///< Tsallis index, used only for tsallis
  double tau_max = 1e-2;
  double tau_min = 1e-2;

  static RegularizerSpec entropy(double tau_max, double tau_min) {
    return {RegularizerKind::neg_entropy, 0.5, tau_max, tau_min};
  }
  static RegularizerSpec tsallis(double q, double tau_max, double tau_min) {
    return {RegularizerKind::tsallis, q, tau_max, tau_min};
  }

  void validate() const {
    detail::require(tau_max > 0.0 && tau_min > 0.0 && std::isfinite(tau_max) &&
                        std::isfinite(tau_min),
                    ErrorKind::invalid_input, "regularizer temperatures must be positive");
    if (kind == RegularizerKind::tsallis) {
      detail::require(q > 0.0 && q < 1.0, ErrorKind::invalid_input,
                      "Tsallis index must lie in (0,1)");
    }
  }
};

inline double duality_gap(const Matrix& m, const Vector& u, const Vector& theta) {
  detail::require(u.size() == m.rows() && theta.size() == m.cols(), ErrorKind::dimension_mismatch,
                  "strategy sizes do not match the payoff matrix");
  return (m * theta).maxCoeff() - (m.transpose() * u).minCoeff();
}

struct ValueBounds {
  double maximin = 0.0;  ///< max_i min_j m_ij
  double minimax = 0.0;  ///< min_j max_i m_ij
};

inline ValueBounds value_bounds(const Matrix& m) {
  detail::require(m.size() > 0 && m.allFinite(), ErrorKind::invalid_input,
                  "payoff matrix must be non-empty and finite");
  return {m.rowwise().minCoeff().maxCoeff(), m.colwise().maxCoeff().minCoeff()};
}

namespace detail {

inline Vector normalized_nonnegative(Vector x) {
  x = x.cwiseMax(0.0);
  const double total = x.sum();
  require(total > 0.0 && std::isfinite(total), ErrorKind::numerical,
          "strategy collapsed to zero mass");
  return x / total;
}

/// Optimal basis of  max 1^T y  s.t.  A y <= 1, y >= 0  (A entrywise positive),
/// by a dense tableau simplex with Bland's rule. Indices >= n denote slacks.
inline std::vector<int> simplex_optimal_basis(const Matrix& a) {
  const int m = static_cast<int>(a.rows());
  const int n = static_cast<int>(a.cols());
  const int cols = n + m;
  Matrix t = Matrix::Zero(m + 1, cols + 1);
  t.topLeftCorner(m, n) = a;
  t.block(0, n, m, m).setIdentity();
  t.col(cols).head(m).setOnes();
  t.row(m).head(n).setOnes();  // reduced costs of the maximization

  std::vector<int> basis(m);
  for (int i = 0; i < m; ++i) basis[i] = n + i;

  constexpr double kPivot = 1e-12;
  const long cap = 50L * (m + n) * (m + n);
  for (long iter = 0; iter < cap; ++iter) {
    int enter = -1;
    for (int j = 0; j < cols; ++j) {
      if (t(m, j) > kPivot) {
        enter = j;
        break;
      }
    }
    if (enter < 0) return basis;

    int leave = -1;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i) {
      if (t(i, enter) <= kPivot) continue;
      const double ratio = t(i, cols) / t(i, enter);
      if (leave < 0) {
        leave = i;
        best = ratio;
        continue;
      }
      // Bland: among (near-)tied ratios the smallest basic index leaves.
      const double slack = 1e-13 * (1.0 + std::abs(best));
      if (ratio < best - slack) {
        leave = i;
        best = ratio;
      } else if (ratio <= best + slack && basis[i] < basis[leave]) {
        leave = i;
        best = std::min(best, ratio);
      }
    }
    require(leave >= 0, ErrorKind::numerical, "simplex found an unbounded direction");

    t.row(leave) /= t(leave, enter);
    for (int r = 0; r <= m; ++r) {
      if (r == leave) continue;
      const double factor = t(r, enter);
      if (factor != 0.0) t.row(r) -= factor * t.row(leave);
    }
    basis[leave] = enter;
  }
  fail(ErrorKind::not_converged, "simplex pivot cap exceeded");
}

}  // namespace detail

/// Exact solution of max_u min_theta u^T M theta as a linear program.
///
/// M is shifted to be entrywise >= 1, the minimizer's LP
/// max 1^T y s.t. (M + shift) y <= 1 is solved by simplex, and both primal
/// and dual vectors are recomputed from the optimal basis by an LU solve.
inline MatrixGameSolution solve_exact(const Matrix& m, double tol = 1e-9) {
  detail::require(m.size() > 0 && m.allFinite(), ErrorKind::invalid_input,
                  "payoff matrix must be non-empty and finite");
  detail::require(tol > 0.0, ErrorKind::invalid_input, "tolerance must be positive");
  const int rows = static_cast<int>(m.rows());
  const int cols = static_cast<int>(m.cols());
  const double shift = 1.0 - m.minCoeff();
  const Matrix a = m.array() + shift;

  const auto basis = detail::simplex_optimal_basis(a);
  Matrix basis_matrix = Matrix::Zero(rows, rows);
  Vector cost = Vector::Zero(rows);
  for (int i = 0; i < rows; ++i) {
    if (basis[i] < cols) {
      basis_matrix.col(i) = a.col(basis[i]);
      cost(i) = 1.0;
    } else {
      basis_matrix(basis[i] - cols, i) = 1.0;
    }
  }
  const auto lu = basis_matrix.partialPivLu();
  const Vector y_basic = lu.solve(Vector::Ones(rows));
  const Vector x = lu.transpose().solve(cost);
  Vector y = Vector::Zero(cols);
  for (int i = 0; i < rows; ++i)
    if (basis[i] < cols) y(basis[i]) = y_basic(i);

  MatrixGameSolution sol;
  sol.max_strategy = detail::normalized_nonnegative(x);
  sol.min_strategy = detail::normalized_nonnegative(y);
  const double upper = (m * sol.min_strategy).maxCoeff();
  const double lower = (m.transpose() * sol.max_strategy).minCoeff();
  sol.duality_gap = upper - lower;
  sol.value = std::clamp(1.0 / y.sum() - shift, lower, std::max(lower, upper));
  detail::require(sol.duality_gap <= tol, ErrorKind::numerical,
                  "simplex solution has duality gap " + std::to_string(sol.duality_gap) +
                      " above tolerance");
  return sol;
}

namespace detail {

/// argmax_p  p^T score - tau * Omega(p) over the simplex, together with the
/// curvature weights w_i = 1 / omega''(p_i) that define its Jacobian.
struct SmoothedResponse {
  Vector p;
  Vector w;
};

inline SmoothedResponse smoothed_response(const Vector& score, double tau,
                                          const RegularizerSpec& reg) {
  const Eigen::Index n = score.size();
  if (reg.kind == RegularizerKind::neg_entropy) {
    Vector z = (score.array() - score.maxCoeff()) / tau;
    Vector p = z.array().exp();
    p /= p.sum();
    return {p, p};
  }
  // Tsallis: p_i = (kappa (lambda - score_i))^{-1/(1-q)}, lambda fixed by sum p = 1.
  const double q = reg.q;
  const double kappa = (1.0 - q) / (tau * q);
  const double top = score.maxCoeff();
  double lo = top + 1.0 / kappa;
  double hi = top + std::pow(static_cast<double>(n), 1.0 - q) / kappa;
  auto mass = [&](double lambda) {
    return (kappa * (lambda - score.array())).pow(-1.0 / (1.0 - q)).sum();
  };
  for (int it = 0; it < 200 && hi - lo > 1e-15 * (1.0 + std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mass(mid) > 1.0) lo = mid; else hi = mid;
  }
  const double lambda = 0.5 * (lo + hi);
  Vector p = (kappa * (lambda - score.array())).pow(-1.0 / (1.0 - q));
  p /= p.sum();
  Vector w = p.array().pow(2.0 - q) / q;
  return {p, w};
}

inline Matrix response_jacobian(const SmoothedResponse& r, double tau) {
  Matrix j = r.w.asDiagonal();
  j -= (r.w * r.w.transpose()) / r.w.sum();
  return j / tau;
}

inline double regularizer_value(const Vector& p, const RegularizerSpec& reg) {
  if (reg.kind == RegularizerKind::neg_entropy) {
    double acc = 0.0;
    for (double x : p) if (x > 0.0) acc += x * std::log(x);
    return acc;
  }
  return (p.array().pow(reg.q).sum() - 1.0) / (reg.q - 1.0);
}

inline Vector regularizer_gradient(const Vector& p, const RegularizerSpec& reg) {
  if (reg.kind == RegularizerKind::neg_entropy) return p.array().log() + 1.0;
  return reg.q * p.array().pow(reg.q - 1.0) / (reg.q - 1.0);
}

inline Vector regularizer_curvature(const Vector& p, const RegularizerSpec& reg) {
  if (reg.kind == RegularizerKind::neg_entropy) return p.cwiseInverse();
  return reg.q * p.array().pow(reg.q - 2.0);
}

}  // namespace detail

/// Unique saddle point of u^T M theta - tau_max Omega(u) + tau_min Omega(theta).
///
/// The minimizer's smoothed best response theta(u) = BR_min(-M^T u) is closed
/// form, so the maximizer's reduced objective
///   phi(u) = u^T M theta(u) - tau_max Omega(u) + tau_min Omega(theta(u))
/// is strongly concave on the simplex. It is maximized by damped Newton
/// steps taken multiplicatively (Armijo backtracking, plain Newton once the
/// objective stops resolving the ascent), continued from a large
/// temperature down to the requested one. Iteration stops once the Newton
/// decrement vanishes or successive strategies move less than `tol`; the
/// reported theta is the smoothed best response to the final u.
inline MatrixGameSolution solve_regularized(const Matrix& m, const RegularizerSpec& reg,
                                            double tol = 1e-10) {
  detail::require(m.size() > 0 && m.allFinite(), ErrorKind::invalid_input,
                  "payoff matrix must be non-empty and finite");
  detail::require(tol > 0.0, ErrorKind::invalid_input, "tolerance must be positive");
  reg.validate();
  const Eigen::Index rows = m.rows();
  const Eigen::Index cols = m.cols();
  constexpr long kSweepCap = 100000;

  const double spread = std::max(m.maxCoeff() - m.minCoeff(), 1e-12);
  const double tau_floor = std::min(reg.tau_max, reg.tau_min);
  double scale = std::max(1.0, 10.0 * spread / tau_floor);

  constexpr double kFloor = 1e-280;
  Vector u = Vector::Constant(rows, 1.0 / static_cast<double>(rows));
  long sweeps = 0;

  struct Point {
    Vector theta;
    detail::SmoothedResponse response;
    double objective = 0.0;
  };
  auto evaluate = [&](const Vector& x, double t1, double t2) {
    Point pt;
    pt.response = detail::smoothed_response(-m.transpose() * x, t2, reg);
    pt.theta = pt.response.p;
    pt.objective = x.dot(m * pt.theta) - t1 * detail::regularizer_value(x, reg) +
                   t2 * detail::regularizer_value(pt.theta, reg);
    return pt;
  };

  while (true) {
    const bool final_stage = scale == 1.0;
    const double t1 = reg.tau_max * scale;
    const double t2 = reg.tau_min * scale;
    const double stage_tol = final_stage ? tol : std::max(tol, 1e-8);
    Point pt = evaluate(u, t1, t2);
    double polish_slope = std::numeric_limits<double>::infinity();
    while (true) {
      if (++sweeps > kSweepCap) {
        detail::fail(ErrorKind::not_converged,
                     "regularized solver hit the sweep cap; last duality gap " +
                         std::to_string(duality_gap(m, u, pt.theta)));
      }
      Vector grad = m * pt.theta - t1 * detail::regularizer_gradient(u, reg);
      grad.array() -= u.dot(grad);  // constants do not change dir; centering avoids cancellation
      // K = -Hessian, positive definite.
      Matrix k = m * detail::response_jacobian(pt.response, t2) * m.transpose();
      k.diagonal() += t1 * detail::regularizer_curvature(u, reg);
      const auto ldlt = k.ldlt();
      const Vector k_grad = ldlt.solve(grad);
      const Vector k_ones = ldlt.solve(Vector::Ones(rows));
      const double lambda = -k_grad.sum() / k_ones.sum();
      const Vector dir = k_grad + lambda * k_ones;  // ascent direction with 1^T dir = 0

      // Exponentiated step: log u moves by alpha * dir / u, which agrees with
      // u + alpha * dir to first order and never leaves the simplex interior.
      auto take_step = [&](double alpha) {
        Vector log_u = u.array().log() + alpha * dir.array() / u.array();
        log_u.array() -= log_u.maxCoeff();
        Vector next_u = log_u.array().exp().max(kFloor);
        return Vector(next_u / next_u.sum());
      };
      const double slope = grad.dot(dir);  // squared Newton decrement
      if (slope <= 1e-24) break;
      double alpha = 1.0;
      bool accepted = false;
      Vector candidate;
      Point next;
      while (alpha > 1e-14) {
        candidate = take_step(alpha);
        next = evaluate(candidate, t1, t2);
        if (next.objective >= pt.objective + 1e-4 * alpha * slope) {
          accepted = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!accepted) {
        // Objective differences are below rounding here; Newton steps still
        // converge quadratically, so take them while the decrement shrinks.
        if (slope >= polish_slope || slope > 1e-10 * std::max(1.0, std::abs(pt.objective))) break;
        polish_slope = slope;
        candidate = take_step(1.0);
        next = evaluate(candidate, t1, t2);
      }
      const Vector step = candidate - u;
      u = candidate;
      const double move = std::max(step.lpNorm<Eigen::Infinity>(),
                                   (next.theta - pt.theta).lpNorm<Eigen::Infinity>());
      pt = std::move(next);
      if (move < stage_tol) break;
    }
    if (final_stage) break;
    scale = std::max(1.0, scale / 4.0);
  }

  MatrixGameSolution sol;
  sol.max_strategy = u;
  sol.min_strategy = detail::smoothed_response(-m.transpose() * u, reg.tau_min, reg).p;
  sol.value = u.dot(m * sol.min_strategy);
  sol.duality_gap = duality_gap(m, u, sol.min_strategy);
  return sol;
}

/// Checks that mixing an exact equilibrium with an eps-approximate one
/// yields pairs whose duality gap is at most 2 eps (up to 1e-8).
inline bool check_interchange(const Matrix& m, const MatrixGameSolution& exact,
                              const MatrixGameSolution& approx, double eps) {
  const double g1 = duality_gap(m, exact.max_strategy, approx.min_strategy);
  const double g2 = duality_gap(m, approx.max_strategy, exact.min_strategy);
  return g1 <= 2.0 * eps + 1e-8 && g2 <= 2.0 * eps + 1e-8;
}

/// Empirical smoothness constant of the regularized solution map: the
/// largest observed  TV(solution(M), solution(M + E)) / ||E||_max  over
/// random sign perturbations E of max-norm `delta`.
inline double measure_smoothness(const Matrix& m, const RegularizerSpec& reg, double delta,
                                 int trials, std::uint64_t seed) {
  detail::require(delta > 0.0 && trials > 0, ErrorKind::invalid_input,
                  "smoothness probe needs delta > 0 and trials > 0");
  const auto base = solve_regularized(m, reg, 1e-13);
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    Matrix perturbed = m;
    for (Eigen::Index i = 0; i < m.size(); ++i) perturbed.data()[i] += coin(rng) ? delta : -delta;
    const auto sol = solve_regularized(perturbed, reg, 1e-13);
    const double tv_u = 0.5 * (sol.max_strategy - base.max_strategy).lpNorm<1>();
    const double tv_theta = 0.5 * (sol.min_strategy - base.min_strategy).lpNorm<1>();
    worst = std::max(worst, std::max(tv_u, tv_theta) / delta);
  }
  return worst;
}

}  // namespace zsmg
