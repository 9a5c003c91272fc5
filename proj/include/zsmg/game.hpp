#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "zsmg/error.hpp"

namespace zsmg {

inline constexpr double kSimplexTolerance = 1e-9;

/// Sizes of a tabular two-player game: |S|, |A| (maximizer), |B| (minimizer).
struct GameDims {
  int states = 0;
  int max_actions = 0;
  int min_actions = 0;

  std::size_t joint_actions() const {
    return static_cast<std::size_t>(max_actions) * min_actions;
  }
  std::size_t triples() const { return static_cast<std::size_t>(states) * joint_actions(); }
  std::size_t triple(int s, int a, int b) const {
    return (static_cast<std::size_t>(s) * max_actions + a) * min_actions + b;
  }
  bool operator==(const GameDims&) const = default;
};

inline std::string describe(const GameDims& d) {
  return "(" + std::to_string(d.states) + ", " + std::to_string(d.max_actions) + ", " +
         std::to_string(d.min_actions) + ")";
}

/// Whether rewards must lie in [0,1] or only be finite. Absorbing-game
/// transforms produce rewards (1-gamma)u that may leave the unit interval.
enum class RewardRange { unit_interval, finite };

/// Tabular zero-sum discounted Markov game (S, A, B, P, r, gamma).
///
/// Transitions are stored densely as [s][a][b][s'] and rewards as [s][a][b],
/// both row-major. Instances are immutable once created; `create` enforces
/// every invariant and names the first offending index on failure.
class MarkovGame {
 public:
  static MarkovGame create(GameDims dims, double discount, std::vector<double> transition,
                           std::vector<double> reward,
                           RewardRange range = RewardRange::unit_interval) {
    MarkovGame game(dims, discount, std::move(transition), std::move(reward), range);
    game.validate();
    return game;
  }

  const GameDims& dims() const { return dims_; }
  int num_states() const { return dims_.states; }
  int num_max_actions() const { return dims_.max_actions; }
  int num_min_actions() const { return dims_.min_actions; }
  double discount() const { return discount_; }
  RewardRange reward_range() const { return range_; }

  std::span<const double> transition_row(int s, int a, int b) const {
    return {transition_.data() + dims_.triple(s, a, b) * dims_.states,
            static_cast<std::size_t>(dims_.states)};
  }
  double transition(int s, int a, int b, int next) const {
    return transition_[dims_.triple(s, a, b) * dims_.states + next];
  }
  double reward(int s, int a, int b) const { return reward_[dims_.triple(s, a, b)]; }

  const std::vector<double>& transitions() const { return transition_; }
  const std::vector<double>& rewards() const { return reward_; }

  /// Same transitions and discount, different reward array.
  MarkovGame with_reward(std::vector<double> reward,
                         RewardRange range = RewardRange::unit_interval) const {
    return create(dims_, discount_, transition_, std::move(reward), range);
  }

  bool operator==(const MarkovGame&) const = default;

 private:
  MarkovGame(GameDims dims, double discount, std::vector<double> transition,
             std::vector<double> reward, RewardRange range)
      : dims_(dims),
        discount_(discount),
        transition_(std::move(transition)),
        reward_(std::move(reward)),
        range_(range) {}

  static std::string index_path(const char* field, int s, int a, int b) {
    return std::string(field) + "[" + std::to_string(s) + "][" + std::to_string(a) + "][" +
           std::to_string(b) + "]";
  }

  void validate() const {
    using detail::require;
    require(dims_.states > 0 && dims_.max_actions > 0 && dims_.min_actions > 0,
            ErrorKind::invalid_input, "game dimensions must be positive, got " + describe(dims_));
    require(std::isfinite(discount_) && discount_ >= 0.0 && discount_ < 1.0,
            ErrorKind::invalid_input, "gamma must lie in [0,1), got " + std::to_string(discount_));
    require(transition_.size() == dims_.triples() * dims_.states, ErrorKind::dimension_mismatch,
            "transition array has " + std::to_string(transition_.size()) + " entries, expected " +
                std::to_string(dims_.triples() * dims_.states));
    require(reward_.size() == dims_.triples(), ErrorKind::dimension_mismatch,
            "reward array has " + std::to_string(reward_.size()) + " entries, expected " +
                std::to_string(dims_.triples()));
    for (int s = 0; s < dims_.states; ++s) {
      for (int a = 0; a < dims_.max_actions; ++a) {
        for (int b = 0; b < dims_.min_actions; ++b) {
          double sum = 0.0;
          const auto row = transition_row(s, a, b);
          for (int next = 0; next < dims_.states; ++next) {
            const double p = row[next];
            require(std::isfinite(p) && p >= 0.0, ErrorKind::invalid_input,
                    index_path("transition", s, a, b) + "[" + std::to_string(next) +
                        "] is not a probability: " + std::to_string(p));
            sum += p;
          }
          require(std::abs(sum - 1.0) <= kSimplexTolerance, ErrorKind::invalid_input,
                  index_path("transition", s, a, b) + " sums to " + std::to_string(sum));
          const double r = reward(s, a, b);
          require(std::isfinite(r), ErrorKind::invalid_input,
                  index_path("reward", s, a, b) + " is not finite");
          if (range_ == RewardRange::unit_interval) {
            require(r >= 0.0 && r <= 1.0, ErrorKind::invalid_input,
                    index_path("reward", s, a, b) + " = " + std::to_string(r) +
                        " is outside [0,1]");
          }
        }
      }
    }
  }

  GameDims dims_;
  double discount_ = 0.0;
  std::vector<double> transition_;
  std::vector<double> reward_;
  RewardRange range_ = RewardRange::unit_interval;
};

enum class Player { max_player, min_player };

inline std::string_view to_string(Player p) {
  return p == Player::max_player ? "max_player" : "min_player";
}

/// Per-state action distribution for one of the two players.
class StationaryPolicy {
 public:
  static StationaryPolicy create(Player owner, int states, int actions, std::vector<double> probs) {
    StationaryPolicy policy(owner, states, actions, std::move(probs));
    policy.validate();
    return policy;
  }

  static StationaryPolicy uniform(Player owner, int states, int actions) {
    return create(owner, states, actions,
                  std::vector<double>(static_cast<std::size_t>(states) * actions, 1.0 / actions));
  }

  static StationaryPolicy deterministic(Player owner, int actions, const std::vector<int>& choice) {
    const int states = static_cast<int>(choice.size());
    std::vector<double> probs(static_cast<std::size_t>(states) * actions, 0.0);
    for (int s = 0; s < states; ++s) {
      detail::require(choice[s] >= 0 && choice[s] < actions, ErrorKind::invalid_input,
                      "deterministic action out of range at state " + std::to_string(s));
      probs[static_cast<std::size_t>(s) * actions + choice[s]] = 1.0;
    }
    return create(owner, states, actions, std::move(probs));
  }

  Player owner() const { return owner_; }
  int num_states() const { return states_; }
  int num_actions() const { return actions_; }
  double prob(int s, int action) const {
    return probs_[static_cast<std::size_t>(s) * actions_ + action];
  }
  std::span<const double> at(int s) const {
    return {probs_.data() + static_cast<std::size_t>(s) * actions_,
            static_cast<std::size_t>(actions_)};
  }
  const std::vector<double>& probabilities() const { return probs_; }

  /// Throws unless the policy fits the given game for its owner.
  void check_fits(const GameDims& dims) const {
    const int expected =
        owner_ == Player::max_player ? dims.max_actions : dims.min_actions;
    detail::require(states_ == dims.states && actions_ == expected, ErrorKind::dimension_mismatch,
                    std::string(to_string(owner_)) + " policy has shape (" +
                        std::to_string(states_) + ", " + std::to_string(actions_) +
                        ") but game is " + describe(dims));
  }

  bool operator==(const StationaryPolicy&) const = default;

 private:
  StationaryPolicy(Player owner, int states, int actions, std::vector<double> probs)
      : owner_(owner), states_(states), actions_(actions), probs_(std::move(probs)) {}

  void validate() const {
    using detail::require;
    require(states_ > 0 && actions_ > 0, ErrorKind::invalid_input, "empty policy");
    require(probs_.size() == static_cast<std::size_t>(states_) * actions_,
            ErrorKind::dimension_mismatch, "policy array has wrong length");
    for (int s = 0; s < states_; ++s) {
      double sum = 0.0;
      for (double p : at(s)) {
        require(std::isfinite(p) && p >= 0.0, ErrorKind::invalid_input,
                "policy entry at state " + std::to_string(s) + " is not a probability");
        sum += p;
      }
      require(std::abs(sum - 1.0) <= kSimplexTolerance, ErrorKind::invalid_input,
              "policy at state " + std::to_string(s) + " sums to " + std::to_string(sum));
    }
  }

  Player owner_ = Player::max_player;
  int states_ = 0;
  int actions_ = 0;
  std::vector<double> probs_;
};

/// State-action-action values, row-major [s][a][b].
struct QTable {
  GameDims dims;
  std::vector<double> values;

  QTable() = default;
  explicit QTable(GameDims d, double fill = 0.0) : dims(d), values(d.triples(), fill) {}

  double& operator()(int s, int a, int b) { return values[dims.triple(s, a, b)]; }
  double operator()(int s, int a, int b) const { return values[dims.triple(s, a, b)]; }
  std::span<const double> slice(int s) const {
    return {values.data() + static_cast<std::size_t>(s) * dims.joint_actions(),
            dims.joint_actions()};
  }
};

/// State values.
struct VTable {
  std::vector<double> values;

  VTable() = default;
  explicit VTable(int states, double fill = 0.0) : values(static_cast<std::size_t>(states), fill) {}
  explicit VTable(std::vector<double> v) : values(std::move(v)) {}

  int size() const { return static_cast<int>(values.size()); }
  double& operator[](int s) { return values[s]; }
  double operator[](int s) const { return values[s]; }
};

inline double max_abs_diff(std::span<const double> x, std::span<const double> y) {
  detail::require(x.size() == y.size(), ErrorKind::dimension_mismatch,
                  "max_abs_diff: length mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
  return m;
}

inline double max_abs_diff(const VTable& x, const VTable& y) {
  return max_abs_diff(x.values, y.values);
}

inline double max_abs_diff(const QTable& x, const QTable& y) {
  detail::require(x.dims == y.dims, ErrorKind::dimension_mismatch, "Q-table shape mismatch");
  return max_abs_diff(x.values, y.values);
}

inline double total_variation(std::span<const double> p, std::span<const double> q) {
  detail::require(p.size() == q.size(), ErrorKind::dimension_mismatch,
                  "total_variation: length mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) sum += std::abs(p[i] - q[i]);
  return 0.5 * sum;
}

}  // namespace zsmg
