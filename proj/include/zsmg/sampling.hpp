#pragma once

#include <atomic>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "zsmg/error.hpp"
#include "zsmg/game.hpp"
#include "zsmg/planner.hpp"

namespace zsmg {

struct RngSpec {
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;
  bool operator==(const RngSpec&) const = default;
};

/// Engine dedicated to one (s, a, b) triple. Keying by the triple makes the
/// draws for a triple independent of the order triples are visited in.
inline std::mt19937_64 triple_engine(const RngSpec& rng, int s, int a, int b) {
  std::seed_seq seq{static_cast<std::uint32_t>(rng.seed), static_cast<std::uint32_t>(rng.seed >> 32),
                    static_cast<std::uint32_t>(rng.stream_id),
                    static_cast<std::uint32_t>(rng.stream_id >> 32), static_cast<std::uint32_t>(s),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  return std::mt19937_64(seq);
}

/// Uniform double in [0,1) from the top 53 bits.
inline double unit_uniform(std::mt19937_64& engine) {
  return static_cast<double>(engine() >> 11) * 0x1.0p-53;
}

/// Inverse-CDF draw s' ~ P(.|s,a,b).
inline int generative_draw(const MarkovGame& game, int s, int a, int b, std::mt19937_64& engine) {
  const auto& d = game.dims();
  detail::require(s >= 0 && s < d.states && a >= 0 && a < d.max_actions && b >= 0 &&
                      b < d.min_actions,
                  ErrorKind::invalid_input,
                  "generative_draw: index (" + std::to_string(s) + ", " + std::to_string(a) + ", " +
                      std::to_string(b) + ") outside " + describe(d));
  const auto row = game.transition_row(s, a, b);
  const double x = unit_uniform(engine);
  double cdf = 0.0;
  int last_positive = 0;
  for (int next = 0; next < d.states; ++next) {
    if (row[next] <= 0.0) continue;
    last_positive = next;
    cdf += row[next];
    if (x < cdf) return next;
  }
  return last_positive;  // rounding left x above the final cdf value
}

/// Generative-model access to a game's transitions. Holds no reward, so
/// anything sampled through it cannot depend on rewards.
class GenerativeModel {
 public:
  explicit GenerativeModel(const MarkovGame& game)
      : transitions_(MarkovGame::create(game.dims(), game.discount(), game.transitions(),
                                        std::vector<double>(game.dims().triples(), 0.0))) {}

  const GameDims& dims() const { return transitions_.dims(); }

  int draw(int s, int a, int b, std::mt19937_64& engine) {
    calls_.fetch_add(1, std::memory_order_relaxed);
    return generative_draw(transitions_, s, a, b, engine);
  }

  long long calls() const { return calls_.load(std::memory_order_relaxed); }

 private:
  MarkovGame transitions_;  // rewards zeroed
  std::atomic<long long> calls_{0};
};

/// Transition counts from N generative calls per triple.
struct EmpiricalModel {
  GameDims dims;
  long long samples_per_pair = 0;
  std::vector<long long> counts;  ///< [s][a][b][s']

  long long count(int s, int a, int b, int next) const {
    return counts[dims.triple(s, a, b) * dims.states + next];
  }
  std::vector<double> p_hat() const {
    std::vector<double> p(counts.size());
    const double n = static_cast<double>(samples_per_pair);
    for (std::size_t i = 0; i < counts.size(); ++i) p[i] = static_cast<double>(counts[i]) / n;
    return p;
  }

  /// Row sums equal N and every count is nonnegative.
  void validate() const {
    detail::require(dims.states > 0 && dims.max_actions > 0 && dims.min_actions > 0,
                    ErrorKind::invalid_input, "empirical model has empty dimensions");
    detail::require(samples_per_pair >= 1, ErrorKind::invalid_input, "N must be at least 1");
    detail::require(counts.size() == dims.triples() * dims.states, ErrorKind::dimension_mismatch,
                    "counts array has wrong length for " + describe(dims));
    for (int s = 0; s < dims.states; ++s)
      for (int a = 0; a < dims.max_actions; ++a)
        for (int b = 0; b < dims.min_actions; ++b) {
          long long total = 0;
          for (int next = 0; next < dims.states; ++next) {
            const long long c = count(s, a, b, next);
            detail::require(c >= 0, ErrorKind::invalid_input, "negative count");
            total += c;
          }
          detail::require(total == samples_per_pair, ErrorKind::invalid_input,
                          "counts[" + std::to_string(s) + "][" + std::to_string(a) + "][" +
                              std::to_string(b) + "] sum to " + std::to_string(total) +
                              ", expected N=" + std::to_string(samples_per_pair));
        }
  }

  bool operator==(const EmpiricalModel&) const = default;
};

inline EmpiricalModel estimate_model(GenerativeModel& sampler, long long n, const RngSpec& rng) {
  detail::require(n >= 1, ErrorKind::invalid_input, "N must be at least 1");
  const auto d = sampler.dims();
  EmpiricalModel model{d, n, std::vector<long long>(d.triples() * d.states, 0)};
  for (int s = 0; s < d.states; ++s)
    for (int a = 0; a < d.max_actions; ++a)
      for (int b = 0; b < d.min_actions; ++b) {
        auto engine = triple_engine(rng, s, a, b);
        long long* row = model.counts.data() + d.triple(s, a, b) * d.states;
        for (long long i = 0; i < n; ++i) ++row[sampler.draw(s, a, b, engine)];
      }
  return model;
}

inline EmpiricalModel estimate_model(const MarkovGame& game, long long n, const RngSpec& rng) {
  GenerativeModel sampler(game);
  return estimate_model(sampler, n, rng);
}

/// Game with transitions P-hat and the given reward, used as is.
inline MarkovGame empirical_game(const EmpiricalModel& model, std::vector<double> reward,
                                 double gamma, RewardRange range = RewardRange::unit_interval) {
  model.validate();
  detail::require(reward.size() == model.dims.triples(), ErrorKind::dimension_mismatch,
                  "reward array has " + std::to_string(reward.size()) + " entries, model needs " +
                      std::to_string(model.dims.triples()));
  return MarkovGame::create(model.dims, gamma, model.p_hat(), std::move(reward), range);
}

/// Samples once, then plans on the shared empirical transitions for each reward.
inline std::vector<PlanResult> reward_agnostic_pipeline(GenerativeModel& sampler, double gamma,
                                                        long long n,
                                                        const std::vector<std::vector<double>>& rewards,
                                                        const PlanConfig& config,
                                                        const RngSpec& rng) {
  detail::require(!rewards.empty(), ErrorKind::invalid_input, "at least one reward is required");
  for (const auto& r : rewards)
    detail::require(r.size() == sampler.dims().triples(), ErrorKind::dimension_mismatch,
                    "reward array does not match the game dimensions");
  const auto model = estimate_model(sampler, n, rng);
  std::vector<PlanResult> results;
  results.reserve(rewards.size());
  for (const auto& r : rewards) results.push_back(shapley_value_iteration(empirical_game(model, r, gamma), config));
  return results;
}

inline std::vector<PlanResult> reward_agnostic_pipeline(const MarkovGame& game, long long n,
                                                        const std::vector<std::vector<double>>& rewards,
                                                        const PlanConfig& config,
                                                        const RngSpec& rng) {
  GenerativeModel sampler(game);
  return reward_agnostic_pipeline(sampler, game.discount(), n, rewards, config, rng);
}

}  // namespace zsmg
