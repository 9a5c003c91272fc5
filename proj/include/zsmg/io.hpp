#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "zsmg/error.hpp"
#include "zsmg/game.hpp"
#include "zsmg/instances.hpp"
#include "zsmg/sampling.hpp"

namespace zsmg {

using json = nlohmann::json;

namespace detail {

inline const json& field(const json& j, const char* key, const std::string& where) {
  require(j.is_object(), ErrorKind::invalid_input, where + " is not a JSON object");
  const auto it = j.find(key);
  require(it != j.end(), ErrorKind::invalid_input, where + " is missing \"" + key + "\"");
  return *it;
}

inline int int_field(const json& j, const char* key, const std::string& where) {
  const auto& v = field(j, key, where);
  require(v.is_number_integer(), ErrorKind::invalid_input,
          where + "." + key + " must be an integer");
  return v.get<int>();
}

inline double number_field(const json& j, const char* key, const std::string& where) {
  const auto& v = field(j, key, where);
  require(v.is_number(), ErrorKind::invalid_input, where + "." + key + " must be a number");
  return v.get<double>();
}

/// Flattens a nested array of the given shape (row-major), naming the
/// first index path whose shape or type is wrong.
template <typename T>
void flatten(const json& j, const std::vector<int>& shape, std::size_t depth, const std::string& path,
             std::vector<T>& out) {
  if (depth == shape.size()) {
    if constexpr (std::is_integral_v<T>) {
      require(j.is_number_integer(), ErrorKind::invalid_input, path + " must be an integer");
    } else {
      require(j.is_number(), ErrorKind::invalid_input, path + " must be a number");
    }
    out.push_back(j.get<T>());
    return;
  }
  require(j.is_array() && j.size() == static_cast<std::size_t>(shape[depth]),
          ErrorKind::invalid_input,
          path + " must be an array of length " + std::to_string(shape[depth]));
  for (int i = 0; i < shape[depth]; ++i)
    flatten(j[static_cast<std::size_t>(i)], shape, depth + 1, path + "[" + std::to_string(i) + "]",
            out);
}

template <typename T>
json nest(const std::vector<T>& flat, const std::vector<int>& shape, std::size_t depth = 0,
          std::size_t offset = 0) {
  if (depth == shape.size()) return json(flat[offset]);
  std::size_t stride = 1;
  for (std::size_t d = depth + 1; d < shape.size(); ++d) stride *= shape[d];
  json arr = json::array();
  for (int i = 0; i < shape[depth]; ++i) arr.push_back(nest(flat, shape, depth + 1, offset + i * stride));
  return arr;
}

inline json triple_json(const std::optional<HardTriple>& t) {
  if (!t) return nullptr;
  return {{"k", t->k}, {"l1", t->l1}, {"l2", t->l2}};
}

inline std::optional<HardTriple> triple_from(const json& j, const std::string& where) {
  if (j.is_null()) return std::nullopt;
  return HardTriple{int_field(j, "k", where), int_field(j, "l1", where), int_field(j, "l2", where)};
}

}  // namespace detail

inline json to_json(const MarkovGame& game) {
  const auto& d = game.dims();
  return {{"gamma", game.discount()},
          {"num_states", d.states},
          {"num_actions_max", d.max_actions},
          {"num_actions_min", d.min_actions},
          {"transition",
           detail::nest(game.transitions(), {d.states, d.max_actions, d.min_actions, d.states})},
          {"reward", detail::nest(game.rewards(), {d.states, d.max_actions, d.min_actions})}};
}

inline MarkovGame game_from_json(const json& j, RewardRange range = RewardRange::unit_interval) {
  const std::string where = "game";
  const GameDims d{detail::int_field(j, "num_states", where),
                   detail::int_field(j, "num_actions_max", where),
                   detail::int_field(j, "num_actions_min", where)};
  detail::require(d.states > 0 && d.max_actions > 0 && d.min_actions > 0, ErrorKind::invalid_input,
                  "game dimensions must be positive, got " + describe(d));
  std::vector<double> p;
  std::vector<double> r;
  detail::flatten(detail::field(j, "transition", where),
                  {d.states, d.max_actions, d.min_actions, d.states}, 0, "transition", p);
  detail::flatten(detail::field(j, "reward", where), {d.states, d.max_actions, d.min_actions}, 0,
                  "reward", r);
  return MarkovGame::create(d, detail::number_field(j, "gamma", where), std::move(p), std::move(r),
                            range);
}

inline json to_json(const EmpiricalModel& model) {
  const auto& d = model.dims;
  return {{"N", model.samples_per_pair},
          {"counts", detail::nest(model.counts, {d.states, d.max_actions, d.min_actions, d.states})}};
}

/// The counts array carries its own shape; p_hat is re-derived and checked.
inline EmpiricalModel model_from_json(const json& j) {
  const auto& counts = detail::field(j, "counts", "model");
  const auto& n = detail::field(j, "N", "model");
  detail::require(n.is_number_integer(), ErrorKind::invalid_input, "model.N must be an integer");
  auto length = [](const json& a, const std::string& path) {
    detail::require(a.is_array() && !a.empty(), ErrorKind::invalid_input,
                    path + " must be a non-empty array");
    return static_cast<int>(a.size());
  };
  const int s = length(counts, "counts");
  const int a = length(counts[0], "counts[0]");
  const int b = length(counts[0][0], "counts[0][0]");
  EmpiricalModel model{{s, a, b}, n.get<long long>(), {}};
  detail::flatten(counts, {s, a, b, s}, 0, "counts", model.counts);
  model.validate();
  return model;
}

inline json to_json(const StationaryPolicy& policy) {
  return detail::nest(policy.probabilities(), {policy.num_states(), policy.num_actions()});
}

inline json to_json(const HardInstanceSpec& spec) {
  return {{"K", spec.K},         {"L1", spec.L1},
          {"L2", spec.L2},       {"gamma", spec.gamma},
          {"eps", spec.eps},     {"p0", spec.p0},
          {"alpha1", spec.alpha1}, {"alpha2", spec.alpha2},
          {"c_prime", spec.c_prime}, {"c", spec.c},
          {"alternative", detail::triple_json(spec.alternative)},
          {"reward", detail::triple_json(spec.reward)}};
}

inline HardInstanceSpec hard_spec_from_json(const json& j) {
  const std::string where = "spec";
  HardInstanceSpec spec;
  spec.K = detail::int_field(j, "K", where);
  spec.L1 = detail::int_field(j, "L1", where);
  spec.L2 = detail::int_field(j, "L2", where);
  spec.gamma = detail::number_field(j, "gamma", where);
  spec.eps = detail::number_field(j, "eps", where);
  spec.p0 = detail::number_field(j, "p0", where);
  spec.alpha1 = detail::number_field(j, "alpha1", where);
  spec.alpha2 = detail::number_field(j, "alpha2", where);
  spec.c_prime = j.value("c_prime", 0.0);
  spec.c = j.value("c", 0.0);
  spec.alternative = detail::triple_from(j.value("alternative", json()), where + ".alternative");
  spec.reward = detail::triple_from(j.value("reward", json()), where + ".reward");
  return spec;
}

/// {"spec", "q_closed_form", "claimed_ne"} sidecar for a hard instance.
inline json sidecar_json(const HardInstance& inst) {
  json claimed = json::object();
  for (const auto& [k, ab] : inst.claimed_ne)
    claimed[std::to_string(hard_x_state(inst.spec, k))] = {ab.first, ab.second};
  const auto& d = inst.q_closed_form.dims;
  return {{"spec", to_json(inst.spec)},
          {"q_closed_form", detail::nest(inst.q_closed_form.values, {d.states, d.max_actions, d.min_actions})},
          {"claimed_ne", claimed}};
}

inline json to_json(const InstanceReport& report) {
  json checks = json::array();
  for (const auto& c : report.checks)
    checks.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
  return {{"all_passed", report.all_passed()}, {"checks", checks}};
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  detail::require(static_cast<bool>(in), ErrorKind::io, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline json read_json(const std::filesystem::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    detail::fail(ErrorKind::invalid_input, path.string() + ": " + e.what());
  }
}

/// Writes via a sibling temporary file and a rename.
inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    detail::require(static_cast<bool>(out), ErrorKind::io, "cannot write " + tmp.string());
    out << text;
    out.flush();
    detail::require(static_cast<bool>(out), ErrorKind::io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  detail::require(!ec, ErrorKind::io, "cannot rename onto " + path.string() + ": " + ec.message());
}

inline MarkovGame load_game(const std::filesystem::path& path) { return game_from_json(read_json(path)); }

inline void save_json(const std::filesystem::path& path, const json& j) {
  write_text_atomic(path, j.dump(2) + "\n");
}

}  // namespace zsmg
