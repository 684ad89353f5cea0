#pragma once

// Flat key=value training configuration. Every key has a default; unknown
// keys and malformed values are errors.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "hrlmg/encoders.hpp"
#include "hrlmg/environment.hpp"
#include "hrlmg/errors.hpp"
#include "hrlmg/io.hpp"
#include "hrlmg/numerics.hpp"

namespace hrlmg {

enum class Precision { Float, Double };

struct TrainConfig {
  std::uint64_t seed = 1;
  Precision precision = Precision::Float;

  // networks
  NetworkShape shape;

  // hierarchy and rewards
  int goals = 2;      // M
  int period = 10;    // c
  double alpha = 0.5;
  double beta = 0.5;
  double gamma = 0.95;
  double tau = 0.01;

  // optimisation
  OptimizerKind optimizer = OptimizerKind::Sgd;
  double actor_lr = 1e-4;
  double critic_lr = 1e-3;
  double critic_output_bias = 0.1;
  bool critic_direction_input = true;
  bool mapped_target = false;  // low-level bootstrap at the nearest catalog item
  std::size_t low_capacity = 100000;
  std::size_t high_capacity = 10000;
  std::size_t low_batch = 64;
  std::size_t high_batch = 16;
  std::size_t warmup_samples = 1000;  // low-level threshold is max(low_batch, this)
  int update_every = 1;
  double noise_start = 0.2;  // times B
  double noise_end = 0.01;   // times B

  // sessions
  int sessions = 200;        // G
  int session_length = 100;  // T for training
  int warmup_interactions = 10;
  int recall_k = 0;          // 0 scans every active item

  // DNN baseline
  double dnn_epsilon = 0.1;
  double dnn_lr = 1e-3;

  // catalog
  Index catalog_items = 1000;
  Index catalog_clusters = 10;
  double catalog_noise = 0.5;

  // synthetic user
  UserModelConfig user;

  // evaluation
  int eval_sessions = 20;
  int eval_short = 50;
  int eval_long = 300;

  // sweeps
  std::vector<std::uint64_t> sweep_seeds{1, 2, 3};

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError(m); };
    if (!(gamma >= 0.0 && gamma <= 1.0)) fail("gamma must lie in [0, 1]");
    if (!(tau > 0.0 && tau <= 1.0)) fail("tau must lie in (0, 1]");
    if (goals < 1) fail("goals must be at least 1");
    if (period < goals) fail("period must be at least goals");
    if (!(alpha >= 0.0)) fail("alpha must be non-negative");
    if (!(beta >= 0.0 && beta <= 1.0)) fail("beta must lie in [0, 1]");
    if (!(shape.bound > 0.0)) fail("bound must be positive");
    if (shape.item_dim < 2 || shape.window < 1 || shape.hidden < 1 || shape.state_dim < 1 || shape.critic_hidden < 1)
      fail("network sizes must be positive (item_dim >= 2)");
    if (!(actor_lr > 0.0 && critic_lr > 0.0 && dnn_lr > 0.0)) fail("learning rates must be positive");
    if (low_capacity == 0 || high_capacity == 0 || low_batch == 0 || high_batch == 0) fail("buffer sizes must be positive");
    if (update_every < 1) fail("update_every must be at least 1");
    if (!(noise_start >= 0.0 && noise_end >= 0.0)) fail("noise levels must be non-negative");
    if (sessions < 0 || session_length < 1 || warmup_interactions < 0) fail("session counts must be non-negative");
    if (recall_k < 0) fail("recall_k must be non-negative");
    if (!(dnn_epsilon >= 0.0 && dnn_epsilon <= 1.0)) fail("dnn_epsilon must lie in [0, 1]");
    if (catalog_items < catalog_clusters || catalog_clusters < 1) fail("need catalog_items >= catalog_clusters >= 1");
    if (eval_sessions < 0 || eval_short < 1 || eval_long < 1) fail("evaluation sizes must be positive");
  }
};

namespace detail {

template <class V>
V parse_value(std::string_view key, std::string_view v) {
  if constexpr (std::is_same_v<V, std::string>) {
    return std::string(v);
  } else {
    auto x = io::parse_number<V>(v);
    if (!x) throw ConfigError("invalid value '" + std::string(v) + "' for key '" + std::string(key) + "'");
    return *x;
  }
}

// Key table: name -> (setter, getter as text).
struct ConfigField {
  std::function<void(TrainConfig&, std::string_view)> set;
  std::function<std::string(const TrainConfig&)> get;
};

template <class V>
ConfigField numeric_field(V TrainConfig::*member) {
  return {[member](TrainConfig& c, std::string_view v) { c.*member = parse_value<V>("", v); },
          [member](const TrainConfig& c) {
            if constexpr (std::is_floating_point_v<V>) return io::format_real(c.*member);
            else return std::to_string(c.*member);
          }};
}

template <class S, class V>
ConfigField nested_field(S TrainConfig::*outer, V S::*member) {
  return {[outer, member](TrainConfig& c, std::string_view v) { (c.*outer).*member = parse_value<V>("", v); },
          [outer, member](const TrainConfig& c) {
            if constexpr (std::is_floating_point_v<V>) return io::format_real((c.*outer).*member);
            else return std::to_string((c.*outer).*member);
          }};
}

inline const std::map<std::string, ConfigField>& config_fields() {
  static const std::map<std::string, ConfigField> fields = [] {
    std::map<std::string, ConfigField> f;
    f["seed"] = numeric_field(&TrainConfig::seed);
    f["precision"] = {[](TrainConfig& c, std::string_view v) {
                        if (v == "float") c.precision = Precision::Float;
                        else if (v == "double") c.precision = Precision::Double;
                        else throw ConfigError("precision must be float or double");
                      },
                      [](const TrainConfig& c) { return std::string(c.precision == Precision::Float ? "float" : "double"); }};
    f["item_dim"] = nested_field(&TrainConfig::shape, &NetworkShape::item_dim);
    f["window"] = nested_field(&TrainConfig::shape, &NetworkShape::window);
    f["hidden"] = nested_field(&TrainConfig::shape, &NetworkShape::hidden);
    f["state_dim"] = nested_field(&TrainConfig::shape, &NetworkShape::state_dim);
    f["critic_hidden"] = nested_field(&TrainConfig::shape, &NetworkShape::critic_hidden);
    f["bound"] = nested_field(&TrainConfig::shape, &NetworkShape::bound);
    f["goals"] = numeric_field(&TrainConfig::goals);
    f["period"] = numeric_field(&TrainConfig::period);
    f["alpha"] = numeric_field(&TrainConfig::alpha);
    f["beta"] = numeric_field(&TrainConfig::beta);
    f["gamma"] = numeric_field(&TrainConfig::gamma);
    f["tau"] = numeric_field(&TrainConfig::tau);
    f["optimizer"] = {[](TrainConfig& c, std::string_view v) {
                        if (v == "sgd") c.optimizer = OptimizerKind::Sgd;
                        else if (v == "adam") c.optimizer = OptimizerKind::Adam;
                        else throw ConfigError("optimizer must be sgd or adam");
                      },
                      [](const TrainConfig& c) { return std::string(c.optimizer == OptimizerKind::Sgd ? "sgd" : "adam"); }};
    f["actor_lr"] = numeric_field(&TrainConfig::actor_lr);
    f["critic_lr"] = numeric_field(&TrainConfig::critic_lr);
    f["critic_output_bias"] = numeric_field(&TrainConfig::critic_output_bias);
    f["critic_input"] = {[](TrainConfig& c, std::string_view v) {
                           if (v == "direction") c.critic_direction_input = true;
                           else if (v == "raw") c.critic_direction_input = false;
                           else throw ConfigError("critic_input must be direction or raw");
                         },
                         [](const TrainConfig& c) { return std::string(c.critic_direction_input ? "direction" : "raw"); }};
    f["target_action"] = {[](TrainConfig& c, std::string_view v) {
                            if (v == "virtual") c.mapped_target = false;
                            else if (v == "mapped") c.mapped_target = true;
                            else throw ConfigError("target_action must be virtual or mapped");
                          },
                          [](const TrainConfig& c) { return std::string(c.mapped_target ? "mapped" : "virtual"); }};
    f["low_capacity"] = numeric_field(&TrainConfig::low_capacity);
    f["high_capacity"] = numeric_field(&TrainConfig::high_capacity);
    f["low_batch"] = numeric_field(&TrainConfig::low_batch);
    f["high_batch"] = numeric_field(&TrainConfig::high_batch);
    f["warmup_samples"] = numeric_field(&TrainConfig::warmup_samples);
    f["update_every"] = numeric_field(&TrainConfig::update_every);
    f["noise_start"] = numeric_field(&TrainConfig::noise_start);
    f["noise_end"] = numeric_field(&TrainConfig::noise_end);
    f["sessions"] = numeric_field(&TrainConfig::sessions);
    f["session_length"] = numeric_field(&TrainConfig::session_length);
    f["warmup_interactions"] = numeric_field(&TrainConfig::warmup_interactions);
    f["recall_k"] = numeric_field(&TrainConfig::recall_k);
    f["dnn_epsilon"] = numeric_field(&TrainConfig::dnn_epsilon);
    f["dnn_lr"] = numeric_field(&TrainConfig::dnn_lr);
    f["catalog_items"] = numeric_field(&TrainConfig::catalog_items);
    f["catalog_clusters"] = numeric_field(&TrainConfig::catalog_clusters);
    f["catalog_noise"] = numeric_field(&TrainConfig::catalog_noise);
    f["kappa_c"] = nested_field(&TrainConfig::user, &UserModelConfig::kappa_c);
    f["bias_c"] = nested_field(&TrainConfig::user, &UserModelConfig::bias_c);
    f["kappa_o"] = nested_field(&TrainConfig::user, &UserModelConfig::kappa_o);
    f["bias_o"] = nested_field(&TrainConfig::user, &UserModelConfig::bias_o);
    f["intent_gain"] = nested_field(&TrainConfig::user, &UserModelConfig::intent_gain);
    f["intent_cap"] = nested_field(&TrainConfig::user, &UserModelConfig::intent_cap);
    f["drift"] = nested_field(&TrainConfig::user, &UserModelConfig::drift);
    f["taste_mix"] = nested_field(&TrainConfig::user, &UserModelConfig::taste_mix);
    f["taste_noise"] = nested_field(&TrainConfig::user, &UserModelConfig::taste_noise);
    f["leave_base"] = nested_field(&TrainConfig::user, &UserModelConfig::leave_base);
    f["leave_slope"] = nested_field(&TrainConfig::user, &UserModelConfig::leave_slope);
    f["leave_cap"] = nested_field(&TrainConfig::user, &UserModelConfig::leave_cap);
    f["eval_sessions"] = numeric_field(&TrainConfig::eval_sessions);
    f["eval_short"] = numeric_field(&TrainConfig::eval_short);
    f["eval_long"] = numeric_field(&TrainConfig::eval_long);
    f["sweep_seeds"] = {[](TrainConfig& c, std::string_view v) {
                          c.sweep_seeds.clear();
                          for (auto part : io::split(v, ',')) {
                            auto s = io::parse_number<std::uint64_t>(io::trim(part));
                            if (!s) throw ConfigError("sweep_seeds must be a comma-separated list of integers");
                            c.sweep_seeds.push_back(*s);
                          }
                        },
                        [](const TrainConfig& c) {
                          std::string out;
                          for (std::size_t i = 0; i < c.sweep_seeds.size(); ++i) {
                            if (i) out += ',';
                            out += std::to_string(c.sweep_seeds[i]);
                          }
                          return out;
                        }};
    return f;
  }();
  return fields;
}

}  // namespace detail

inline void set_config_value(TrainConfig& cfg, std::string_view key, std::string_view value) {
  const auto& fields = detail::config_fields();
  auto it = fields.find(std::string(key));
  if (it == fields.end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  try {
    it->second.set(cfg, value);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(key) + ": " + e.what());
  }
}

inline std::string get_config_value(const TrainConfig& cfg, std::string_view key) {
  const auto& fields = detail::config_fields();
  auto it = fields.find(std::string(key));
  if (it == fields.end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  return it->second.get(cfg);
}

inline std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [k, _] : detail::config_fields()) out.push_back(k);
  return out;
}

// '#' starts a comment; blank lines are ignored.
inline TrainConfig parse_config(std::string_view text, TrainConfig base = {}) {
  std::size_t lineno = 0;
  for (auto raw : io::split(text, '\n')) {
    ++lineno;
    auto line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = io::trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(lineno, "expected key=value");
    try {
      set_config_value(base, io::trim(line.substr(0, eq)), io::trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ParseError(lineno, e.what());
    }
  }
  base.validate();
  return base;
}

inline TrainConfig load_config(const std::filesystem::path& path) { return parse_config(io::read_file(path)); }

inline std::string format_config(const TrainConfig& cfg) {
  std::string out;
  for (const auto& [k, f] : detail::config_fields()) out += k + "=" + f.get(cfg) + "\n";
  return out;
}

}  // namespace hrlmg
