#pragma once

// `key = value` configuration files. `#` starts a comment; unknown keys are errors.

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <type_traits>

#include "fdti/error.hpp"
#include "fdti/model.hpp"
#include "fdti/simulator.hpp"
#include "fdti/text.hpp"
#include "fdti/training.hpp"

namespace fdti {

class KeyValues {
public:
  KeyValues() = default;

  static KeyValues parse(std::string_view text) {
    KeyValues kv;
    int line_no = 0;
    for (auto line : split(text, '\n')) {
      ++line_no;
      if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      require(eq != std::string_view::npos, "config line " + std::to_string(line_no) + ": expected key = value");
      const std::string key(trim(line.substr(0, eq)));
      require(!key.empty(), "config line " + std::to_string(line_no) + ": empty key");
      require(!kv.values_.count(key), "config: duplicate key '" + key + "'");
      kv.values_[key] = std::string(trim(line.substr(eq + 1)));
    }
    return kv;
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  const std::map<std::string, std::string>& values() const { return values_; }

  template <class T>
  void read(const std::string& key, T& out) const {
    const auto it = values_.find(key);
    used_.insert(key);
    if (it == values_.end()) return;
    const auto& s = it->second;
    if constexpr (std::is_same_v<T, bool>) {
      if (s == "true" || s == "1" || s == "on") out = true;
      else if (s == "false" || s == "0" || s == "off") out = false;
      else throw ValidationError("config: '" + key + "' expects a boolean");
    } else if constexpr (std::is_floating_point_v<T>) {
      out = static_cast<T>(parse_real(s, "config '" + key + "'"));
    } else {
      const auto v = parse_int(s, "config '" + key + "'");
      if constexpr (std::is_unsigned_v<T>) require(v >= 0, "config: '" + key + "' must be non-negative");
      out = static_cast<T>(v);
    }
  }

  /// Throws on keys never read.
  void reject_unknown() const {
    for (const auto& [k, v] : values_)
      if (!used_.count(k)) throw ValidationError("config: unknown key '" + k + "'");
  }

private:
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

inline SimConfig sim_config_from(const KeyValues& kv) {
  SimConfig c;
  kv.read("rows", c.rows);
  kv.read("cols", c.cols);
  kv.read("saturation_vps", c.saturation_vps);
  kv.read("demand_vpm", c.demand_vpm);
  kv.read("turn_left", c.turn_ratios[0]);
  kv.read("turn_straight", c.turn_ratios[1]);
  kv.read("turn_right", c.turn_ratios[2]);
  kv.read("cycle_s", c.cycle_s);
  kv.read("split", c.split);
  kv.read("duration_min", c.duration_min);
  kv.read("warmup_min", c.warmup_min);
  kv.read("seed", c.seed);
  kv.read("min_length_m", c.min_length_m);
  kv.read("max_length_m", c.max_length_m);
  kv.read("right_always_green", c.right_always_green);
  kv.reject_unknown();
  c.validate();
  return c;
}

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};

inline RunConfig run_config_from(const KeyValues& kv) {
  RunConfig c;
  auto& m = c.model;
  kv.read("hidden_dim", m.hidden_dim);
  kv.read("layers", m.n_layers);
  m.window = m.n_layers + 1;
  kv.read("window", m.window);
  kv.read("lambda", m.discount);
  kv.read("clamp", m.clamp_nonneg);
  kv.read("residual", m.use_residual);
  kv.read("seed", m.seed);
  kv.read("normalize_green", m.graph.normalize_green);
  kv.read("dynamic_edges", m.graph.dynamic_edges);
  bool constant_self = false;
  kv.read("constant_self_edges", constant_self);
  m.graph.self_edges = constant_self ? SelfEdgeWeight::Constant : SelfEdgeWeight::SignalGated;
  kv.read("roadnet_features", m.features.roadnet_features);
  kv.read("volume_scale", m.features.volume_scale);
  kv.read("lr", c.train.adam.lr);
  kv.read("epochs", c.train.max_epochs);
  kv.read("patience", c.train.patience);
  kv.reject_unknown();
  m.validate();
  return c;
}

inline std::string describe(const SimConfig& c) {
  return "rows = " + std::to_string(c.rows) + "\ncols = " + std::to_string(c.cols) +
         "\nsaturation_vps = " + format_real(c.saturation_vps) + "\ndemand_vpm = " + format_real(c.demand_vpm) +
         "\nturn_left = " + format_real(c.turn_ratios[0]) + "\nturn_straight = " + format_real(c.turn_ratios[1]) +
         "\nturn_right = " + format_real(c.turn_ratios[2]) + "\ncycle_s = " + std::to_string(c.cycle_s) +
         "\nsplit = " + format_real(c.split) + "\nduration_min = " + std::to_string(c.duration_min) +
         "\nwarmup_min = " + std::to_string(c.warmup_min) + "\nseed = " + std::to_string(c.seed) +
         "\nmin_length_m = " + format_real(c.min_length_m) + "\nmax_length_m = " + format_real(c.max_length_m) +
         "\nright_always_green = " + (c.right_always_green ? "true" : "false") + "\n";
}

}  // namespace fdti
