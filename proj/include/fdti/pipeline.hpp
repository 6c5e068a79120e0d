#pragma once

// Multi-horizon prediction sets, their file format, and the comparison harness shared
// by the command-line tool and the acceptance suite.

#include <algorithm>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "fdti/error.hpp"
#include "fdti/evaluation.hpp"
#include "fdti/model.hpp"
#include "fdti/simulator.hpp"
#include "fdti/text.hpp"
#include "fdti/training.hpp"

namespace fdti {

/// values[h][o * N + i]: forecast of X_{origins[o] + horizons[h]} at node i.
struct PredictionSet {
  std::vector<int> origins;
  std::vector<int> horizons;
  std::size_t n_nodes = 0;
  std::vector<std::vector<double>> values;

  PredictionSet() = default;
  PredictionSet(std::vector<int> o, std::vector<int> h, std::size_t n)
      : origins(std::move(o)), horizons(std::move(h)), n_nodes(n),
        values(horizons.size(), std::vector<double>(origins.size() * n, 0.0)) {}

  int max_horizon() const { return horizons.empty() ? 0 : *std::max_element(horizons.begin(), horizons.end()); }

  /// Stores a rollout whose row q is the forecast q+1 minutes ahead.
  void store(std::size_t o, const std::vector<std::vector<double>>& steps) {
    for (std::size_t h = 0; h < horizons.size(); ++h) {
      const auto& row = steps.at(static_cast<std::size_t>(horizons[h] - 1));
      std::copy(row.begin(), row.end(), values[h].begin() + static_cast<std::ptrdiff_t>(o * n_nodes));
    }
  }

  /// Horizon-h forecasts as a (origins x N) series indexed by target minute.
  Matrix series(int horizon) const {
    const auto it = std::find(horizons.begin(), horizons.end(), horizon);
    require(it != horizons.end(), "predictions: horizon " + std::to_string(horizon) + " not present");
    const auto& v = values[static_cast<std::size_t>(it - horizons.begin())];
    Matrix m(origins.size(), n_nodes);
    std::copy(v.begin(), v.end(), m.flat().begin());
    return m;
  }

  friend bool operator==(const PredictionSet&, const PredictionSet&) = default;
};

inline constexpr std::string_view kPredictionsHeader = "t_min,node_id,horizon,volume";

/// One row per (origin minute, node, horizon), in that order.
inline std::string serialize_predictions(const PredictionSet& p) {
  std::string out(kPredictionsHeader);
  out += '\n';
  for (std::size_t o = 0; o < p.origins.size(); ++o)
    for (std::size_t i = 0; i < p.n_nodes; ++i)
      for (std::size_t h = 0; h < p.horizons.size(); ++h)
        out += std::to_string(p.origins[o]) + ',' + std::to_string(i) + ',' + std::to_string(p.horizons[h]) + ',' +
               format_real(p.values[h][o * p.n_nodes + i]) + '\n';
  return out;
}

inline PredictionSet parse_predictions(std::string_view text) {
  struct Row { long long t, i, h; double v; };
  std::vector<Row> rows;
  std::vector<int> origins, horizons;
  long long max_node = -1;
  for (const auto line : csv_rows(text, kPredictionsHeader, "predictions")) {
    const auto f = split(line, ',');
    require(f.size() == 4, "predictions: expected 4 fields");
    Row r{parse_int(f[0], "predictions t_min"), parse_int(f[1], "predictions node_id"),
          parse_int(f[2], "predictions horizon"), parse_real(f[3], "predictions volume")};
    require(r.i >= 0 && r.h >= 1, "predictions: invalid node or horizon");
    if (origins.empty() || origins.back() != r.t) {
      require(origins.empty() || r.t > origins.back(), "predictions: rows must be sorted by t_min");
      origins.push_back(static_cast<int>(r.t));
    }
    if (origins.size() == 1 && r.i == 0) horizons.push_back(static_cast<int>(r.h));
    max_node = std::max(max_node, r.i);
    rows.push_back(r);
  }
  const auto n = static_cast<std::size_t>(max_node + 1);
  PredictionSet p(origins, horizons, n);
  require(rows.size() == origins.size() * n * horizons.size(), "predictions: incomplete file");
  std::size_t k = 0;
  for (std::size_t o = 0; o < origins.size(); ++o)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t h = 0; h < horizons.size(); ++h, ++k) {
        const auto& r = rows[k];
        require(r.t == origins[o] && r.i == static_cast<long long>(i) && r.h == horizons[h],
                "predictions: rows must be ordered by (t_min, node_id, horizon)");
        p.values[h][o * n + i] = r.v;
      }
  return p;
}

inline PredictionSet truth_for(const Dataset& data, const std::vector<int>& origins, const std::vector<int>& horizons) {
  PredictionSet p(origins, horizons, data.n_nodes());
  for (std::size_t h = 0; h < horizons.size(); ++h)
    for (std::size_t o = 0; o < origins.size(); ++o) {
      const auto row = data.volumes.row(data.row(origins[o] + horizons[h]));
      std::copy(row.begin(), row.end(), p.values[h].begin() + static_cast<std::ptrdiff_t>(o * data.n_nodes()));
    }
  return p;
}

/// Looks up forecasts for the same (origin, horizon) cells in a volumes-indexed truth.
inline PredictionSet truth_for(const Matrix& volumes, int first_minute, const PredictionSet& like) {
  PredictionSet p(like.origins, like.horizons, like.n_nodes);
  require(volumes.cols() == like.n_nodes, "truth: node count differs from predictions");
  for (std::size_t h = 0; h < like.horizons.size(); ++h)
    for (std::size_t o = 0; o < like.origins.size(); ++o) {
      const int t = like.origins[o] + like.horizons[h] - first_minute;
      require(t >= 0 && static_cast<std::size_t>(t) < volumes.rows(),
              "truth: minute " + std::to_string(t + first_minute) + " not available");
      const auto row = volumes.row(static_cast<std::size_t>(t));
      std::copy(row.begin(), row.end(), p.values[h].begin() + static_cast<std::ptrdiff_t>(o * like.n_nodes));
    }
  return p;
}

inline MetricsReport evaluate(const PredictionSet& pred, const PredictionSet& truth) {
  require(pred.origins == truth.origins && pred.horizons == truth.horizons && pred.n_nodes == truth.n_nodes,
          "evaluate: predictions and truth are misaligned");
  return evaluate(pred.values, truth.values, pred.horizons);
}

/// Origins whose forecast targets t+1..t+horizon all fall in `targets`. The input window
/// may reach back before targets.begin but not into the warm-up.
inline std::vector<int> evaluation_origins(const Dataset& data, MinuteRange targets, std::size_t window,
                                           int horizon) {
  const int earliest = data.range.begin + data.warmup_min + static_cast<int>(window) - 1;
  std::vector<int> out;
  for (int t = std::max(targets.begin - 1, earliest); t + horizon < targets.end; ++t)
    out.push_back(t);
  return out;
}

inline PredictionSet predict_fdti(const Dataset& data, const std::vector<int>& origins, const std::vector<int>& horizons,
                                  const ModelParams& params, const ModelConfig& config) {
  PredictionSet p(origins, horizons, data.n_nodes());
  for (std::size_t o = 0; o < origins.size(); ++o)
    p.store(o, rollout(data, origins[o], p.max_horizon(), params, config).volumes);
  return p;
}

inline PredictionSet predict_persistence(const Dataset& data, const std::vector<int>& origins,
                                         const std::vector<int>& horizons) {
  PredictionSet p(origins, horizons, data.n_nodes());
  for (std::size_t o = 0; o < origins.size(); ++o) {
    const auto x = data.volumes.row(data.row(origins[o]));
    std::vector<std::vector<double>> steps;
    for (int q = 1; q <= p.max_horizon(); ++q) steps.push_back(baseline_persistence(x, q));
    p.store(o, steps);
  }
  return p;
}

inline PredictionSet predict_ha(const Dataset& data, MinuteRange train, const std::vector<int>& origins,
                                const std::vector<int>& horizons) {
  Matrix rows(static_cast<std::size_t>(train.size()), data.n_nodes());
  for (int t = train.begin; t < train.end; ++t) {
    const auto r = data.volumes.row(data.row(t));
    std::copy(r.begin(), r.end(), rows.row(static_cast<std::size_t>(t - train.begin)).begin());
  }
  const auto mean = baseline_ha(rows);
  PredictionSet p(origins, horizons, data.n_nodes());
  for (std::size_t o = 0; o < origins.size(); ++o)
    p.store(o, std::vector<std::vector<double>>(static_cast<std::size_t>(p.max_horizon()), mean));
  return p;
}

inline PredictionSet predict_linreg(const Dataset& data, MinuteRange train, const std::vector<int>& origins,
                                    const std::vector<int>& horizons, const FeatureOptions& opt = {}) {
  const auto lr = fit_linreg_baseline(data, train, opt);
  PredictionSet p(origins, horizons, data.n_nodes());
  for (std::size_t o = 0; o < origins.size(); ++o)
    p.store(o, linreg_rollout(lr, data, origins[o], p.max_horizon(), opt));
  return p;
}

inline PredictionSet predict_neighbor_average(const Dataset& data, const std::vector<int>& origins,
                                              const std::vector<int>& horizons) {
  PredictionSet p(origins, horizons, data.n_nodes());
  for (std::size_t o = 0; o < origins.size(); ++o) {
    const auto row = data.volumes.row(data.row(origins[o]));
    std::vector<double> x(row.begin(), row.end());
    std::vector<std::vector<double>> steps;
    for (int q = 1; q <= p.max_horizon(); ++q) {
      x = neighbor_average(data.graph, x);
      steps.push_back(x);
    }
    p.store(o, steps);
  }
  return p;
}

inline std::string format_report(const std::string& name, const MetricsReport& r) {
  std::string out;
  for (const auto& h : r.horizons) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s,%d,%.6f,%.4f,%zu,%zu\n", name.c_str(), h.horizon, h.rmse, h.mape,
                  h.n_cells, h.n_excluded);
    out += buf;
  }
  return out;
}

inline constexpr std::string_view kReportHeader = "method,horizon,rmse,mape_percent,n_cells,n_excluded";

}  // namespace fdti
