#pragma once

// Chronological splitting, Adam, and the training loop.

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "fdti/error.hpp"
#include "fdti/model.hpp"
#include "fdti/simulator.hpp"

namespace fdti {

struct Split {
  MinuteRange train, val, test;
};

/// Drops the warm-up minutes and cuts the rest 6:2:2 (floor, floor, remainder).
inline Split chronological_split(MinuteRange range, int warmup_min, double train_ratio = 0.6,
                                 double val_ratio = 0.2) {
  const int begin = range.begin + warmup_min;
  const int m = range.end - begin;
  require(m >= 3, "split: dataset too short after warm-up");
  const int n_train = static_cast<int>(std::floor(train_ratio * m));
  const int n_val = static_cast<int>(std::floor(val_ratio * m));
  const int n_test = m - n_train - n_val;
  require(n_train >= 1 && n_val >= 1 && n_test >= 1, "split: empty train/val/test split");
  return {{begin, begin + n_train}, {begin + n_train, begin + n_train + n_val},
          {begin + n_train + n_val, range.end}};
}

/// Origin minutes t whose input window [t-T+1, t] and target minute t+horizon all lie in r.
inline std::vector<int> sample_origins(MinuteRange r, std::size_t window, int horizon = 1) {
  std::vector<int> out;
  for (int t = r.begin + static_cast<int>(window) - 1; t + horizon <= r.end - 1; ++t) out.push_back(t);
  return out;
}

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimizerState {
  AdamConfig hp;
  std::vector<Matrix> m, v;
  long long step = 0;

  static OptimizerState for_params(const ModelParams& p, AdamConfig hp = {}) {
    OptimizerState s;
    s.hp = hp;
    for (const auto* t : p.tensors()) {
      s.m.emplace_back(t->rows(), t->cols());
      s.v.emplace_back(t->rows(), t->cols());
    }
    return s;
  }
};

/// Bias-corrected Adam update, in place.
inline void adam_step(ModelParams& params, const ModelParams& grads, OptimizerState& state) {
  auto ps = params.tensors();
  const auto gs = grads.tensors();
  require(ps.size() == gs.size() && ps.size() == state.m.size(), "adam: tensor count mismatch");
  ++state.step;
  const auto& hp = state.hp;
  const double c1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < ps.size(); ++k) {
    auto p = ps[k]->flat();
    const auto g = gs[k]->flat();
    auto m = state.m[k].flat();
    auto v = state.v[k].flat();
    require(g.size() == p.size() && m.size() == p.size(), "adam: tensor shape mismatch");
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = hp.beta1 * m[j] + (1.0 - hp.beta1) * g[j];
      v[j] = hp.beta2 * v[j] + (1.0 - hp.beta2) * g[j] * g[j];
      p[j] -= hp.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + hp.eps);
    }
  }
}

struct TrainConfig {
  AdamConfig adam;
  int max_epochs = 500;
  int patience = 20;
};

struct EpochRecord {
  int epoch;
  double train_loss;
  double val_rmse;
  double best_val_rmse;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  Split split;
};

struct WindowGradient {
  double loss;
  ModelParams grads;
};

/// Flow loss and its gradient for the window ending at minute t.
inline WindowGradient window_gradient(const Dataset& data, int t, const ModelParams& params,
                                      const ModelConfig& config) {
  const auto act = forward_at(data, t, params, config);
  const auto row = data.row(t);
  const auto ti = data.inflow.row(row);
  const auto to = data.outflow.row(row);
  const double l = loss(act.inflow, act.outflow, ti, to);
  const auto gi = loss_gradient(act.inflow, ti);
  const auto go = loss_gradient(act.outflow, to);
  return {l, backward(act, window_graph(data, t, config), params, config, gi, go)};
}

/// RMSE of the one-step volume transition over the given origins.
inline double one_step_rmse(const Dataset& data, const std::vector<int>& origins, const ModelParams& params,
                            const ModelConfig& config) {
  double sse = 0.0;
  std::size_t count = 0;
  for (int t : origins) {
    const auto act = forward_at(data, t, params, config);
    const auto next = transition_one_step(data.volumes.row(data.row(t)), act.inflow, act.outflow,
                                          config.clamp_nonneg);
    const auto truth = data.volumes.row(data.row(t + 1));
    for (std::size_t i = 0; i < next.size(); ++i) {
      const double e = next[i] - truth[i];
      sse += e * e;
    }
    count += next.size();
  }
  require(count > 0, "one_step_rmse: no samples");
  return std::sqrt(sse / static_cast<double>(count));
}

using EpochCallback = std::function<void(const EpochRecord&)>;

/// One Adam step per training window (full graph), chronological order. Keeps the
/// parameters with the best validation one-step RMSE; stops after `patience` epochs
/// without improvement.
inline TrainResult train(const Dataset& data, const ModelConfig& config, const TrainConfig& tc,
                         const EpochCallback& on_epoch = {}) {
  config.validate();
  require(tc.max_epochs >= 1, "train: max_epochs must be positive");
  TrainResult res;
  res.split = chronological_split(data.range, data.warmup_min);
  const auto train_origins = sample_origins(res.split.train, config.window);
  const auto val_origins = sample_origins(res.split.val, config.window);
  require(!train_origins.empty(), "train: training split shorter than window + 1");
  require(!val_origins.empty(), "train: validation split shorter than window + 1");

  auto params = init_params(config);
  auto opt = OptimizerState::for_params(params, tc.adam);
  res.params = params;
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;
  for (int epoch = 1; epoch <= tc.max_epochs; ++epoch) {
    double total = 0.0;
    for (int t : train_origins) {
      auto wg = window_gradient(data, t, params, config);
      if (!std::isfinite(wg.loss))
        throw DivergenceError("train: non-finite loss at epoch " + std::to_string(epoch) +
                              ", window ending at minute " + std::to_string(t));
      total += wg.loss;
      adam_step(params, wg.grads, opt);
    }
    const double val = one_step_rmse(data, val_origins, params, config);
    if (!std::isfinite(val))
      throw DivergenceError("train: non-finite validation RMSE at epoch " + std::to_string(epoch));
    if (val < best) {
      best = val;
      res.params = params;
      res.best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
    }
    res.history.push_back({epoch, total / static_cast<double>(train_origins.size()), val, best});
    if (on_epoch) on_epoch(res.history.back());
    if (since_best >= tc.patience) break;
  }
  return res;
}

}  // namespace fdti
