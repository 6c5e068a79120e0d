#pragma once

// Forecast metrics, the STMAD smoothness metric and simple reference predictors.

#include <cmath>
#include <cstddef>
#include <map>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "fdti/error.hpp"
#include "fdti/ftstg.hpp"
#include "fdti/matrix.hpp"
#include "fdti/roadnet.hpp"
#include "fdti/simulator.hpp"

namespace fdti {

inline double rmse(std::span<const double> y, std::span<const double> y_hat) {
  require(!y.empty(), "rmse: empty input");
  require(y.size() == y_hat.size(), "rmse: length mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) s += (y[k] - y_hat[k]) * (y[k] - y_hat[k]);
  return std::sqrt(s / static_cast<double>(y.size()));
}

struct MapeResult {
  double percent;
  std::size_t n_counted;
  std::size_t n_excluded;
};

/// Mean absolute percentage error over cells with non-zero target.
inline MapeResult mape_detail(std::span<const double> y, std::span<const double> y_hat) {
  require(y.size() == y_hat.size(), "mape: length mismatch");
  double s = 0.0;
  std::size_t counted = 0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    if (y[k] == 0.0) continue;
    s += std::abs(y[k] - y_hat[k]) / std::abs(y[k]);
    ++counted;
  }
  require(counted > 0, "mape: all targets are zero");
  return {100.0 * s / static_cast<double>(counted), counted, y.size() - counted};
}

inline double mape(std::span<const double> y, std::span<const double> y_hat) {
  return mape_detail(y, y_hat).percent;
}

struct HorizonMetrics {
  int horizon;
  double rmse;
  double mape;
  std::size_t n_cells;
  std::size_t n_excluded;
};

struct MetricsReport {
  std::vector<HorizonMetrics> horizons;
};

/// predictions[h] and truth[h] hold the flattened cells of horizon horizons[h].
inline MetricsReport evaluate(const std::vector<std::vector<double>>& predictions,
                              const std::vector<std::vector<double>>& truth, const std::vector<int>& horizons) {
  require(predictions.size() == horizons.size() && truth.size() == horizons.size(),
          "evaluate: horizon count mismatch");
  MetricsReport r;
  for (std::size_t h = 0; h < horizons.size(); ++h) {
    require(predictions[h].size() == truth[h].size(), "evaluate: misaligned cells");
    const auto m = mape_detail(truth[h], predictions[h]);
    r.horizons.push_back({horizons[h], rmse(truth[h], predictions[h]), m.percent, truth[h].size(), m.n_excluded});
  }
  return r;
}

/// Nodes at shortest-path distance exactly k from i (undirected unless `directed`, in
/// which case distances follow edge direction downstream).
inline std::vector<NodeId> khop_neighbors(const MovementGraph& g, NodeId i, int k, bool directed = false) {
  require(k >= 1, "khop: k must be >= 1");
  require(i < g.size(), "khop: invalid movement id " + std::to_string(i));
  std::vector<int> dist(g.size(), -1);
  std::queue<NodeId> frontier;
  dist[i] = 0;
  frontier.push(i);
  std::vector<NodeId> out;
  while (!frontier.empty()) {
    const NodeId u = frontier.front();
    frontier.pop();
    if (dist[u] == k) {
      out.push_back(u);
      continue;
    }
    auto visit = [&](NodeId v) {
      if (dist[v] < 0) {
        dist[v] = dist[u] + 1;
        frontier.push(v);
      }
    };
    for (NodeId v : g.downstream(u)) visit(v);
    if (!directed)
      for (NodeId v : g.upstream(u)) visit(v);
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<std::vector<NodeId>> khop_table(const MovementGraph& g, int k, bool directed = false) {
  std::vector<std::vector<NodeId>> t(g.size());
  for (NodeId i = 0; i < g.size(); ++i) t[i] = khop_neighbors(g, i, k, directed);
  return t;
}

struct MadResult {
  double value;
  std::size_t counted_nodes;
  std::size_t skipped_pairs;  // pairs with a zero-norm vector
};

/// Mean over nodes of the mean cosine distance to their k-hop neighbours. Rows of `h`
/// are node feature vectors.
inline MadResult mad_k(const Matrix& h, const std::vector<std::vector<NodeId>>& neighbors) {
  require(h.cols() >= 1, "mad: feature width must be >= 1");
  require(neighbors.size() == h.rows(), "mad: neighbour table size mismatch");
  std::vector<double> norm(h.rows());
  for (std::size_t i = 0; i < h.rows(); ++i) {
    double s = 0.0;
    for (double v : h.row(i)) s += v * v;
    norm[i] = std::sqrt(s);
  }
  double total = 0.0;
  MadResult r{0.0, 0, 0};
  for (std::size_t i = 0; i < h.rows(); ++i) {
    double node_sum = 0.0;
    std::size_t pairs = 0;
    for (NodeId j : neighbors[i]) {
      if (norm[i] == 0.0 || norm[j] == 0.0) {
        ++r.skipped_pairs;
        continue;
      }
      double dot = 0.0;
      const auto a = h.row(i);
      const auto b = h.row(j);
      for (std::size_t c = 0; c < h.cols(); ++c) dot += a[c] * b[c];
      node_sum += 1.0 - dot / (norm[i] * norm[j]);
      ++pairs;
    }
    if (pairs == 0) continue;
    total += node_sum / static_cast<double>(pairs);
    ++r.counted_nodes;
  }
  require(r.counted_nodes > 0, "mad: no node has a valid neighbour pair");
  r.value = total / static_cast<double>(r.counted_nodes);
  return r;
}

inline MadResult mad_k(const Matrix& h, const MovementGraph& g, int k, bool directed = false) {
  return mad_k(h, khop_table(g, k, directed));
}

struct SmoothnessReport {
  int k;
  std::size_t window;
  double stmad;
  std::vector<double> mad;  // one per subgraph
  std::size_t skipped_pairs;
};

/// `series` is minutes x N. Cuts it into floor(T/P) disjoint windows of P minutes and
/// averages the k-hop MAD of each window's N x P node signals.
inline SmoothnessReport stmad(const Matrix& series, const MovementGraph& g, int k, std::size_t window,
                              bool directed = false) {
  require(window >= 1, "stmad: window must be >= 1");
  require(series.rows() >= window, "stmad: series shorter than window");
  require(series.cols() == g.size(), "stmad: series width differs from graph size");
  const auto table = khop_table(g, k, directed);
  SmoothnessReport r{k, window, 0.0, {}, 0};
  const auto n_windows = series.rows() / window;
  double sum = 0.0;
  Matrix h(g.size(), window);
  for (std::size_t m = 0; m < n_windows; ++m) {
    for (std::size_t i = 0; i < g.size(); ++i)
      for (std::size_t p = 0; p < window; ++p) h(i, p) = series(m * window + p, i);
    const auto res = mad_k(h, table);
    r.mad.push_back(res.value);
    r.skipped_pairs += res.skipped_pairs;
    sum += res.value;
  }
  r.stmad = sum / static_cast<double>(n_windows);
  return r;
}

/// Per-node mean of the training rows of `series` (minutes x N).
inline std::vector<double> baseline_ha(const Matrix& train_series) {
  require(train_series.rows() > 0, "ha: empty training series");
  std::vector<double> mean(train_series.cols(), 0.0);
  for (std::size_t t = 0; t < train_series.rows(); ++t)
    for (std::size_t i = 0; i < train_series.cols(); ++i) mean[i] += train_series(t, i);
  for (double& v : mean) v /= static_cast<double>(train_series.rows());
  return mean;
}

inline std::vector<double> baseline_persistence(std::span<const double> observed, int /*horizon*/) {
  return {observed.begin(), observed.end()};
}

/// Ordinary least squares with intercept via the normal equations. Falls back to a
/// 1e-8 ridge when the Gram matrix is singular.
class LinearRegression {
public:
  LinearRegression() = default;

  /// Rows of `x` are cells; `y` the targets.
  void fit(const Matrix& x, std::span<const double> y) {
    require(x.rows() == y.size() && x.rows() > 0, "linreg: design/target size mismatch");
    const auto p = x.cols() + 1;
    std::vector<double> gram(p * p, 0.0), rhs(p, 0.0), row(p);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      row[0] = 1.0;
      for (std::size_t c = 0; c < x.cols(); ++c) row[c + 1] = x(r, c);
      for (std::size_t a = 0; a < p; ++a) {
        rhs[a] += row[a] * y[r];
        for (std::size_t b = 0; b < p; ++b) gram[a * p + b] += row[a] * row[b];
      }
    }
    ridge_ = false;
    if (!solve_spd(gram, rhs, p, 0.0, coef_)) {
      ridge_ = true;
      require(solve_spd(gram, rhs, p, 1e-8, coef_), "linreg: ridge solve failed");
    }
  }

  double predict(std::span<const double> features) const {
    require(features.size() + 1 == coef_.size(), "linreg: feature width mismatch");
    double v = coef_[0];
    for (std::size_t c = 0; c < features.size(); ++c) v += coef_[c + 1] * features[c];
    return v;
  }

  double intercept() const { return coef_.at(0); }
  /// Coefficient of feature c.
  double slope(std::size_t c) const { return coef_.at(c + 1); }
  bool used_ridge() const { return ridge_; }

private:
  // Cholesky with a relative pivot threshold; returns false when (nearly) singular.
  static bool solve_spd(std::vector<double> a, std::vector<double> b, std::size_t p, double ridge,
                        std::vector<double>& out) {
    double scale = 0.0;
    for (std::size_t i = 0; i < p; ++i) scale = std::max(scale, a[i * p + i]);
    if (scale == 0.0) scale = 1.0;
    for (std::size_t i = 0; i < p; ++i) a[i * p + i] += ridge * scale;
    for (std::size_t j = 0; j < p; ++j) {
      double diag = a[j * p + j];
      for (std::size_t k = 0; k < j; ++k) diag -= a[j * p + k] * a[j * p + k];
      if (!(diag > 1e-12 * scale * (ridge > 0.0 ? ridge : 1.0))) return false;
      const double l = std::sqrt(diag);
      a[j * p + j] = l;
      for (std::size_t i = j + 1; i < p; ++i) {
        double s = a[i * p + j];
        for (std::size_t k = 0; k < j; ++k) s -= a[i * p + k] * a[j * p + k];
        a[i * p + j] = s / l;
      }
    }
    for (std::size_t i = 0; i < p; ++i) {
      double s = b[i];
      for (std::size_t k = 0; k < i; ++k) s -= a[i * p + k] * b[k];
      b[i] = s / a[i * p + i];
    }
    for (std::size_t i = p; i-- > 0;) {
      double s = b[i];
      for (std::size_t k = i + 1; k < p; ++k) s -= a[k * p + i] * b[k];
      b[i] = s / a[i * p + i];
    }
    out = std::move(b);
    return true;
  }

  std::vector<double> coef_;
  bool ridge_ = false;
};

/// Pooled (node, minute) regression of X_{t+1} on the node features of minute t, fitted
/// over origins t with t and t+1 inside `train`.
inline LinearRegression fit_linreg_baseline(const Dataset& data, MinuteRange train, const FeatureOptions& opt = {}) {
  const auto n = data.n_nodes();
  require(train.size() >= 2, "linreg: training range needs at least two minutes");
  const auto cells = static_cast<std::size_t>(train.size() - 1) * n;
  Matrix x(cells, kFeatureDim);
  std::vector<double> y(cells);
  std::size_t r = 0;
  for (int t = train.begin; t + 1 < train.end; ++t) {
    const auto f = frame_features(data.graph, data.signal, t, data.volumes.row(data.row(t)), opt);
    for (NodeId i = 0; i < n; ++i, ++r) {
      std::copy(f.row(i).begin(), f.row(i).end(), x.row(r).begin());
      y[r] = data.volume(t + 1, i);
    }
  }
  LinearRegression lr;
  lr.fit(x, y);
  return lr;
}

/// Autoregressive multi-step linear-regression forecast from origin t; row q is X_{t+1+q}.
inline std::vector<std::vector<double>> linreg_rollout(const LinearRegression& lr, const Dataset& data, int t,
                                                       int horizon, const FeatureOptions& opt = {}) {
  std::vector<std::vector<double>> out;
  const auto row = data.volumes.row(data.row(t));
  std::vector<double> x(row.begin(), row.end());
  for (int q = 0; q < horizon; ++q) {
    const auto f = frame_features(data.graph, data.signal, t + q, x, opt);
    std::vector<double> next(x.size());
    for (NodeId i = 0; i < x.size(); ++i) next[i] = lr.predict(f.row(i));
    out.push_back(next);
    x = std::move(next);
  }
  return out;
}

/// Mean over each node and its 1-hop (undirected) neighbours; a deliberately smoothing
/// reference predictor.
inline std::vector<double> neighbor_average(const MovementGraph& g, std::span<const double> x) {
  std::vector<double> out(g.size());
  for (NodeId i = 0; i < g.size(); ++i) {
    double s = x[i];
    std::size_t c = 1;
    for (NodeId j : g.upstream(i)) s += x[j], ++c;
    for (NodeId j : g.downstream(i)) s += x[j], ++c;
    out[i] = s / static_cast<double>(c);
  }
  return out;
}

}  // namespace fdti
