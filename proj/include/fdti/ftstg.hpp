#pragma once

// Layered spatio-temporal graph with signal-derived edge weights, and node features.

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fdti/error.hpp"
#include "fdti/matrix.hpp"
#include "fdti/roadnet.hpp"
#include "fdti/text.hpp"

namespace fdti {

inline constexpr std::size_t kFeatureDim = 6;

using NodeFeature = std::array<double, kFeatureDim>;

/// Mobility weight of an edge spanning `dt` layers whose source had `green_s` seconds of
/// green. With `normalize` the green time is first expressed as a fraction of the minute.
inline double edge_weight(double green_s, int dt, bool normalize = true) {
  require(dt >= 1, "edge_weight: layer gap must be >= 1");
  const double p = normalize ? green_s / 60.0 : green_s;
  return p / static_cast<double>(dt);
}

enum class SelfEdgeWeight { SignalGated, Constant };

struct FtstgOptions {
  bool normalize_green = true;
  /// When false every edge weight is 1 (static spatio-temporal graph).
  bool dynamic_edges = true;
  SelfEdgeWeight self_edges = SelfEdgeWeight::SignalGated;
};

struct FtstgEdge {
  int layer;  // source layer; target is layer + 1
  NodeId src;
  NodeId dst;
  double weight;
};

/// T layers of N vertices. Edges only join layer t to layer t+1: (j -> i) for every
/// static edge (j, i) plus the self pair (i -> i). Per transition the edges are held in
/// CSR form keyed by target, sources ascending.
class Ftstg {
public:
  std::size_t n_nodes() const { return n_; }
  int n_layers() const { return layers_; }
  int first_minute() const { return t0_; }
  std::size_t n_vertices() const { return n_ * static_cast<std::size_t>(layers_); }
  std::size_t n_edges() const {
    std::size_t total = 0;
    for (const auto& tr : transitions_) total += tr.src.size();
    return total;
  }

  /// Sources of vertex `dst` in layer `layer + 1`, coming from layer `layer`.
  std::span<const NodeId> sources(int layer, NodeId dst) const {
    const auto& tr = transitions_.at(static_cast<std::size_t>(layer));
    return {tr.src.data() + tr.offset[dst], tr.src.data() + tr.offset[dst + 1]};
  }
  std::span<const double> weights(int layer, NodeId dst) const {
    const auto& tr = transitions_.at(static_cast<std::size_t>(layer));
    return {tr.weight.data() + tr.offset[dst], tr.weight.data() + tr.offset[dst + 1]};
  }

  /// All edges ordered by (layer, dst, src).
  std::vector<FtstgEdge> edge_list() const {
    std::vector<FtstgEdge> out;
    out.reserve(n_edges());
    for (int t = 0; t + 1 < layers_; ++t)
      for (NodeId i = 0; i < n_; ++i) {
        const auto s = sources(t, i);
        const auto w = weights(t, i);
        for (std::size_t k = 0; k < s.size(); ++k) out.push_back({t, s[k], i, w[k]});
      }
    return out;
  }

  /// Scales or replaces weights; used by ablations and tests.
  template <class F>
  void transform_weights(F&& f) {
    for (auto& tr : transitions_)
      for (auto& w : tr.weight) w = f(w);
  }

private:
  struct Transition {
    std::vector<std::size_t> offset;
    std::vector<NodeId> src;
    std::vector<double> weight;
  };

  friend Ftstg build_ftstg(const MovementGraph&, const SignalPlan&, int, int, const FtstgOptions&);

  std::size_t n_ = 0;
  int layers_ = 0;
  int t0_ = 0;
  std::vector<Transition> transitions_;
};

inline Ftstg build_ftstg(const MovementGraph& g, const SignalPlan& signal, int t0, int layers,
                         const FtstgOptions& opt = {}) {
  require(layers >= 1, "ftstg: window length must be positive");
  require(signal.n_nodes() == g.size(), "ftstg: signal plan size differs from graph");
  require(signal.covers({t0, t0 + layers}), "ftstg: signal plan does not cover the window");
  const auto n = g.size();
  Ftstg f;
  f.n_ = n;
  f.layers_ = layers;
  f.t0_ = t0;
  f.transitions_.resize(static_cast<std::size_t>(layers - 1));
  for (int t = 0; t + 1 < layers; ++t) {
    auto& tr = f.transitions_[static_cast<std::size_t>(t)];
    tr.offset.assign(n + 1, 0);
    tr.src.reserve(n + g.edges().size());
    tr.weight.reserve(n + g.edges().size());
    for (NodeId i = 0; i < n; ++i) {
      auto emit = [&](NodeId j) {
        double w = 1.0;
        if (opt.dynamic_edges) {
          w = (j == i && opt.self_edges == SelfEdgeWeight::Constant)
                  ? 1.0
                  : edge_weight(signal.green_s(t0 + t, j), 1, opt.normalize_green);
        }
        tr.src.push_back(j);
        tr.weight.push_back(w);
      };
      bool self_done = false;
      for (NodeId j : g.upstream(i)) {
        if (!self_done && i < j) {
          emit(i);
          self_done = true;
        }
        emit(j);
      }
      if (!self_done) emit(i);
      tr.offset[i + 1] = tr.src.size();
    }
  }
  return f;
}

inline std::string dump_ftstg(const Ftstg& f) {
  std::string out = "t,src,dst,weight\n";
  for (const auto& e : f.edge_list())
    out += std::to_string(f.first_minute() + e.layer) + ',' + std::to_string(e.src) + ',' +
           std::to_string(e.dst) + ',' + format_real(e.weight) + '\n';
  return out;
}

/// [volume, green fraction, length / max length, one-hot direction].
inline NodeFeature node_features(double volume, double green_s, double length_m, double max_length_m,
                                 Direction d) {
  const auto h = one_hot(d);
  return {volume, green_s / 60.0, length_m / max_length_m, h[0], h[1], h[2]};
}

struct FeatureOptions {
  /// When false the green, length and direction entries are zeroed.
  bool roadnet_features = true;
  /// Divides the volume entry; 1 keeps raw vehicle counts.
  double volume_scale = 1.0;
};

/// N x 6 feature matrix for minute `t` given that minute's volumes.
inline Matrix frame_features(const MovementGraph& g, const SignalPlan& signal, int t,
                             std::span<const double> volumes, const FeatureOptions& opt = {}) {
  require(volumes.size() == g.size(), "frame_features: volume vector size mismatch");
  const double lmax = g.max_length();
  Matrix m(g.size(), kFeatureDim);
  for (NodeId i = 0; i < g.size(); ++i) {
    const auto& mv = g.movement(i);
    auto f = node_features(volumes[i] / opt.volume_scale, signal.green_s(t, i), mv.length_m, lmax,
                           mv.direction);
    if (!opt.roadnet_features) std::fill(f.begin() + 1, f.end(), 0.0);
    std::copy(f.begin(), f.end(), m.row(i).begin());
  }
  return m;
}

}  // namespace fdti
