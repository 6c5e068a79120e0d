#pragma once

// Dynamic mobility convolution network with hand-written reverse-mode gradients,
// flow-conservative state transition and discounted multi-step rollout.
//
// Layer l at window frame f reads layer l-1 at frames f (self) and f-1 (upstream
// neighbours and self through the layered graph):
//
//   prop  = max_j  w(j -> i) * H[l-1][f-1][j]          (elementwise)
//   H[l][f][i] = tanh([H[l-1][f][i], prop] W_l + b_l)  (+ H[l-1][f][i] with residual)
//
// Only frames inside the backward cone of the last frame are evaluated: layer l
// covers frames T-1-(L-l) .. T-1.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fdti/error.hpp"
#include "fdti/ftstg.hpp"
#include "fdti/matrix.hpp"
#include "fdti/rng.hpp"
#include "fdti/roadnet.hpp"
#include "fdti/simulator.hpp"

namespace fdti {

struct ModelConfig {
  std::size_t hidden_dim = 256;
  std::size_t n_layers = 4;
  std::size_t window = 5;
  double discount = 0.9;
  bool clamp_nonneg = true;
  bool use_residual = true;
  std::uint64_t seed = 0;
  FtstgOptions graph;
  FeatureOptions features;

  void validate() const {
    require(hidden_dim >= 1, "model config: hidden_dim must be positive");
    require(n_layers >= 1, "model config: n_layers must be positive");
    require(window >= n_layers + 1, "model config: window must be at least n_layers + 1");
    require(discount > 0.0 && discount <= 1.0, "model config: discount must be in (0, 1]");
    require(features.volume_scale > 0.0, "model config: volume_scale must be positive");
  }
};

inline std::size_t parameter_count(std::size_t features, std::size_t d, std::size_t layers) {
  return (features + 1) * d + layers * (2 * d + 1) * d + 2 * (d + 1);
}

struct ModelParams {
  Matrix emb_w;                // F x d
  Matrix emb_b;                // 1 x d
  std::vector<Matrix> agg_w;   // per layer, 2d x d
  std::vector<Matrix> agg_b;   // per layer, 1 x d
  Matrix in_w, in_b;           // d x 1, 1 x 1
  Matrix out_w, out_b;         // d x 1, 1 x 1

  static ModelParams zeros(std::size_t d, std::size_t layers) {
    ModelParams p;
    p.emb_w = Matrix(kFeatureDim, d);
    p.emb_b = Matrix(1, d);
    p.agg_w.assign(layers, Matrix(2 * d, d));
    p.agg_b.assign(layers, Matrix(1, d));
    p.in_w = Matrix(d, 1);
    p.in_b = Matrix(1, 1);
    p.out_w = Matrix(d, 1);
    p.out_b = Matrix(1, 1);
    return p;
  }

  std::size_t hidden_dim() const { return emb_w.cols(); }
  std::size_t n_layers() const { return agg_w.size(); }

  /// Every tensor, in a fixed order shared by gradients, optimiser state and checkpoints.
  std::vector<Matrix*> tensors() {
    std::vector<Matrix*> t{&emb_w, &emb_b};
    for (std::size_t l = 0; l < agg_w.size(); ++l) {
      t.push_back(&agg_w[l]);
      t.push_back(&agg_b[l]);
    }
    for (Matrix* m : {&in_w, &in_b, &out_w, &out_b}) t.push_back(m);
    return t;
  }
  std::vector<const Matrix*> tensors() const {
    auto t = const_cast<ModelParams*>(this)->tensors();
    return {t.begin(), t.end()};
  }

  static std::vector<std::string> tensor_names(std::size_t layers) {
    std::vector<std::string> n{"emb_w", "emb_b"};
    for (std::size_t l = 0; l < layers; ++l) {
      n.push_back("agg_w." + std::to_string(l));
      n.push_back("agg_b." + std::to_string(l));
    }
    for (const char* s : {"in_w", "in_b", "out_w", "out_b"}) n.emplace_back(s);
    return n;
  }

  std::size_t count() const {
    std::size_t c = 0;
    for (const auto* m : tensors()) c += m->size();
    return c;
  }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Glorot-uniform weights from a seeded stream, zero biases.
inline ModelParams init_params(const ModelConfig& config) {
  config.validate();
  const auto d = config.hidden_dim;
  auto p = ModelParams::zeros(d, config.n_layers);
  SplitMix64 rng(config.seed);
  auto glorot = [&rng](Matrix& m) {
    const double a = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    for (double& v : m.flat()) v = rng.uniform(-a, a);
  };
  glorot(p.emb_w);
  for (auto& w : p.agg_w) glorot(w);
  glorot(p.in_w);
  glorot(p.out_w);
  return p;
}

/// tanh(features W_emb + b).
inline Matrix embed(const Matrix& features, const ModelParams& params) {
  require(features.cols() == params.emb_w.rows(), "embed: feature width mismatch");
  const auto d = params.hidden_dim();
  Matrix h(features.rows(), d);
  for (std::size_t i = 0; i < features.rows(); ++i) {
    auto out = h.row(i);
    std::copy(params.emb_b.flat().begin(), params.emb_b.flat().end(), out.begin());
    for (std::size_t k = 0; k < features.cols(); ++k) {
      const double x = features(i, k);
      if (x == 0.0) continue;
      const auto w = params.emb_w.row(k);
      for (std::size_t c = 0; c < d; ++c) out[c] += x * w[c];
    }
    for (double& v : out) v = std::tanh(v);
  }
  return h;
}

struct Message {
  std::span<const double> h;
  double weight;
};

/// Elementwise max over weighted messages; zero vector when there are none.
/// Ties keep the earliest message.
inline std::vector<double> propagate(std::span<const Message> messages, std::size_t dim) {
  std::vector<double> out(dim, 0.0);
  for (std::size_t m = 0; m < messages.size(); ++m) {
    require(messages[m].h.size() == dim, "propagate: message width mismatch");
    for (std::size_t k = 0; k < dim; ++k) {
      const double v = messages[m].weight * messages[m].h[k];
      if (m == 0 || v > out[k]) out[k] = v;
    }
  }
  return out;
}

/// tanh([h_self, h_prop] W + b), plus h_self when `residual`.
inline std::vector<double> aggregate(std::span<const double> h_self, std::span<const double> h_prop,
                                     const Matrix& w, const Matrix& b, bool residual) {
  const auto d = h_self.size();
  require(h_prop.size() == d && w.rows() == 2 * d && w.cols() == d && b.size() == d,
          "aggregate: shape mismatch");
  std::vector<double> out(b.flat().begin(), b.flat().end());
  for (std::size_t k = 0; k < 2 * d; ++k) {
    const double x = k < d ? h_self[k] : h_prop[k - d];
    if (x == 0.0) continue;
    const auto wr = w.row(k);
    for (std::size_t c = 0; c < d; ++c) out[c] += x * wr[c];
  }
  for (std::size_t c = 0; c < d; ++c) {
    out[c] = std::tanh(out[c]);
    if (residual) out[c] += h_self[c];
  }
  return out;
}

/// Intermediate values kept for the backward pass. Frames outside a layer's cone are
/// left empty.
struct Activations {
  std::vector<Matrix> features;           // [frame] N x F
  std::vector<std::vector<Matrix>> hidden;  // [layer 0..L][frame] N x d
  std::vector<std::vector<Matrix>> act;     // [layer 1..L][frame] tanh output, N x d
  std::vector<std::vector<Matrix>> prop;    // [layer 1..L][frame] propagated, N x d
  std::vector<std::vector<std::vector<std::uint32_t>>> argmax;  // [layer][frame] N*d source slot
  std::vector<double> inflow;   // predicted inflow at the last frame
  std::vector<double> outflow;  // predicted outflow at the last frame

  const Matrix& final_hidden() const { return hidden.back().back(); }
};

inline std::size_t cone_start(std::size_t window, std::size_t layers, std::size_t layer) {
  return window - 1 - (layers - layer);
}

/// Forward pass over one window. `frames[f]` holds the N x F features of window frame f;
/// the graph must have one layer per frame.
inline Activations forward(const Ftstg& graph, std::span<const Matrix> frames, const ModelParams& params,
                           const ModelConfig& config) {
  const auto T = frames.size();
  const auto L = params.n_layers();
  const auto d = params.hidden_dim();
  const auto n = graph.n_nodes();
  require(T >= L + 1, "forward: window shorter than n_layers + 1");
  require(static_cast<std::size_t>(graph.n_layers()) == T, "forward: graph/window length mismatch");
  for (const auto& f : frames) require_shape(f, n, kFeatureDim, "forward features");

  Activations a;
  a.features.assign(frames.begin(), frames.end());
  a.hidden.assign(L + 1, std::vector<Matrix>(T));
  a.act.assign(L + 1, std::vector<Matrix>(T));
  a.prop.assign(L + 1, std::vector<Matrix>(T));
  a.argmax.assign(L + 1, std::vector<std::vector<std::uint32_t>>(T));

  for (std::size_t f = cone_start(T, L, 0); f < T; ++f) a.hidden[0][f] = embed(frames[f], params);

  std::vector<double> pre(d);
  for (std::size_t l = 1; l <= L; ++l) {
    const auto& w = params.agg_w[l - 1];
    const auto& b = params.agg_b[l - 1];
    for (std::size_t f = cone_start(T, L, l); f < T; ++f) {
      const Matrix& below = a.hidden[l - 1][f];
      const Matrix& before = a.hidden[l - 1][f - 1];
      Matrix h(n, d), act(n, d), prop(n, d);
      std::vector<std::uint32_t> arg(n * d, 0);
      for (NodeId i = 0; i < n; ++i) {
        const auto src = graph.sources(static_cast<int>(f - 1), i);
        const auto wts = graph.weights(static_cast<int>(f - 1), i);
        auto p = prop.row(i);
        for (std::size_t s = 0; s < src.size(); ++s) {
          const auto hs = before.row(src[s]);
          for (std::size_t k = 0; k < d; ++k) {
            const double v = wts[s] * hs[k];
            if (s == 0 || v > p[k]) {
              p[k] = v;
              arg[i * d + k] = static_cast<std::uint32_t>(s);
            }
          }
        }
        const auto self = below.row(i);
        std::copy(b.flat().begin(), b.flat().end(), pre.begin());
        for (std::size_t k = 0; k < 2 * d; ++k) {
          const double x = k < d ? self[k] : p[k - d];
          if (x == 0.0) continue;
          const auto wr = w.row(k);
          for (std::size_t c = 0; c < d; ++c) pre[c] += x * wr[c];
        }
        auto ar = act.row(i);
        auto hr = h.row(i);
        for (std::size_t c = 0; c < d; ++c) {
          ar[c] = std::tanh(pre[c]);
          hr[c] = config.use_residual ? ar[c] + self[c] : ar[c];
        }
      }
      a.hidden[l][f] = std::move(h);
      a.act[l][f] = std::move(act);
      a.prop[l][f] = std::move(prop);
      a.argmax[l][f] = std::move(arg);
    }
  }

  const Matrix& top = a.hidden[L][T - 1];
  a.inflow.assign(n, params.in_b(0, 0));
  a.outflow.assign(n, params.out_b(0, 0));
  for (NodeId i = 0; i < n; ++i) {
    const auto h = top.row(i);
    for (std::size_t c = 0; c < d; ++c) {
      a.inflow[i] += h[c] * params.in_w(c, 0);
      a.outflow[i] += h[c] * params.out_w(c, 0);
    }
  }
  return a;
}

/// Adjoint of `forward` given dLoss/dInflow and dLoss/dOutflow at the last frame.
/// Max-pooling routes each component to the message that won the forward max.
inline ModelParams backward(const Activations& a, const Ftstg& graph, const ModelParams& params,
                            const ModelConfig& config, std::span<const double> d_inflow,
                            std::span<const double> d_outflow) {
  const auto L = params.n_layers();
  const auto d = params.hidden_dim();
  const auto n = graph.n_nodes();
  const auto T = a.features.size();
  require(d_inflow.size() == n && d_outflow.size() == n, "backward: gradient size mismatch");

  auto g = ModelParams::zeros(d, L);

  std::vector<std::vector<Matrix>> grad(L + 1, std::vector<Matrix>(T));
  for (std::size_t l = 0; l <= L; ++l)
    for (std::size_t f = cone_start(T, L, l); f < T; ++f) grad[l][f] = Matrix(n, d);

  const Matrix& top = a.hidden[L][T - 1];
  for (NodeId i = 0; i < n; ++i) {
    const auto h = top.row(i);
    auto gh = grad[L][T - 1].row(i);
    for (std::size_t c = 0; c < d; ++c) {
      g.in_w(c, 0) += h[c] * d_inflow[i];
      g.out_w(c, 0) += h[c] * d_outflow[i];
      gh[c] = d_inflow[i] * params.in_w(c, 0) + d_outflow[i] * params.out_w(c, 0);
    }
    g.in_b(0, 0) += d_inflow[i];
    g.out_b(0, 0) += d_outflow[i];
  }

  std::vector<double> g_pre(d), g_cat(2 * d);
  for (std::size_t l = L; l >= 1; --l) {
    const auto& w = params.agg_w[l - 1];
    auto& gw = g.agg_w[l - 1];
    auto& gb = g.agg_b[l - 1];
    for (std::size_t f = T; f-- > cone_start(T, L, l);) {
      const Matrix& below = a.hidden[l - 1][f];
      const Matrix& act = a.act[l][f];
      const Matrix& prop = a.prop[l][f];
      const auto& arg = a.argmax[l][f];
      Matrix& g_self = grad[l - 1][f];
      Matrix& g_prev = grad[l - 1][f - 1];
      for (NodeId i = 0; i < n; ++i) {
        const auto g_out = grad[l][f].row(i);
        const auto ar = act.row(i);
        const auto self = below.row(i);
        const auto p = prop.row(i);
        for (std::size_t c = 0; c < d; ++c) {
          g_pre[c] = g_out[c] * (1.0 - ar[c] * ar[c]);
          gb(0, c) += g_pre[c];
        }
        for (std::size_t k = 0; k < 2 * d; ++k) {
          const double x = k < d ? self[k] : p[k - d];
          const auto wr = w.row(k);
          auto gwr = gw.row(k);
          double acc = 0.0;
          for (std::size_t c = 0; c < d; ++c) {
            gwr[c] += x * g_pre[c];
            acc += wr[c] * g_pre[c];
          }
          g_cat[k] = acc;
        }
        auto gs = g_self.row(i);
        for (std::size_t k = 0; k < d; ++k)
          gs[k] += g_cat[k] + (config.use_residual ? g_out[k] : 0.0);
        const auto src = graph.sources(static_cast<int>(f - 1), i);
        const auto wts = graph.weights(static_cast<int>(f - 1), i);
        for (std::size_t k = 0; k < d; ++k) {
          const auto s = arg[i * d + k];
          g_prev(src[s], k) += wts[s] * g_cat[d + k];
        }
      }
    }
  }

  for (std::size_t f = cone_start(T, L, 0); f < T; ++f) {
    const Matrix& h0 = a.hidden[0][f];
    const Matrix& x = a.features[f];
    for (NodeId i = 0; i < n; ++i) {
      const auto gh = grad[0][f].row(i);
      const auto hr = h0.row(i);
      for (std::size_t c = 0; c < d; ++c) {
        g_pre[c] = gh[c] * (1.0 - hr[c] * hr[c]);
        g.emb_b(0, c) += g_pre[c];
      }
      for (std::size_t k = 0; k < x.cols(); ++k) {
        const double xv = x(i, k);
        if (xv == 0.0) continue;
        auto gwr = g.emb_w.row(k);
        for (std::size_t c = 0; c < d; ++c) gwr[c] += xv * g_pre[c];
      }
    }
  }
  return g;
}

/// Mean squared inflow error plus mean squared outflow error.
inline double loss(std::span<const double> pred_in, std::span<const double> pred_out,
                   std::span<const double> true_in, std::span<const double> true_out) {
  const auto n = pred_in.size();
  require(n > 0, "loss: empty batch");
  require(pred_out.size() == n && true_in.size() == n && true_out.size() == n, "loss: shape mismatch");
  double si = 0.0, so = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double ei = true_in[k] - pred_in[k];
    const double eo = true_out[k] - pred_out[k];
    si += ei * ei;
    so += eo * eo;
  }
  return si / static_cast<double>(n) + so / static_cast<double>(n);
}

/// dLoss/dPrediction for `loss`.
inline std::vector<double> loss_gradient(std::span<const double> pred, std::span<const double> truth) {
  std::vector<double> g(pred.size());
  const double scale = 2.0 / static_cast<double>(pred.size());
  for (std::size_t k = 0; k < pred.size(); ++k) g[k] = scale * (pred[k] - truth[k]);
  return g;
}

/// x + (inflow - outflow) per node, floored at zero when `clamp_nonneg`.
inline std::vector<double> transition_one_step(std::span<const double> volume, std::span<const double> inflow,
                                               std::span<const double> outflow, bool clamp_nonneg) {
  require(inflow.size() == volume.size() && outflow.size() == volume.size(),
          "transition: shape mismatch");
  std::vector<double> next(volume.size());
  for (std::size_t k = 0; k < volume.size(); ++k) {
    const double v = volume[k] + (inflow[k] - outflow[k]);
    next[k] = clamp_nonneg ? std::max(0.0, v) : v;
  }
  return next;
}

/// x + sum_q discount^q * deltas[q], evaluated term by term with explicit powers.
inline std::vector<double> discounted_sum_closed_form(std::span<const double> x,
                                                      const std::vector<std::vector<double>>& deltas,
                                                      double discount) {
  std::vector<double> total(x.size(), 0.0);
  for (std::size_t q = 0; q < deltas.size(); ++q) {
    const double factor = std::pow(discount, static_cast<double>(q));
    for (std::size_t k = 0; k < x.size(); ++k) total[k] += factor * deltas[q][k];
  }
  for (std::size_t k = 0; k < x.size(); ++k) total[k] += x[k];
  return total;
}

/// Same quantity accumulated as running partial sums; returns every partial state.
inline std::vector<std::vector<double>> discounted_partial_sums(
    std::span<const double> x, const std::vector<std::vector<double>>& deltas, double discount) {
  std::vector<std::vector<double>> out;
  std::vector<double> acc(x.size(), 0.0);
  double factor = 1.0;
  for (const auto& delta : deltas) {
    for (std::size_t k = 0; k < x.size(); ++k) acc[k] += factor * delta[k];
    factor *= discount;
    auto& state = out.emplace_back(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) state[k] = x[k] + acc[k];
  }
  return out;
}

/// Features of the `window` frames ending at minute `t_end`, taking volumes from `volume_of`.
template <class VolumeOf>
std::vector<Matrix> window_features(const MovementGraph& g, const SignalPlan& signal, int t_end,
                                    std::size_t window, const FeatureOptions& opt, VolumeOf&& volume_of) {
  std::vector<Matrix> frames;
  frames.reserve(window);
  for (int t = t_end - static_cast<int>(window) + 1; t <= t_end; ++t)
    frames.push_back(frame_features(g, signal, t, volume_of(t), opt));
  return frames;
}

inline Ftstg window_graph(const Dataset& data, int t_end, const ModelConfig& config) {
  return build_ftstg(data.graph, data.signal, t_end - static_cast<int>(config.window) + 1,
                     static_cast<int>(config.window), config.graph);
}

/// One-step forward on ground truth for the window ending at minute t.
inline Activations forward_at(const Dataset& data, int t, const ModelParams& params,
                              const ModelConfig& config) {
  const auto frames = window_features(data.graph, data.signal, t, config.window, config.features,
                                      [&](int m) { return data.volumes.row(data.row(m)); });
  return forward(window_graph(data, t, config), frames, params, config);
}

struct Rollout {
  std::vector<std::vector<double>> volumes;  // [q] predicted X_{t+1+q}
  std::vector<std::vector<double>> deltas;   // [q] inflow - outflow at minute t+q
};

/// Autoregressive Q-step inference from origin minute t. Volumes up to t come from the
/// data; later minutes use the model's own (clamped) partial sums. Signals are taken as
/// known in advance for every minute up to t+Q-1.
inline Rollout rollout(const Dataset& data, int t, int horizon, const ModelParams& params,
                       const ModelConfig& config) {
  require(horizon >= 1, "rollout: horizon must be positive");
  const int first = t - static_cast<int>(config.window) + 1;
  require(data.range.contains(first) && data.range.contains(t), "rollout: history window not in data");
  require(data.signal.covers({first, t + horizon}), "rollout: missing future signal");
  const auto n = data.n_nodes();

  std::vector<std::vector<double>> predicted;  // minute t+1+q
  auto volume_of = [&](int m) -> std::span<const double> {
    if (m <= t) return data.volumes.row(data.row(m));
    return predicted[static_cast<std::size_t>(m - t - 1)];
  };
  const auto x0 = data.volumes.row(data.row(t));

  Rollout out;
  std::vector<double> acc(n, 0.0);
  double factor = 1.0;
  for (int q = 0; q < horizon; ++q) {
    const int end = t + q;
    const auto frames = window_features(data.graph, data.signal, end, config.window, config.features,
                                        volume_of);
    const auto act = forward(window_graph(data, end, config), frames, params, config);
    auto& delta = out.deltas.emplace_back(n);
    for (NodeId i = 0; i < n; ++i) {
      delta[i] = act.inflow[i] - act.outflow[i];
      acc[i] += factor * delta[i];
    }
    factor *= config.discount;
    std::vector<double> next(n);
    for (NodeId i = 0; i < n; ++i) {
      const double v = x0[i] + acc[i];
      next[i] = config.clamp_nonneg ? std::max(0.0, v) : v;
    }
    predicted.push_back(next);
    out.volumes.push_back(std::move(next));
  }
  return out;
}

}  // namespace fdti
