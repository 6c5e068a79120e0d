#pragma once

// Mesoscopic signal-gated queue simulator producing per-minute volumes and flows.
//
// Every vehicle quantity lives on the dyadic grid k * 2^-20. Sums and differences of
// such values stay exact in double precision while totals remain below 2^32, so the
// conservation identities below hold bit for bit rather than approximately.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fdti/error.hpp"
#include "fdti/matrix.hpp"
#include "fdti/rng.hpp"
#include "fdti/roadnet.hpp"
#include "fdti/text.hpp"

namespace fdti {

inline constexpr double kVehicleQuantum = 0x1.0p-20;

inline double quantize(double v) { return std::round(v / kVehicleQuantum) * kVehicleQuantum; }

struct SimConfig {
  int rows = 2;
  int cols = 2;
  double saturation_vps = 0.5;
  double demand_vpm = 6.0;
  /// Indexed by Direction.
  std::array<double, 3> turn_ratios{0.2, 0.6, 0.2};
  int cycle_s = 60;
  double split = 0.5;
  int duration_min = 60;
  int warmup_min = 10;
  std::uint64_t seed = 1;
  double min_length_m = 100.0;
  double max_length_m = 400.0;
  bool right_always_green = false;

  void validate() const {
    require(rows >= 1 && cols >= 1, "sim config: rows and cols must be positive");
    require(saturation_vps > 0.0, "sim config: saturation_vps must be positive");
    require(demand_vpm >= 0.0, "sim config: demand_vpm must be non-negative");
    double sum = 0.0;
    for (double r : turn_ratios) {
      require(r >= 0.0, "sim config: negative turn ratio");
      sum += r;
    }
    require(std::abs(sum - 1.0) <= 1e-9, "sim config: turn ratios must sum to 1");
    require(cycle_s >= 1, "sim config: cycle_s must be positive");
    require(split > 0.0 && split <= 1.0, "sim config: split must be in (0, 1]");
    require(duration_min >= 1, "sim config: duration_min must be positive");
    require(warmup_min >= 0 && warmup_min < duration_min,
            "sim config: warmup_min must be in [0, duration_min)");
    require(min_length_m > 0.0 && max_length_m >= min_length_m, "sim config: bad length range");
  }
};

/// Per-second green schedule: movement i is green when
/// (clock - start_i) mod cycle < green_len_i.
struct SignalTiming {
  int cycle_s = 60;
  std::vector<int> start_s;
  std::vector<int> green_len_s;

  bool green(long long clock_s, NodeId i) const {
    const int len = green_len_s[i];
    if (len <= 0) return false;
    if (len >= cycle_s) return true;
    long long phase = (clock_s - start_s[i]) % cycle_s;
    if (phase < 0) phase += cycle_s;
    return phase < len;
  }

  SignalPlan to_plan(MinuteRange range) const {
    SignalPlan plan(range, start_s.size());
    for (int t = range.begin; t < range.end; ++t) {
      for (NodeId i = 0; i < start_s.size(); ++i) {
        int count = 0;
        for (int s = 0; s < 60; ++s) count += green(60LL * t + s, i) ? 1 : 0;
        plan.set(t, i, count);
      }
    }
    return plan;
  }
};

struct GridNetwork {
  MovementGraph graph;
  SignalPlan signal;
  SignalTiming timing;
};

namespace grid {

// Approach sides, clockwise. Vehicles on approach `side` arrive from that side.
enum Side : int { North = 0, East = 1, South = 2, West = 3 };

inline NodeId movement_id(int intersection, int side, Direction d) {
  return static_cast<NodeId>((intersection * 4 + side) * 3 + static_cast<int>(d));
}

/// Side through which a movement leaves the intersection (right-hand traffic).
inline int exit_side(int side, Direction d) {
  switch (d) {
    case Direction::Left: return (side + 1) % 4;
    case Direction::Straight: return (side + 2) % 4;
    case Direction::Right: return (side + 3) % 4;
  }
  return side;
}

}  // namespace grid

/// rows x cols grid of four-way intersections, three movements per approach. Phase A
/// serves the north/south approaches, phase B east/west; neighbouring intersections
/// alternate their phase offsets.
inline GridNetwork build_grid_network(const SimConfig& config) {
  config.validate();
  using namespace grid;
  const int n_int = config.rows * config.cols;
  const auto n = static_cast<std::size_t>(n_int) * 12;

  const CounterStream length_stream(config.seed, 0x6c656e67746873ULL);
  std::vector<TrafficMovement> movements(n);
  std::vector<Edge> edges;
  for (int r = 0; r < config.rows; ++r) {
    for (int c = 0; c < config.cols; ++c) {
      const int ix = r * config.cols + c;
      for (int side = 0; side < 4; ++side) {
        const double u = length_stream.uniform(static_cast<std::uint64_t>(ix * 4 + side), 0);
        const double len =
            std::round((config.min_length_m + (config.max_length_m - config.min_length_m) * u) * 10.0) / 10.0;
        for (Direction d : kDirections) {
          const NodeId id = movement_id(ix, side, d);
          movements[id] = TrafficMovement{id, d, len};
          const int out = exit_side(side, d);
          const int nr = r + (out == South ? 1 : out == North ? -1 : 0);
          const int nc = c + (out == East ? 1 : out == West ? -1 : 0);
          if (nr < 0 || nr >= config.rows || nc < 0 || nc >= config.cols) continue;
          const int receiving_side = (out + 2) % 4;
          for (Direction d2 : kDirections)
            edges.emplace_back(id, movement_id(nr * config.cols + nc, receiving_side, d2));
        }
      }
    }
  }

  SignalTiming timing;
  timing.cycle_s = config.cycle_s;
  timing.start_s.assign(n, 0);
  timing.green_len_s.assign(n, 0);
  const int green_a = static_cast<int>(std::lround(config.split * config.cycle_s));
  const int green_b = std::min(green_a, config.cycle_s - green_a);
  for (int r = 0; r < config.rows; ++r) {
    for (int c = 0; c < config.cols; ++c) {
      const int ix = r * config.cols + c;
      const int offset = ((r + c) % 2) * (config.cycle_s / 2);
      for (int side = 0; side < 4; ++side) {
        const bool phase_a = side == North || side == South;
        for (Direction d : kDirections) {
          const NodeId id = movement_id(ix, side, d);
          if (config.right_always_green && d == Direction::Right) {
            timing.green_len_s[id] = config.cycle_s;
            continue;
          }
          timing.start_s[id] = offset + (phase_a ? 0 : green_a);
          timing.green_len_s[id] = phase_a ? green_a : green_b;
        }
      }
    }
  }

  GridNetwork net{MovementGraph(std::move(movements), std::move(edges)), {}, std::move(timing)};
  net.signal = net.timing.to_plan({0, config.duration_min});
  return net;
}

struct SimState {
  std::vector<double> queue;
  double entered = 0.0;
  double exited = 0.0;
  double initial_total = 0.0;
  long long clock_s = 0;

  static SimState empty(std::size_t n) {
    SimState s;
    s.queue.assign(n, 0.0);
    return s;
  }

  double in_system() const {
    double total = 0.0;
    for (double q : queue) total += q;
    return total;
  }

  /// entered - exited - in_system; equals -initial_total at every step.
  double ledger_balance() const { return entered - exited - in_system(); }
};

struct StepResult {
  SimState state;
  std::vector<double> inflow;
  std::vector<double> outflow;
};

/// Advances one second. Discharges are computed from the queues at the start of the
/// second; arrivals land after discharge and cannot leave in the same second.
inline StepResult step(const SimState& state, const MovementGraph& g, const SignalTiming& timing,
                       const SimConfig& config) {
  const auto n = g.size();
  require(state.queue.size() == n, "sim step: state size mismatch");
  const double saturation = quantize(config.saturation_vps);

  StepResult res{state, std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  auto& next = res.state;

  for (NodeId i = 0; i < n; ++i) {
    const double q = state.queue[i];
    const double d = timing.green(state.clock_s, i) ? std::min(q, saturation) : 0.0;
    res.outflow[i] = d;
    next.queue[i] = q - d;
  }

  const auto& ratio = config.turn_ratios;
  for (NodeId i = 0; i < n; ++i) {
    const double d = res.outflow[i];
    if (d == 0.0) continue;
    const auto down = g.downstream(i);
    if (down.empty()) {
      next.exited += d;
      continue;
    }
    // Cumulative rounding keeps every share on the grid and the shares summing to d.
    double shares[3];
    const double c1 = std::min(d, quantize(d * ratio[0]));
    const double c2 = std::min(d, std::max(c1, quantize(d * (ratio[0] + ratio[1]))));
    shares[0] = c1;
    shares[1] = c2 - c1;
    shares[2] = d - c2;
    for (NodeId j : down) {
      const double share = shares[static_cast<int>(g.movement(j).direction)];
      res.inflow[j] += share;
      next.queue[j] += share;
    }
  }

  const double per_second = config.demand_vpm / 60.0;
  for (NodeId i = 0; i < n; ++i) {
    if (!g.upstream(i).empty()) continue;
    const double rate = per_second * ratio[static_cast<int>(g.movement(i).direction)];
    const CounterStream arrivals(config.seed, i);
    const double k = arrivals.poisson(static_cast<std::uint64_t>(state.clock_s), rate);
    if (k == 0.0) continue;
    res.inflow[i] += k;
    next.queue[i] += k;
    next.entered += k;
  }
  next.clock_s = state.clock_s + 1;
  return res;
}

/// Aligned per-minute series over `range`. Row r of each matrix is minute range.begin + r.
struct Dataset {
  MovementGraph graph;
  SignalPlan signal;
  MinuteRange range;
  int warmup_min = 0;
  Matrix volumes;
  Matrix inflow;
  Matrix outflow;

  std::size_t n_nodes() const { return graph.size(); }
  int n_minutes() const { return range.size(); }
  std::size_t row(int t) const {
    require(range.contains(t), "dataset: minute " + std::to_string(t) + " outside range");
    return static_cast<std::size_t>(t - range.begin);
  }
  double volume(int t, NodeId i) const { return volumes(row(t), i); }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

inline Dataset run(const SimConfig& config, const GridNetwork& net) {
  config.validate();
  const auto n = net.graph.size();
  const int minutes = config.duration_min;
  Dataset d;
  d.graph = net.graph;
  d.signal = net.timing.to_plan({0, minutes});
  d.range = {0, minutes};
  d.warmup_min = config.warmup_min;
  d.volumes = Matrix(minutes, n);
  d.inflow = Matrix(minutes, n);
  d.outflow = Matrix(minutes, n);

  auto state = SimState::empty(n);
  for (int t = 0; t < minutes; ++t) {
    for (NodeId i = 0; i < n; ++i) d.volumes(t, i) = state.queue[i];
    for (int s = 0; s < 60; ++s) {
      auto res = step(state, net.graph, net.timing, config);
      for (NodeId i = 0; i < n; ++i) {
        d.inflow(t, i) += res.inflow[i];
        d.outflow(t, i) += res.outflow[i];
      }
      state = std::move(res.state);
    }
  }
  return d;
}

inline Dataset run(const SimConfig& config) { return run(config, build_grid_network(config)); }

inline constexpr std::string_view kVolumesHeader = "t_min,node_id,volume";
inline constexpr std::string_view kFlowsHeader = "t_min,node_id,inflow,outflow";

inline std::string serialize_volumes(const Dataset& d) {
  std::string out(kVolumesHeader);
  out += '\n';
  for (int t = d.range.begin; t < d.range.end; ++t)
    for (NodeId i = 0; i < d.n_nodes(); ++i)
      out += std::to_string(t) + ',' + std::to_string(i) + ',' + format_real(d.volume(t, i)) + '\n';
  return out;
}

inline std::string serialize_flows(const Dataset& d) {
  std::string out(kFlowsHeader);
  out += '\n';
  for (int t = d.range.begin; t < d.range.end; ++t) {
    const auto r = d.row(t);
    for (NodeId i = 0; i < d.n_nodes(); ++i)
      out += std::to_string(t) + ',' + std::to_string(i) + ',' + format_real(d.inflow(r, i)) + ',' +
             format_real(d.outflow(r, i)) + '\n';
  }
  return out;
}

inline void export_dataset(const Dataset& d, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file((dir / "roadnet.json").string(), serialize_roadnet(d.graph));
  write_file((dir / "signal.csv").string(), serialize_signal_plan(d.signal));
  write_file((dir / "volumes.csv").string(), serialize_volumes(d));
  write_file((dir / "flows.csv").string(), serialize_flows(d));
}

/// Rows sorted by (t_min, node_id) covering a contiguous minute range for all N movements.
/// Returns the range and one value vector per extra column.
inline MinuteRange parse_node_series(std::string_view text, std::string_view header, std::size_t n,
                                     std::size_t n_values, std::vector<Matrix>& out,
                                     const std::string& ctx) {
  const auto rows = csv_rows(text, header, ctx);
  require(n > 0 || rows.empty(), ctx + ": rows for an empty graph");
  require(n == 0 || rows.size() % n == 0, ctx + ": row count is not a multiple of N");
  const std::size_t minutes = n == 0 ? 0 : rows.size() / n;
  out.assign(n_values, Matrix(minutes, n));
  MinuteRange range{0, 0};
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto f = split(rows[k], ',');
    require(f.size() == 2 + n_values, ctx + ": wrong field count");
    const auto t = parse_int(f[0], ctx + " t_min");
    const auto i = parse_int(f[1], ctx + " node_id");
    if (k == 0) range = {static_cast<int>(t), static_cast<int>(t + static_cast<long long>(minutes))};
    require(t == range.begin + static_cast<long long>(k / n) && i == static_cast<long long>(k % n),
            ctx + ": rows must be sorted by (t_min, node_id) and complete");
    for (std::size_t v = 0; v < n_values; ++v)
      out[v](k / n, k % n) = parse_real(f[2 + v], ctx + " value");
  }
  return range;
}

inline Dataset import_dataset(const std::filesystem::path& dir, int warmup_min = 0) {
  Dataset d;
  d.graph = parse_roadnet(read_file((dir / "roadnet.json").string()));
  const auto n = d.graph.size();
  std::vector<Matrix> vol, flows;
  const auto vrange = parse_node_series(read_file((dir / "volumes.csv").string()), kVolumesHeader, n,
                                        1, vol, "volumes");
  const auto frange = parse_node_series(read_file((dir / "flows.csv").string()), kFlowsHeader, n, 2,
                                        flows, "flows");
  require(vrange == frange, "dataset: volumes and flows cover different minutes");
  d.range = vrange;
  d.volumes = std::move(vol[0]);
  d.inflow = std::move(flows[0]);
  d.outflow = std::move(flows[1]);
  d.signal = parse_signal_plan(read_file((dir / "signal.csv").string()), d.graph, d.range);
  d.warmup_min = warmup_min;
  return d;
}

}  // namespace fdti
