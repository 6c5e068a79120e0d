#pragma once

// Traffic-movement graph, per-minute signal plans, and their file formats.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fdti/error.hpp"
#include "fdti/text.hpp"

namespace fdti {

using NodeId = std::uint32_t;

enum class Direction : std::uint8_t { Left = 0, Straight = 1, Right = 2 };

inline constexpr std::array<Direction, 3> kDirections{Direction::Left, Direction::Straight,
                                                      Direction::Right};

inline char direction_code(Direction d) {
  switch (d) {
    case Direction::Left: return 'L';
    case Direction::Straight: return 'S';
    case Direction::Right: return 'R';
  }
  return '?';
}

inline Direction parse_direction(std::string_view s) {
  if (s == "L") return Direction::Left;
  if (s == "S") return Direction::Straight;
  if (s == "R") return Direction::Right;
  throw ValidationError("unknown direction '" + std::string(s) + "'");
}

inline std::array<double, 3> one_hot(Direction d) {
  std::array<double, 3> v{0.0, 0.0, 0.0};
  v[static_cast<std::size_t>(d)] = 1.0;
  return v;
}

struct TrafficMovement {
  NodeId id = 0;
  Direction direction = Direction::Straight;
  double length_m = 1.0;

  friend bool operator==(const TrafficMovement&, const TrafficMovement&) = default;
};

using Edge = std::pair<NodeId, NodeId>;

/// Static directed graph of traffic movements. Edge (j, i) means vehicles leaving
/// movement j enter movement i. Immutable once built.
class MovementGraph {
public:
  MovementGraph() = default;

  MovementGraph(std::vector<TrafficMovement> movements, std::vector<Edge> edges)
      : movements_(std::move(movements)), edges_(std::move(edges)) {
    const auto n = movements_.size();
    for (std::size_t k = 0; k < n; ++k) {
      require(movements_[k].id == k, "movement ids must be dense 0..N-1 in order");
      require(std::isfinite(movements_[k].length_m) && movements_[k].length_m > 0.0,
              "movement " + std::to_string(k) + ": length_m must be positive");
    }
    std::sort(edges_.begin(), edges_.end());
    for (std::size_t k = 0; k < edges_.size(); ++k) {
      const auto [a, b] = edges_[k];
      require(a < n && b < n, "edge references unknown movement id");
      require(a != b, "self-loop on movement " + std::to_string(a));
      require(k == 0 || edges_[k - 1] != edges_[k], "duplicate edge");
    }
    build_adjacency();
  }

  std::size_t size() const { return movements_.size(); }
  const std::vector<TrafficMovement>& movements() const { return movements_; }
  const TrafficMovement& movement(NodeId i) const { return movements_.at(i); }
  /// Sorted by (source, target).
  const std::vector<Edge>& edges() const { return edges_; }

  /// In-neighbours of i in ascending id order.
  std::span<const NodeId> upstream(NodeId i) const {
    check_id(i);
    return {up_.data() + up_off_[i], up_.data() + up_off_[i + 1]};
  }

  std::span<const NodeId> downstream(NodeId i) const {
    check_id(i);
    return {down_.data() + down_off_[i], down_.data() + down_off_[i + 1]};
  }

  double max_length() const {
    double m = 0.0;
    for (const auto& mv : movements_) m = std::max(m, mv.length_m);
    return m;
  }

  friend bool operator==(const MovementGraph& a, const MovementGraph& b) {
    return a.movements_ == b.movements_ && a.edges_ == b.edges_;
  }

private:
  void check_id(NodeId i) const {
    if (i >= movements_.size()) throw ValidationError("invalid movement id " + std::to_string(i));
  }

  void build_adjacency() {
    const auto n = movements_.size();
    up_off_.assign(n + 1, 0);
    down_off_.assign(n + 1, 0);
    for (const auto& [a, b] : edges_) {
      ++down_off_[a + 1];
      ++up_off_[b + 1];
    }
    for (std::size_t k = 0; k < n; ++k) {
      up_off_[k + 1] += up_off_[k];
      down_off_[k + 1] += down_off_[k];
    }
    up_.resize(edges_.size());
    down_.resize(edges_.size());
    auto up_fill = up_off_;
    auto down_fill = down_off_;
    // edges_ is sorted by source, so both lists come out ascending.
    for (const auto& [a, b] : edges_) {
      down_[down_fill[a]++] = b;
      up_[up_fill[b]++] = a;
    }
  }

  std::vector<TrafficMovement> movements_;
  std::vector<Edge> edges_;
  std::vector<std::size_t> up_off_, down_off_;
  std::vector<NodeId> up_, down_;
};

inline std::vector<NodeId> upstream(const MovementGraph& g, NodeId i) {
  const auto s = g.upstream(i);
  return {s.begin(), s.end()};
}

/// Parses the roadnet document: `{"movements": [{id, direction, length_m, downstream}]}`.
inline MovementGraph parse_roadnet(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("roadnet: malformed document: ") + e.what());
  }
  try {
    const auto& list = doc.at("movements");
    require(list.is_array(), "roadnet: 'movements' must be a list");
    const auto n = list.size();
    std::vector<std::optional<TrafficMovement>> slots(n);
    std::vector<Edge> edges;
    for (const auto& m : list) {
      const auto id = m.at("id").get<long long>();
      require(id >= 0, "roadnet: negative movement id");
      require(static_cast<std::size_t>(id) < n,
              "roadnet: movement id " + std::to_string(id) + " outside 0..N-1");
      require(!slots[id], "roadnet: duplicate movement id " + std::to_string(id));
      TrafficMovement mv;
      mv.id = static_cast<NodeId>(id);
      mv.direction = parse_direction(m.at("direction").get<std::string>());
      mv.length_m = m.at("length_m").get<double>();
      require(mv.length_m > 0.0, "roadnet: movement " + std::to_string(id) +
                                     " has non-positive length");
      slots[id] = mv;
      for (const auto& d : m.at("downstream")) {
        const auto j = d.get<long long>();
        require(j >= 0 && static_cast<std::size_t>(j) < n,
                "roadnet: downstream reference to unknown id " + std::to_string(j));
        edges.emplace_back(mv.id, static_cast<NodeId>(j));
      }
    }
    std::vector<TrafficMovement> movements;
    movements.reserve(n);
    for (auto& s : slots) movements.push_back(*s);
    return MovementGraph(std::move(movements), std::move(edges));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("roadnet: malformed document: ") + e.what());
  }
}

inline std::string serialize_roadnet(const MovementGraph& g) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& mv : g.movements()) {
    const auto down = g.downstream(mv.id);
    list.push_back({{"id", mv.id},
                    {"direction", std::string(1, direction_code(mv.direction))},
                    {"length_m", mv.length_m},
                    {"downstream", std::vector<NodeId>(down.begin(), down.end())}});
  }
  return nlohmann::json{{"movements", list}}.dump(1) + "\n";
}

/// Half-open minute range [begin, end).
struct MinuteRange {
  int begin = 0;
  int end = 0;
  int size() const { return end - begin; }
  bool contains(int t) const { return t >= begin && t < end; }
  friend bool operator==(const MinuteRange&, const MinuteRange&) = default;
};

/// Green seconds per (minute, movement), complete over its minute range.
class SignalPlan {
public:
  SignalPlan() = default;
  SignalPlan(MinuteRange range, std::size_t n_nodes)
      : range_(range), n_(n_nodes), green_(static_cast<std::size_t>(range.size()) * n_nodes, 0.0) {
    require(range.size() >= 0, "signal plan: negative range");
  }

  MinuteRange range() const { return range_; }
  std::size_t n_nodes() const { return n_; }

  double green_s(int t, NodeId i) const { return green_[index(t, i)]; }

  void set(int t, NodeId i, double seconds) {
    require(std::isfinite(seconds) && seconds >= 0.0 && seconds <= 60.0,
            "signal plan: green seconds outside [0, 60]");
    green_[index(t, i)] = seconds;
  }

  bool covers(MinuteRange r) const {
    return r.size() == 0 || (r.begin >= range_.begin && r.end <= range_.end);
  }

  friend bool operator==(const SignalPlan&, const SignalPlan&) = default;

private:
  std::size_t index(int t, NodeId i) const {
    if (!range_.contains(t)) throw ValidationError("signal plan: minute " + std::to_string(t) +
                                                   " not covered");
    if (i >= n_) throw ValidationError("signal plan: invalid movement id " + std::to_string(i));
    return static_cast<std::size_t>(t - range_.begin) * n_ + i;
  }

  MinuteRange range_;
  std::size_t n_ = 0;
  std::vector<double> green_;
};

inline constexpr std::string_view kSignalHeader = "t_min,node_id,green_s";

/// Rows outside `range` are ignored; every (minute, movement) inside it must appear exactly once.
inline SignalPlan parse_signal_plan(std::string_view text, const MovementGraph& g,
                                    MinuteRange range) {
  SignalPlan plan(range, g.size());
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(range.size()) * g.size(), 0);
  for (const auto row : csv_rows(text, kSignalHeader, "signal")) {
    const auto f = split(row, ',');
    require(f.size() == 3, "signal: expected 3 fields");
    const auto t = parse_int(f[0], "signal t_min");
    const auto i = parse_int(f[1], "signal node_id");
    const auto green = parse_real(f[2], "signal green_s");
    require(i >= 0 && static_cast<std::size_t>(i) < g.size(),
            "signal: unknown movement id " + std::to_string(i));
    if (!range.contains(static_cast<int>(t))) continue;
    require(green >= 0.0 && green <= 60.0, "signal: green_s " + format_real(green) +
                                               " outside [0, 60]");
    const auto k = static_cast<std::size_t>(t - range.begin) * g.size() + static_cast<std::size_t>(i);
    require(!seen[k], "signal: duplicate row for minute " + std::to_string(t));
    seen[k] = 1;
    plan.set(static_cast<int>(t), static_cast<NodeId>(i), green);
  }
  for (std::size_t k = 0; k < seen.size(); ++k) {
    if (!seen[k]) {
      throw ValidationError("signal: missing row for minute " +
                            std::to_string(range.begin + static_cast<int>(k / g.size())) +
                            ", movement " + std::to_string(k % g.size()));
    }
  }
  return plan;
}

inline std::string serialize_signal_plan(const SignalPlan& plan) {
  std::string out(kSignalHeader);
  out += '\n';
  for (int t = plan.range().begin; t < plan.range().end; ++t)
    for (NodeId i = 0; i < plan.n_nodes(); ++i)
      out += std::to_string(t) + ',' + std::to_string(i) + ',' + format_real(plan.green_s(t, i)) + '\n';
  return out;
}

}  // namespace fdti
