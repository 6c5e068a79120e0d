#include <gtest/gtest.h>

#include "fdti/roadnet.hpp"
#include "test_util.hpp"

namespace fdti {
namespace {

constexpr const char* kTwoMovements = R"({"movements": [
  {"id": 0, "direction": "S", "length_m": 100, "downstream": [1]},
  {"id": 1, "direction": "L", "length_m": 80, "downstream": []}]})";

TEST(Roadnet, ParsesExplicitDocument) {
  const auto g = parse_roadnet(kTwoMovements);
  ASSERT_EQ(g.size(), 2u);
  EXPECT_EQ(g.edges(), (std::vector<Edge>{{0, 1}}));
  EXPECT_EQ(g.movement(0).direction, Direction::Straight);
  EXPECT_EQ(g.movement(1).direction, Direction::Left);
  EXPECT_DOUBLE_EQ(g.movement(0).length_m, 100.0);
  EXPECT_DOUBLE_EQ(g.movement(1).length_m, 80.0);
}

TEST(Roadnet, RejectsDuplicateId) {
  EXPECT_THROW(parse_roadnet(R"({"movements": [
    {"id": 0, "direction": "S", "length_m": 100, "downstream": []},
    {"id": 0, "direction": "L", "length_m": 80, "downstream": []}]})"),
               ValidationError);
}

TEST(Roadnet, RejectsUnknownDownstreamId) {
  EXPECT_THROW(parse_roadnet(R"({"movements": [
    {"id": 0, "direction": "S", "length_m": 100, "downstream": [7]},
    {"id": 1, "direction": "L", "length_m": 80, "downstream": []}]})"),
               ValidationError);
}

TEST(Roadnet, RejectsBadDocuments) {
  EXPECT_THROW(parse_roadnet("{not json"), ValidationError);
  EXPECT_THROW(parse_roadnet(R"({"nodes": []})"), ValidationError);
  EXPECT_THROW(parse_roadnet(R"({"movements": [{"id": 0, "direction": "S", "length_m": 0, "downstream": []}]})"),
               ValidationError);
  EXPECT_THROW(parse_roadnet(R"({"movements": [{"id": 0, "direction": "U", "length_m": 5, "downstream": []}]})"),
               ValidationError);
  EXPECT_THROW(parse_roadnet(R"({"movements": [{"id": 0, "direction": "S", "length_m": 5, "downstream": [0]}]})"),
               ValidationError);
  EXPECT_THROW(parse_roadnet(R"({"movements": [
    {"id": 0, "direction": "S", "length_m": 5, "downstream": [1, 1]},
    {"id": 1, "direction": "S", "length_m": 5, "downstream": []}]})"),
               ValidationError);
}

TEST(Roadnet, UpstreamIsInNeighbourhood) {
  std::vector<TrafficMovement> mv{{0, Direction::Left, 1}, {1, Direction::Left, 1}, {2, Direction::Left, 1}};
  const MovementGraph g(mv, {{1, 2}, {0, 2}});
  EXPECT_EQ(upstream(g, 2), (std::vector<NodeId>{0, 1}));
  EXPECT_TRUE(upstream(g, 0).empty());
  EXPECT_THROW(upstream(g, 3), ValidationError);

  const MovementGraph chain({{0, Direction::Left, 1}, {1, Direction::Left, 1}}, {{0, 1}});
  EXPECT_EQ(upstream(chain, 1), (std::vector<NodeId>{0}));
}

TEST(Roadnet, OneHotHasSingleOne) {
  for (Direction d : kDirections) {
    const auto h = one_hot(d);
    EXPECT_EQ(h[0] + h[1] + h[2], 1.0);
    EXPECT_EQ(std::count(h.begin(), h.end(), 0.0), 2);
  }
}

TEST(RoadnetProperty, SerializeParseRoundTripAndUpstreamMatchesEdges) {
  SplitMix64 rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    const auto n = 1 + rng.next() % 25;
    const auto g = testing::random_graph(n, rng.uniform(0.0, 0.4), rng);
    EXPECT_EQ(parse_roadnet(serialize_roadnet(g)), g);
    for (NodeId i = 0; i < n; ++i) {
      const auto up = upstream(g, i);
      EXPECT_TRUE(std::is_sorted(up.begin(), up.end()));
      for (NodeId j = 0; j < n; ++j) {
        const bool is_edge = std::binary_search(g.edges().begin(), g.edges().end(), Edge{j, i});
        EXPECT_EQ(std::find(up.begin(), up.end(), j) != up.end(), is_edge);
      }
    }
  }
}

class SignalPlanTest : public ::testing::Test {
protected:
  MovementGraph g = parse_roadnet(kTwoMovements);
};

TEST_F(SignalPlanTest, ParsesCompleteCoverage) {
  const auto plan = parse_signal_plan("t_min,node_id,green_s\n0,0,30\n0,1,60\n", g, {0, 1});
  EXPECT_EQ(plan.green_s(0, 0), 30.0);
  EXPECT_EQ(plan.green_s(0, 1), 60.0);
}

TEST_F(SignalPlanTest, RejectsOutOfRangeGreen) {
  EXPECT_THROW(parse_signal_plan("t_min,node_id,green_s\n0,0,61\n0,1,60\n", g, {0, 1}), ValidationError);
  EXPECT_THROW(parse_signal_plan("t_min,node_id,green_s\n0,0,-1\n0,1,60\n", g, {0, 1}), ValidationError);
}

TEST_F(SignalPlanTest, RejectsMissingPair) {
  EXPECT_THROW(parse_signal_plan("t_min,node_id,green_s\n0,0,30\n", g, {0, 1}), ValidationError);
}

TEST_F(SignalPlanTest, RejectsUnknownMovementAndDuplicates) {
  EXPECT_THROW(parse_signal_plan("t_min,node_id,green_s\n0,0,30\n0,1,60\n0,2,10\n", g, {0, 1}), ValidationError);
  EXPECT_THROW(parse_signal_plan("t_min,node_id,green_s\n0,0,30\n0,0,30\n0,1,60\n", g, {0, 1}), ValidationError);
  EXPECT_THROW(parse_signal_plan("t,node,green\n0,0,30\n0,1,60\n", g, {0, 1}), ValidationError);
}

TEST_F(SignalPlanTest, RoundTrip) {
  SignalPlan plan({3, 6}, 2);
  plan.set(3, 0, 12.5);
  plan.set(5, 1, 60);
  EXPECT_EQ(parse_signal_plan(serialize_signal_plan(plan), g, {3, 6}), plan);
  EXPECT_THROW(plan.set(4, 0, 60.5), ValidationError);
  EXPECT_THROW(plan.green_s(6, 0), ValidationError);
}

}  // namespace
}  // namespace fdti
