#include <random>

#include <gtest/gtest.h>

#include "coopdrive/scene.hpp"
#include "support.hpp"

using namespace coopdrive;
using coopdrive::testing::car;

TEST(Gap, BumperToBumper) {
  VehicleState lead = car(1, 100.0, 1, 20.0);
  VehicleState rear = car(2, 50.0, 1, 20.0);
  lead.length = 5.0;
  rear.length = 5.0;
  EXPECT_DOUBLE_EQ(gap(rear, lead), 45.0);
}

TEST(Gap, IdenticalStatesOverlapByLength) {
  VehicleState a = car(1, 80.0, 0, 10.0);
  EXPECT_DOUBLE_EQ(gap(a, a), -a.length);
}

TEST(Gap, RandomPairsMatchCoordinateArithmetic) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> pos(-500.0, 500.0);
  std::uniform_real_distribution<double> len(2.0, 18.0);
  for (int i = 0; i < 10000; ++i) {
    VehicleState a = car(1, pos(rng), 0, 0.0);
    VehicleState b = car(2, pos(rng), 0, 0.0);
    a.length = len(rng);
    b.length = len(rng);
    // rear bumper of b is its front minus its length
    const double b_tail = b.s - b.length;
    EXPECT_DOUBLE_EQ(gap(a, b), b_tail - a.s);
    EXPECT_NEAR(gap(a, b) + gap(b, a), -(a.length + b.length), 1e-9);
  }
}

TEST(LaneRelation, Examples) {
  const VehicleState ego = car(0, 100.0, 1, 25.0);
  EXPECT_EQ(lane_relation(ego, car(1, 150.0, 1, 20.0)), LaneRelation::front);
  EXPECT_EQ(lane_relation(ego, car(1, 150.0, 2, 20.0)), LaneRelation::front_right);
  EXPECT_EQ(lane_relation(ego, car(1, 150.0, 0, 20.0)), LaneRelation::front_left);
  EXPECT_EQ(lane_relation(ego, car(1, 50.0, 1, 20.0)), LaneRelation::rear);
  EXPECT_EQ(lane_relation(ego, car(1, 50.0, 2, 20.0)), LaneRelation::rear_right);
  EXPECT_EQ(lane_relation(ego, car(1, 101.0, 2, 20.0)), LaneRelation::beside);
  EXPECT_EQ(lane_relation(ego, car(1, 150.0, 3, 20.0)), LaneRelation::far);
  EXPECT_EQ(lane_relation(car(0, 100.0, 3, 25.0), car(1, 150.0, 1, 20.0)), LaneRelation::far);
}

TEST(LaneRelation, MirroringSwapsLeftAndRight) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> lane(0, 4);
  std::uniform_real_distribution<double> pos(0.0, 300.0);
  auto mirror = [](LaneRelation r) {
    switch (r) {
      case LaneRelation::front_left: return LaneRelation::front_right;
      case LaneRelation::front_right: return LaneRelation::front_left;
      case LaneRelation::rear_left: return LaneRelation::rear_right;
      case LaneRelation::rear_right: return LaneRelation::rear_left;
      default: return r;
    }
  };
  for (int i = 0; i < 2000; ++i) {
    VehicleState ego = car(0, pos(rng), lane(rng), 20.0);
    VehicleState other = car(1, pos(rng), lane(rng), 20.0);
    const LaneRelation r = lane_relation(ego, other);
    ego.lane = 4 - ego.lane;
    other.lane = 4 - other.lane;
    EXPECT_EQ(lane_relation(ego, other), mirror(r));
  }
}

namespace {

LaneSegment segment(double a, double b, int lanes) {
  LaneSegment s;
  s.s_start = a;
  s.s_end = b;
  s.lane_count = lanes;
  s.markings.assign(static_cast<std::size_t>(lanes - 1), Marking::dashed);
  s.lanes.assign(static_cast<std::size_t>(lanes), LaneSpec{});
  return s;
}

}  // namespace

TEST(RoadModel, RejectsBrokenInvariants) {
  EXPECT_THROW(RoadModel({segment(0, 100, 3), segment(120, 200, 3)}, 3.5), RoadError);
  EXPECT_THROW(RoadModel({segment(0, 0, 3)}, 3.5), RoadError);
  EXPECT_THROW(RoadModel({segment(0, 100, 1)}, 3.5), RoadError);
  EXPECT_THROW(RoadModel({segment(0, 100, 3)}, 0.0), RoadError);
  auto missing_marking = segment(0, 100, 3);
  missing_marking.markings.pop_back();
  EXPECT_THROW(RoadModel({missing_marking}, 3.5), RoadError);
  auto no_taper = segment(0, 100, 3);
  no_taper.lanes[2].terminating = true;
  EXPECT_THROW(RoadModel({no_taper}, 3.5), RoadError);
}

TEST(RoadModel, MergeTaperIsRepresentable) {
  auto approach = segment(0, 600, 3);
  approach.markings[1] = Marking::solid;
  auto merge = segment(600, 900, 3);
  merge.lanes[2] = LaneSpec{true, 100.0};
  const RoadModel road({approach, merge, segment(900, 2000, 2)}, 3.5);

  EXPECT_DOUBLE_EQ(road.total_length(), 2000.0);
  EXPECT_EQ(road.boundary_at(300.0, 1), Marking::solid);
  EXPECT_EQ(road.boundary_at(700.0, 1), Marking::dashed);
  EXPECT_EQ(road.crossing_marking(300.0, 2, 1), Marking::solid);
  EXPECT_EQ(road.boundary_at(300.0, 5), Marking::solid);  // off the road
  EXPECT_TRUE(road.lane_exists(850.0, 2));
  EXPECT_FALSE(road.lane_exists(950.0, 2));
  ASSERT_TRUE(road.distance_to_lane_end(700.0, 2).has_value());
  EXPECT_DOUBLE_EQ(*road.distance_to_lane_end(700.0, 2), 200.0);
  EXPECT_FALSE(road.distance_to_lane_end(700.0, 0).has_value());
}

TEST(LaneChangeProfile, SmoothAtBothEnds) {
  EXPECT_EQ(lane_change_progress(0.0), 0.0);
  EXPECT_EQ(lane_change_progress(1.0), 1.0);
  EXPECT_DOUBLE_EQ(lane_change_progress(0.5), 0.5);
  EXPECT_EQ(lane_change_progress_rate(0.0), 0.0);
  EXPECT_EQ(lane_change_progress_rate(1.0), 0.0);
  double prev = 0.0;
  for (int i = 1; i <= 1000; ++i) {
    const double p = lane_change_progress(i / 1000.0);
    EXPECT_GE(p, prev);
    prev = p;
  }
  // Numerical derivative agrees with the closed form.
  for (double tau : {0.1, 0.3, 0.5, 0.8}) {
    const double h = 1e-6;
    const double numeric = (lane_change_progress(tau + h) - lane_change_progress(tau - h)) / (2 * h);
    EXPECT_NEAR(numeric, lane_change_progress_rate(tau), 1e-6);
  }
}

TEST(LanePosition, RoundTripsLateralPosition) {
  for (double y = -1.7; y < 12.0; y += 0.13) {
    const auto p = lane_position_from_lateral(y, 3.5);
    EXPECT_NEAR(p.lane * 3.5 + p.offset, y, 1e-12);
    EXPECT_LE(std::abs(p.offset), 1.75 + 1e-12);
  }
}
