#pragma once

#include <memory>
#include <random>
#include <vector>

#include "coopdrive/scene.hpp"

namespace coopdrive::testing {

inline std::shared_ptr<const RoadModel> straight_road(int lanes, double length = 2000.0,
                                                      Marking marking = Marking::dashed) {
  LaneSegment seg;
  seg.s_start = 0.0;
  seg.s_end = length;
  seg.lane_count = lanes;
  seg.markings.assign(static_cast<std::size_t>(lanes - 1), marking);
  seg.lanes.assign(static_cast<std::size_t>(lanes), LaneSpec{});
  return std::make_shared<const RoadModel>(std::vector<LaneSegment>{seg}, 3.5);
}

inline VehicleState car(std::uint32_t id, double s, int lane, double vel) {
  VehicleState v;
  v.id = VehicleId{id};
  v.s = s;
  v.lane = lane;
  v.vel = vel;
  return v;
}

inline TrafficScene scene_with(std::shared_ptr<const RoadModel> road, VehicleState ego,
                               std::vector<VehicleState> others, double time = 0.0) {
  TrafficScene scene;
  scene.road = std::move(road);
  scene.ego = ego;
  scene.ego.id = kEgoId;
  scene.ego_target_lane = ego.lane;
  scene.others = std::move(others);
  scene.time = time;
  return scene;
}

/// Three-lane traffic around an ego at s = 100 in the middle lane.
inline TrafficScene random_traffic(std::mt19937_64& rng, int max_per_lane = 3) {
  std::uniform_real_distribution<double> spacing(15.0, 60.0);
  std::uniform_real_distribution<double> offset(-0.6, 0.6);
  std::uniform_int_distribution<int> count(0, max_per_lane);
  std::vector<VehicleState> others;
  std::uint32_t id = 1;
  for (int lane = 0; lane < 3; ++lane) {
    double s = 100.0 + spacing(rng) - (lane == 1 ? 0.0 : 40.0);
    const int n = count(rng);
    for (int i = 0; i < n; ++i) {
      auto v = car(id++, s, lane, 25.0);
      v.lateral_offset = offset(rng);
      others.push_back(v);
      s += 4.5 + spacing(rng);
    }
  }
  return scene_with(straight_road(3), car(0, 100, 1, 28), others, 5.0);
}

}  // namespace coopdrive::testing
