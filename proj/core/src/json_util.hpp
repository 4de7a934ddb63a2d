#pragma once

// JSON conversions shared by the scenario, config and run-log code.

#include <string>

#include <nlohmann/json.hpp>

#include "coopdrive/prediction.hpp"
#include "coopdrive/scene.hpp"

namespace coopdrive::detail {

using nlohmann::json;

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  const auto it = j.find(key);
  return it == j.end() || it->is_null() ? fallback : it->template get<T>();
}

inline json vehicle_to_json(const VehicleState& v) {
  return {{"id", v.id.value},         {"s", v.s},
          {"lane", v.lane},           {"lateral_offset", v.lateral_offset},
          {"vel", v.vel},             {"accel", v.accel},
          {"lateral_vel", v.lateral_vel},
          {"length", v.length},       {"width", v.width},
          {"kind", std::string(to_string(v.kind))}};
}

// Scenario files may omit everything but s, lane and vel.
inline VehicleState vehicle_from_json(const json& j) {
  VehicleState v;
  v.id = VehicleId{get_or<std::uint32_t>(j, "id", 0)};
  v.s = j.at("s").get<double>();
  v.lane = j.at("lane").get<int>();
  v.lateral_offset = get_or(j, "lateral_offset", 0.0);
  v.vel = j.at("vel").get<double>();
  v.accel = get_or(j, "accel", 0.0);
  v.lateral_vel = get_or(j, "lateral_vel", 0.0);
  v.kind = vehicle_kind_from_string(get_or<std::string>(j, "kind", "car"));
  const bool truck = v.kind == VehicleKind::truck;
  v.length = get_or(j, "length", truck ? 12.0 : 4.5);
  v.width = get_or(j, "width", truck ? 2.5 : 1.8);
  return v;
}

inline json prediction_to_json(const BehaviorPrediction& p) {
  return {{"vehicle", p.vehicle.value},
          {"hypothesis", std::string(to_string(p.hypothesis))},
          {"probability", p.probability},
          {"source", std::string(to_string(p.source))},
          {"expiry", p.expiry}};
}

inline json road_to_json(const RoadModel& road) {
  json segs = json::array();
  for (const auto& seg : road.segments()) {
    json markings = json::array();
    for (Marking m : seg.markings) markings.push_back(std::string(to_string(m)));
    json lanes = json::array();
    for (const auto& l : seg.lanes) lanes.push_back({{"terminating", l.terminating}, {"taper", l.taper}});
    json sj{{"s_start", seg.s_start}, {"s_end", seg.s_end}, {"lane_count", seg.lane_count},
            {"markings", markings},   {"lanes", lanes}};
    if (seg.diverge) {
      sj["diverge"] = {{"first_lane", seg.diverge->first_lane}, {"s_split", seg.diverge->s_split}};
    }
    segs.push_back(std::move(sj));
  }
  return {{"lane_width", road.lane_width()}, {"segments", segs}};
}

}  // namespace coopdrive::detail
