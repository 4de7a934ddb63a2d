#include "coopdrive/scene.hpp"

#include <algorithm>
#include <cmath>

namespace coopdrive {

RoadModel::RoadModel(std::vector<LaneSegment> segments, double lane_width)
    : segments_(std::move(segments)), lane_width_(lane_width) {
  validate();
}

double RoadModel::total_length() const {
  return segments_.empty() ? 0.0 : segments_.back().s_end;
}

const LaneSegment& RoadModel::segment_at(double s) const {
  if (segments_.empty()) throw RoadError("road has no segments");
  for (const auto& seg : segments_) {
    if (s < seg.s_end) return seg;
  }
  return segments_.back();
}

int RoadModel::lane_count_at(double s) const { return segment_at(s).lane_count; }

bool RoadModel::lane_exists(double s, int lane) const {
  if (s < 0.0 || s > total_length()) return false;
  return lane >= 0 && lane < lane_count_at(s);
}

Marking RoadModel::boundary_at(double s, int lane) const {
  const auto& seg = segment_at(s);
  if (lane < 0 || lane + 1 >= seg.lane_count) return Marking::solid;
  return seg.markings[static_cast<std::size_t>(lane)];
}

Marking RoadModel::crossing_marking(double s, int from_lane, int to_lane) const {
  if (std::abs(from_lane - to_lane) != 1) {
    throw RoadError("crossing_marking requires adjacent lanes");
  }
  return boundary_at(s, std::min(from_lane, to_lane));
}

std::optional<double> RoadModel::distance_to_lane_end(double s, int lane) const {
  for (const auto& seg : segments_) {
    if (seg.s_end <= s) continue;
    if (lane >= seg.lane_count) return std::max(0.0, seg.s_start - s);
    if (seg.lanes[static_cast<std::size_t>(lane)].terminating) {
      return seg.s_end - s;
    }
  }
  return std::nullopt;
}

bool RoadModel::is_diverging_lane(double s, int lane) const {
  for (const auto& seg : segments_) {
    if (seg.s_end <= s || !seg.diverge) continue;
    if (lane >= seg.diverge->first_lane) return true;
  }
  return false;
}

void RoadModel::validate() const {
  if (!(lane_width_ > 0.0)) throw RoadError("lane width must be positive");
  if (segments_.empty()) throw RoadError("road has no segments");
  double expected_start = segments_.front().s_start;
  if (expected_start != 0.0) throw RoadError("road must start at s = 0");
  for (const auto& seg : segments_) {
    if (seg.s_start != expected_start) {
      throw RoadError("road segments are not contiguous");
    }
    if (!(seg.s_start < seg.s_end)) throw RoadError("segment has s_start >= s_end");
    if (seg.lane_count < 2) throw RoadError("segment has fewer than two lanes");
    if (seg.markings.size() != static_cast<std::size_t>(seg.lane_count - 1)) {
      throw RoadError("segment marking count must be lane_count - 1");
    }
    if (seg.lanes.size() != static_cast<std::size_t>(seg.lane_count)) {
      throw RoadError("segment lane spec count must equal lane_count");
    }
    for (const auto& lane : seg.lanes) {
      if (lane.terminating && !(lane.taper > 0.0)) {
        throw RoadError("terminating lane needs a positive taper length");
      }
      if (lane.taper > seg.s_end - seg.s_start) {
        throw RoadError("taper longer than its segment");
      }
    }
    if (seg.diverge) {
      if (seg.diverge->first_lane <= 0 || seg.diverge->first_lane >= seg.lane_count) {
        throw RoadError("diverge must leave at least one lane on each branch");
      }
    }
    expected_start = seg.s_end;
  }
}

LanePosition lane_position_from_lateral(double lateral, double lane_width) {
  const int lane = static_cast<int>(std::floor(lateral / lane_width + 0.5));
  return {lane, lateral - lane * lane_width};
}

double gap(const VehicleState& rear, const VehicleState& lead) {
  return lead.rear() - rear.s;
}

LaneRelation lane_relation(const VehicleState& ego, const VehicleState& other) {
  const int d = other.lane - ego.lane;
  if (d >= 2 || d <= -2) return LaneRelation::far;
  const bool ahead = gap(ego, other) >= 0.0;
  const bool behind = gap(other, ego) >= 0.0;
  if (!ahead && !behind) return LaneRelation::beside;
  if (ahead) {
    if (d == 0) return LaneRelation::front;
    return d > 0 ? LaneRelation::front_right : LaneRelation::front_left;
  }
  if (d == 0) return LaneRelation::rear;
  return d > 0 ? LaneRelation::rear_right : LaneRelation::rear_left;
}

bool is_ahead(LaneRelation r) {
  return r == LaneRelation::front || r == LaneRelation::front_left ||
         r == LaneRelation::front_right;
}

std::string_view to_string(LaneRelation r) {
  switch (r) {
    case LaneRelation::front: return "front";
    case LaneRelation::front_left: return "front-left";
    case LaneRelation::front_right: return "front-right";
    case LaneRelation::rear: return "rear";
    case LaneRelation::rear_left: return "rear-left";
    case LaneRelation::rear_right: return "rear-right";
    case LaneRelation::beside: return "beside";
    case LaneRelation::far: return "far";
  }
  return "far";
}

std::string_view to_string(Marking m) {
  return m == Marking::dashed ? "dashed" : "solid";
}

std::string_view to_string(VehicleKind k) {
  return k == VehicleKind::car ? "car" : "truck";
}

Marking marking_from_string(std::string_view s) {
  if (s == "dashed") return Marking::dashed;
  if (s == "solid") return Marking::solid;
  throw RoadError("unknown marking '" + std::string(s) + "'");
}

VehicleKind vehicle_kind_from_string(std::string_view s) {
  if (s == "car") return VehicleKind::car;
  if (s == "truck") return VehicleKind::truck;
  throw std::invalid_argument("unknown vehicle kind '" + std::string(s) + "'");
}

const VehicleState* TrafficScene::find(VehicleId id) const {
  if (id == ego.id) return &ego;
  for (const auto& v : others) {
    if (v.id == id) return &v;
  }
  return nullptr;
}

}  // namespace coopdrive
