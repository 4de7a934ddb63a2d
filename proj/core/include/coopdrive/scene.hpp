#pragma once

// Road geometry, vehicle state and the relations between vehicles.
//
// Coordinates are Frenet-style: `s` runs along the road, lanes are indexed
// from the left (lane 0) to the right, and a vehicle's lateral position is
// its lane centre plus a signed offset (positive to the right).

#include <compare>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace coopdrive {

struct VehicleId {
  std::uint32_t value = 0;
  constexpr auto operator<=>(const VehicleId&) const = default;
};

inline constexpr VehicleId kEgoId{0};

enum class Marking { dashed, solid };
enum class VehicleKind { car, truck };

/// Per-lane attributes of a segment. A terminating lane ends at the
/// segment's `s_end`; its usable width narrows over the last `taper` meters.
struct LaneSpec {
  bool terminating = false;
  double taper = 0.0;
};

/// Lanes with index >= `first_lane` leave the main carriageway at `s_split`.
struct LaneDiverge {
  int first_lane = 0;
  double s_split = 0.0;
};

struct LaneSegment {
  double s_start = 0.0;
  double s_end = 0.0;
  int lane_count = 0;
  std::vector<Marking> markings;  // boundary i separates lane i and lane i+1
  std::vector<LaneSpec> lanes;
  std::optional<LaneDiverge> diverge;
};

class RoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RoadModel {
 public:
  RoadModel() = default;
  RoadModel(std::vector<LaneSegment> segments, double lane_width);

  const std::vector<LaneSegment>& segments() const { return segments_; }
  double lane_width() const { return lane_width_; }
  double total_length() const;

  /// Segment containing `s`; positions past the end map to the last segment.
  const LaneSegment& segment_at(double s) const;
  int lane_count_at(double s) const;
  bool lane_exists(double s, int lane) const;

  /// Marking between `lane` and `lane + 1` at `s`. Out-of-range boundaries
  /// are reported as solid.
  Marking boundary_at(double s, int lane) const;

  /// Marking that a vehicle in `from_lane` must cross to reach `to_lane`
  /// (which must be adjacent).
  Marking crossing_marking(double s, int from_lane, int to_lane) const;

  /// Distance from `s` to the end of `lane` if it terminates in the current
  /// or a later segment, otherwise nullopt.
  std::optional<double> distance_to_lane_end(double s, int lane) const;

  bool is_diverging_lane(double s, int lane) const;

  /// Throws RoadError when an invariant is violated.
  void validate() const;

 private:
  std::vector<LaneSegment> segments_;
  double lane_width_ = 3.5;
};

struct VehicleState {
  VehicleId id;
  double s = 0.0;  // front bumper
  int lane = 0;
  double lateral_offset = 0.0;
  double vel = 0.0;
  double accel = 0.0;
  double lateral_vel = 0.0;
  double length = 4.5;
  double width = 1.8;
  VehicleKind kind = VehicleKind::car;

  double rear() const { return s - length; }
  double center_s() const { return s - 0.5 * length; }
  double lateral_position(double lane_width) const {
    return lane * lane_width + lateral_offset;
  }
};

/// Lane index and offset for a continuous lateral position.
struct LanePosition {
  int lane = 0;
  double offset = 0.0;
};
LanePosition lane_position_from_lateral(double lateral, double lane_width);

/// Bumper-to-bumper distance from the front of `rear` to the back of `lead`.
/// Negative when the two overlap longitudinally.
double gap(const VehicleState& rear, const VehicleState& lead);

enum class LaneRelation {
  front,
  front_left,
  front_right,
  rear,
  rear_left,
  rear_right,
  beside,
  far
};

/// Where `other` is relative to `ego`. Right is the higher lane index.
LaneRelation lane_relation(const VehicleState& ego, const VehicleState& other);

bool is_ahead(LaneRelation r);

std::string_view to_string(LaneRelation r);
std::string_view to_string(Marking m);
std::string_view to_string(VehicleKind k);
Marking marking_from_string(std::string_view s);
VehicleKind vehicle_kind_from_string(std::string_view s);

/// Physical state of the world at one tick: the road, the ego vehicle and
/// everyone else. Predictions and plans live alongside it in SceneSnapshot.
struct TrafficScene {
  std::int64_t tick = 0;
  double time = 0.0;
  std::shared_ptr<const RoadModel> road;
  VehicleState ego;
  int ego_target_lane = 0;  // equals ego.lane unless a lane change is running
  std::vector<VehicleState> others;

  const VehicleState* find(VehicleId id) const;
};

/// True if two bodies overlap laterally, with an extra clearance margin.
inline bool lateral_overlap(double y_a, double width_a, double y_b,
                            double width_b, double margin = 0.0) {
  const double d = y_a > y_b ? y_a - y_b : y_b - y_a;
  return d < 0.5 * (width_a + width_b) + margin;
}

/// Quintic lane-change progress over normalised time: zero lateral velocity
/// and acceleration at both ends.
inline double lane_change_progress(double tau) {
  if (tau <= 0.0) return 0.0;
  if (tau >= 1.0) return 1.0;
  return tau * tau * tau * (10.0 + tau * (-15.0 + 6.0 * tau));
}

/// d(progress)/d(tau).
inline double lane_change_progress_rate(double tau) {
  if (tau <= 0.0 || tau >= 1.0) return 0.0;
  const double u = tau * (1.0 - tau);
  return 30.0 * u * u;
}

}  // namespace coopdrive

template <>
struct std::hash<coopdrive::VehicleId> {
  std::size_t operator()(coopdrive::VehicleId id) const noexcept {
    return std::hash<std::uint32_t>{}(id.value);
  }
};
