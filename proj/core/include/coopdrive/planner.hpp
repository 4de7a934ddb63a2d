#pragma once

// Candidate ego maneuvers, horizon rollouts against predicted traffic, cost
// evaluation and risk-minimal selection.

#include <optional>
#include <string_view>
#include <vector>

#include "coopdrive/prediction.hpp"
#include "coopdrive/scene.hpp"

namespace coopdrive {

enum class ManeuverKind {
  keep_lane_cruise,
  keep_lane_decelerate,
  change_left,
  change_right
};

std::string_view to_string(ManeuverKind k);
ManeuverKind maneuver_kind_from_string(std::string_view s);

struct ManeuverCandidate {
  ManeuverKind kind = ManeuverKind::keep_lane_cruise;
  double decel_level = 0.0;  // m/s^2, keep_lane_decelerate only
  double target_speed = 0.0;
  double horizon = 0.0;
  int target_lane = 0;
  bool emergency = false;  // maximum-deceleration fallback

  /// Identity used for hysteresis and behavior-change accounting: the kind
  /// plus the deceleration level.
  bool same_maneuver(const ManeuverCandidate& other) const {
    return kind == other.kind && decel_level == other.decel_level &&
           emergency == other.emergency;
  }
  bool changes_lane() const {
    return kind == ManeuverKind::change_left || kind == ManeuverKind::change_right;
  }
};

struct EgoSample {
  double t = 0.0;
  double s = 0.0;
  double lateral = 0.0;
  double vel = 0.0;
  double accel = 0.0;
  double length = 4.5;
  double width = 1.8;
};

struct AgentSample {
  VehicleId id;
  double s = 0.0;
  double lateral = 0.0;
  double vel = 0.0;
  double length = 4.5;
  double width = 1.8;  // already inflated for hazard-flagged vehicles
  bool hazard = false;
  bool rear_relevant = false;  // started outside the ego lane
};

struct RolloutSample {
  EgoSample ego;
  std::vector<AgentSample> others;
};

struct CostBreakdown {
  double risk = 0.0;
  double comfort = 0.0;
  double efficiency = 0.0;
  double total = 0.0;
  bool collision = false;
};

struct PlanTrace {
  ManeuverCandidate candidate;
  std::vector<RolloutSample> rollout;
  CostBreakdown cost;
  std::vector<VehicleId> considered;
  bool chosen = false;
};

struct PlannerConfig {
  double w_risk = 1.0;
  double w_comfort = 0.3;
  double w_efficiency = 0.1;
  double horizon = 6.0;
  double rollout_step = 0.2;
  double planning_range = 100.0;
  double hysteresis_margin = 0.05;
  double safe_thw_target = 1.8;
  double caution_thw_target = 3.0;
  std::vector<double> decel_levels{1.0, 2.0, 3.0};
  double decel_window = 2.0;  // seconds of braking a decelerate candidate asks for
  double desired_speed = 30.0;
  double lane_change_duration = 3.0;
  double lane_change_penalty = 0.5;
  double collision_penalty = 1.0e6;
  double ttc_reference = 6.0;
  double hazard_width_inflation = 1.0;
  double lateral_margin = 0.3;
  double idm_max_accel = 1.5;
  double idm_comfort_decel = 2.0;
  double idm_min_gap = 2.0;
  double idm_delta = 4.0;
  double accel_min = -4.0;
  double accel_max = 2.0;

  void validate() const;
};

struct LeadInfo {
  double gap = 0.0;
  double vel = 0.0;
  bool hazard = false;
};

/// Longitudinal control law shared by rollouts and the ego controller:
/// IDM-style free-road term toward the candidate's target speed (or the
/// candidate's braking level), limited by an interaction term that settles
/// at `thw_target * v` behind the lead. Clamped to the accel limits.
double follow_accel(const ManeuverCandidate& candidate, double vel,
                    const std::optional<LeadInfo>& lead,
                    const PlannerConfig& config);

/// Vehicles the planner looks at: ego lane and adjacent lanes, within
/// planning_range ahead or behind.
std::vector<VehicleId> consideration_set(const TrafficScene& scene,
                                         const PlannerConfig& config);

std::vector<ManeuverCandidate> generate_candidates(const TrafficScene& scene,
                                                   const PlannerConfig& config);

std::vector<RolloutSample> rollout(const TrafficScene& scene,
                                   const std::vector<BehaviorPrediction>& predictions,
                                   const ManeuverCandidate& candidate,
                                   const std::vector<VehicleId>& considered,
                                   const PlannerConfig& config,
                                   double plan_threshold);

CostBreakdown cost(const std::vector<RolloutSample>& rollout,
                   const ManeuverCandidate& candidate,
                   const PlannerConfig& config);

struct PlanResult {
  PlanTrace chosen;
  std::vector<PlanTrace> candidates;
};

/// Pure planning step. `previous` is the maneuver chosen at the last
/// planning tick; it is kept unless a challenger undercuts its cost by the
/// hysteresis margin.
PlanResult plan(const TrafficScene& scene,
                const std::vector<BehaviorPrediction>& predictions,
                const PlannerConfig& config, double plan_threshold,
                const std::optional<ManeuverCandidate>& previous = std::nullopt);

struct LongLatCommand {
  double accel = 0.0;
  std::optional<int> lane_change_target;
  double lane_change_duration = 3.0;
};

LongLatCommand ego_command(const PlanTrace& plan, const TrafficScene& scene,
                           const std::vector<BehaviorPrediction>& predictions,
                           const PlannerConfig& config, double plan_threshold);

}  // namespace coopdrive
