#pragma once

// Behavior prediction for surrounding vehicles and fusion of human-injected
// predictions.

#include <map>
#include <string_view>
#include <utility>
#include <vector>

#include "coopdrive/scene.hpp"

namespace coopdrive {

enum class Hypothesis { keep, change_left, change_right, hazard };
enum class PredictionSource { system, injected };

std::string_view to_string(Hypothesis h);
std::string_view to_string(PredictionSource s);
Hypothesis hypothesis_from_string(std::string_view s);

struct BehaviorPrediction {
  VehicleId vehicle;
  Hypothesis hypothesis = Hypothesis::keep;
  double probability = 0.0;
  PredictionSource source = PredictionSource::system;
  double created_at = 0.0;
  double expiry = 0.0;

  bool operator==(const BehaviorPrediction&) const = default;
};

struct PredictorConfig {
  double ttc_min = 3.0;  // TTC at or below which the TTC cue saturates
  double ttc_max = 10.0; // TTC at or above which the TTC cue vanishes
  double headway_threshold = 1.0;
  double predecessor_range = 150.0;
  double lateral_vel_gain = 10.0;
  double ttc_gain = 6.0;
  double headway_gain = 2.0;
  double accel_gain = 1.0;
  double bias = -4.0;
  double display_threshold = 0.4;
  double plan_threshold = 0.6;
  double inject_probability = 0.95;
  double inject_ttl = 10.0;

  /// Throws std::invalid_argument on inconsistent thresholds.
  void validate() const;
};

/// Kinematic features of one vehicle relative to its same-lane predecessor.
struct CutInFeatures {
  double ttc = 0.0;      // infinity when not closing or no predecessor
  double headway = 0.0;  // infinity when no predecessor
  double accel = 0.0;
  double lateral_vel = 0.0;
  bool has_predecessor = false;
};

CutInFeatures cut_in_features(const VehicleState& vehicle,
                              const TrafficScene& scene,
                              const PredictorConfig& config);

/// Change probabilities from features alone; `left_possible` is false for
/// vehicles in the leftmost lane.
struct ChangeProbabilities {
  double left = 0.0;
  double right = 0.0;
  double keep = 1.0;
};
ChangeProbabilities change_probabilities(const CutInFeatures& f,
                                         bool left_possible,
                                         const PredictorConfig& config);

/// System predictions for every non-ego vehicle: keep, change_left and
/// change_right entries. Uses kinematics only; the road map is never read.
std::vector<BehaviorPrediction> predict_base(const TrafficScene& scene,
                                             const PredictorConfig& config);

using InjectionKey = std::pair<VehicleId, Hypothesis>;

struct FusionResult {
  std::vector<BehaviorPrediction> predictions;
  std::vector<InjectionKey> applied;
  std::vector<InjectionKey> suppressed;  // blocked by a solid boundary
  std::vector<VehicleId> dropped;        // vehicle no longer in the scene
};

/// Merges live injections into the base predictions.
FusionResult fuse(const std::vector<BehaviorPrediction>& base,
                  const std::vector<BehaviorPrediction>& injected,
                  const TrafficScene& scene, const RoadModel& road,
                  const PredictorConfig& config);

/// True if an injected lane change for `vehicle` would have to cross a solid
/// marking (or leave the road) at its current position.
bool crosses_solid_boundary(const VehicleState& vehicle, Hypothesis h,
                            const RoadModel& road);

/// Injected predictions owned by the simulation loop. At most one entry per
/// (vehicle, hypothesis); re-injecting refreshes the entry.
class InjectionStore {
 public:
  void add(const BehaviorPrediction& p);
  /// Removes entries whose expiry is before `now`; returns them.
  std::vector<BehaviorPrediction> expire(double now);
  std::vector<BehaviorPrediction> active(double now) const;
  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

 private:
  std::map<std::pair<std::uint32_t, int>, BehaviorPrediction> entries_;
};

/// What the planner assumes a vehicle will do: the lateral hypothesis whose
/// probability reaches the planning threshold (keep otherwise) and whether
/// it is flagged as a hazard.
struct PredictedIntent {
  Hypothesis lateral = Hypothesis::keep;
  bool hazard = false;

  bool operator==(const PredictedIntent&) const = default;
};

PredictedIntent predicted_intent(VehicleId vehicle,
                                 const std::vector<BehaviorPrediction>& predictions,
                                 double plan_threshold);

double probability_of(VehicleId vehicle, Hypothesis h,
                      const std::vector<BehaviorPrediction>& predictions);

}  // namespace coopdrive
