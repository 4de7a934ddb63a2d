#pragma once

// Gaze-ray vehicle selection, mapping of selections to injected predictions,
// and the double-tap input gateway with its feedback events.
//
// Gaze rays live in the ego frame: x forward, y left, z up, with the origin
// on the road surface under the centre of the ego front bumper.

#include <array>
#include <cstdint>
#include <deque>
#include <optional>
#include <random>
#include <string_view>
#include <vector>

#include "coopdrive/planner.hpp"
#include "coopdrive/prediction.hpp"
#include "coopdrive/scene.hpp"

namespace coopdrive {

using Vec3 = std::array<double, 3>;

double norm(const Vec3& v);
Vec3 normalized(const Vec3& v);
double dot(const Vec3& a, const Vec3& b);
/// Angle between two non-zero vectors, radians, numerically stable near 0.
double angle_between(const Vec3& a, const Vec3& b);

struct GazeSample {
  Vec3 origin{0.0, 0.0, 0.0};
  Vec3 direction{1.0, 0.0, 0.0};  // unit length
  double time = 0.0;
};

/// Normalizes `direction`; throws std::invalid_argument for a zero vector.
GazeSample make_gaze(const Vec3& origin, const Vec3& direction, double time);

struct InterventionConfig {
  double cutoff_deg = 30.0;
  double double_tap_window = 0.5;
  double gaze_window = 0.3;
  double tie_epsilon_rad = 1e-6;
  // Driver eye relative to the ego front bumper.
  double eye_back = 2.0;
  double eye_left = 0.4;
  double eye_height = 1.2;
  double body_center_height = 0.75;
  double gaze_noise_deg = 2.0;

  void validate() const;
};

Vec3 eye_position(const InterventionConfig& config);

/// Body centre of `other` in the ego frame.
Vec3 body_center_in_ego_frame(const VehicleState& ego, const VehicleState& other,
                              double lane_width, const InterventionConfig& config);

/// Outcome of a selection: a vehicle when the best angle is within the cutoff,
/// otherwise failure with the smallest angle seen (infinity if no vehicles).
struct Selection {
  std::optional<VehicleId> vehicle;
  double angle_deg = 0.0;
  double range = 0.0;

  bool success() const { return vehicle.has_value(); }
};

Selection select_vehicle(const GazeSample& gaze, const TrafficScene& scene,
                         const InterventionConfig& config = {});

/// Exact ray toward a vehicle's body centre from the configured eye point.
GazeSample gaze_toward(const TrafficScene& scene, VehicleId target,
                       const InterventionConfig& config = {});

/// Rotates the gaze by a half-normal angle (sigma in degrees) about a
/// uniformly random axis perpendicular to it.
GazeSample perturb_gaze(const GazeSample& gaze, double sigma_deg, std::mt19937_64& rng);

/// Right of ego lane: change_left. Left: change_right. Same lane or a
/// half-lane lateral excursion: hazard.
BehaviorPrediction map_to_prediction(const VehicleState& vehicle, const VehicleState& ego,
                                     double lane_width, double now,
                                     const PredictorConfig& config);

struct InterventionEvent {
  std::optional<GazeSample> gaze;  // absent for direct vehicle-id interventions
  double tap_time = 0.0;
  Selection resolution;
  std::optional<BehaviorPrediction> derived;
  bool direct = false;
};

struct FeedbackEvent {
  enum class Kind { success, failure, suppressed, no_effect };
  Kind kind = Kind::success;
  std::optional<VehicleId> vehicle;
  double time = 0.0;

  bool operator==(const FeedbackEvent&) const = default;
};

std::string_view to_string(FeedbackEvent::Kind k);
FeedbackEvent::Kind feedback_kind_from_string(std::string_view s);

struct TapResult {
  InterventionEvent event;
  std::vector<FeedbackEvent> feedback;
};

/// Buffers gaze samples and taps between planning ticks and resolves
/// confirmed double-taps. The caller owns the injection store and reports
/// each subsequent plan through `on_plan`.
class InterventionGateway {
 public:
  explicit InterventionGateway(InterventionConfig config = {}) : config_(config) {}

  const InterventionConfig& config() const { return config_; }

  void on_gaze(const GazeSample& sample);
  /// Registers a single tap; returns true when it completes a double-tap.
  bool on_tap(double time);

  /// Resolves a confirmed double-tap against the current scene. A successful
  /// selection injects into `store`.
  TapResult process_tap(double tap_time, const TrafficScene& scene, InjectionStore& store,
                        const PredictorConfig& predictor,
                        const std::optional<ManeuverCandidate>& current_plan);

  /// Vehicle-id intervention from the UI; skips gaze resolution.
  TapResult intervene(VehicleId vehicle, double time, const TrafficScene& scene,
                      InjectionStore& store, const PredictorConfig& predictor,
                      const std::optional<ManeuverCandidate>& current_plan);

  /// Call after fusion: emits suppressed feedback for injections made since
  /// the last call that the legality filter blocked.
  std::vector<FeedbackEvent> on_fusion(const FusionResult& fusion, double now);

  /// Call with the plan of the planning tick following the injections;
  /// emits no_effect where the maneuver is unchanged.
  std::vector<FeedbackEvent> on_plan(const ManeuverCandidate& chosen, double now);

  /// Gaze sample nearest `time` within the coincidence window.
  std::optional<GazeSample> gaze_near(double time) const;

  void reset();

 private:
  struct Pending {
    InjectionKey key;
    std::optional<ManeuverCandidate> before;
  };

  TapResult resolve(const Selection& sel, std::optional<GazeSample> gaze, double time,
                    bool direct, const TrafficScene& scene, InjectionStore& store,
                    const PredictorConfig& predictor,
                    const std::optional<ManeuverCandidate>& current_plan);

  InterventionConfig config_;
  std::deque<GazeSample> gaze_;
  std::optional<double> last_tap_;
  std::vector<Pending> awaiting_fusion_;
  std::vector<Pending> awaiting_plan_;
};

}  // namespace coopdrive
