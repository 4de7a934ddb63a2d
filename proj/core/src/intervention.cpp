#include "coopdrive/intervention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace coopdrive {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kDeg = std::numbers::pi / 180.0;

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }

// Keep a couple of seconds of gaze; taps only look back gaze_window.
constexpr double kGazeHistory = 2.0;

}  // namespace

double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

Vec3 normalized(const Vec3& v) {
  const double n = norm(v);
  if (!(n > 0.0) || !std::isfinite(n)) throw std::invalid_argument("cannot normalize vector");
  return {v[0] / n, v[1] / n, v[2] / n};
}

double angle_between(const Vec3& a, const Vec3& b) {
  return std::atan2(norm(cross(a, b)), dot(a, b));
}

GazeSample make_gaze(const Vec3& origin, const Vec3& direction, double time) {
  return GazeSample{origin, normalized(direction), time};
}

void InterventionConfig::validate() const {
  if (!(cutoff_deg > 0.0 && cutoff_deg < 180.0)) {
    throw std::invalid_argument("cutoff_deg must be in (0, 180)");
  }
  if (!(double_tap_window > 0.0) || !(gaze_window > 0.0)) {
    throw std::invalid_argument("input windows must be positive");
  }
  if (gaze_noise_deg < 0.0) throw std::invalid_argument("gaze_noise_deg must be >= 0");
}

Vec3 eye_position(const InterventionConfig& config) {
  return {-config.eye_back, config.eye_left, config.eye_height};
}

Vec3 body_center_in_ego_frame(const VehicleState& ego, const VehicleState& other,
                              double lane_width, const InterventionConfig& config) {
  // Lateral positions grow to the right; the ego frame's y points left.
  return {other.center_s() - ego.s,
          ego.lateral_position(lane_width) - other.lateral_position(lane_width),
          config.body_center_height};
}

Selection select_vehicle(const GazeSample& gaze, const TrafficScene& scene,
                         const InterventionConfig& config) {
  const double w = scene.road ? scene.road->lane_width() : 3.5;
  struct Hit {
    VehicleId id;
    double angle;
    double range;
  };
  std::vector<Hit> hits;
  hits.reserve(scene.others.size());
  double best = kInf;
  for (const auto& o : scene.others) {
    const Vec3 to = sub(body_center_in_ego_frame(scene.ego, o, w, config), gaze.origin);
    const double range = norm(to);
    const double angle = range > 0.0 ? angle_between(gaze.direction, to) : 0.0;
    hits.push_back({o.id, angle, range});
    best = std::min(best, angle);
  }
  if (hits.empty()) return Selection{std::nullopt, kInf, kInf};

  // Among near-ties with the best angle, the closer vehicle wins.
  const Hit* pick = nullptr;
  for (const auto& h : hits) {
    if (h.angle > best + config.tie_epsilon_rad) continue;
    if (pick == nullptr || h.range < pick->range ||
        (h.range == pick->range && h.angle < pick->angle)) {
      pick = &h;
    }
  }
  Selection sel;
  sel.angle_deg = pick->angle / kDeg;
  sel.range = pick->range;
  if (sel.angle_deg <= config.cutoff_deg) sel.vehicle = pick->id;
  return sel;
}

GazeSample gaze_toward(const TrafficScene& scene, VehicleId target,
                       const InterventionConfig& config) {
  const VehicleState* v = scene.find(target);
  if (v == nullptr || v->id == scene.ego.id) {
    throw std::invalid_argument("gaze target " + std::to_string(target.value) + " not in scene");
  }
  const double w = scene.road ? scene.road->lane_width() : 3.5;
  const Vec3 eye = eye_position(config);
  return make_gaze(eye, sub(body_center_in_ego_frame(scene.ego, *v, w, config), eye), scene.time);
}

GazeSample perturb_gaze(const GazeSample& gaze, double sigma_deg, std::mt19937_64& rng) {
  if (sigma_deg <= 0.0) return gaze;
  std::normal_distribution<double> normal(0.0, sigma_deg * kDeg);
  std::uniform_real_distribution<double> azimuth(0.0, 2.0 * std::numbers::pi);
  const double theta = std::abs(normal(rng));
  const double phi = azimuth(rng);

  const Vec3& d = gaze.direction;
  // Helper axis least aligned with d keeps the basis well conditioned.
  Vec3 helper{0.0, 0.0, 0.0};
  int axis = 0;
  for (int i = 1; i < 3; ++i) {
    if (std::abs(d[i]) < std::abs(d[axis])) axis = i;
  }
  helper[axis] = 1.0;
  const Vec3 u = normalized(cross(d, helper));
  const Vec3 v = cross(d, u);
  const double c = std::cos(theta), s = std::sin(theta);
  const double cp = std::cos(phi), sp = std::sin(phi);
  Vec3 out;
  for (int i = 0; i < 3; ++i) out[i] = c * d[i] + s * (cp * u[i] + sp * v[i]);
  return make_gaze(gaze.origin, out, gaze.time);
}

BehaviorPrediction map_to_prediction(const VehicleState& vehicle, const VehicleState& ego,
                                     double lane_width, double now,
                                     const PredictorConfig& config) {
  BehaviorPrediction p;
  p.vehicle = vehicle.id;
  p.probability = config.inject_probability;
  p.source = PredictionSource::injected;
  p.created_at = now;
  p.expiry = now + config.inject_ttl;
  const bool swerving = std::abs(vehicle.lateral_offset) >= 0.5 * lane_width;
  if (vehicle.lane == ego.lane || swerving) {
    p.hypothesis = Hypothesis::hazard;
  } else if (vehicle.lane > ego.lane) {
    p.hypothesis = Hypothesis::change_left;
  } else {
    p.hypothesis = Hypothesis::change_right;
  }
  return p;
}

std::string_view to_string(FeedbackEvent::Kind k) {
  switch (k) {
    case FeedbackEvent::Kind::success: return "success";
    case FeedbackEvent::Kind::failure: return "failure";
    case FeedbackEvent::Kind::suppressed: return "suppressed";
    case FeedbackEvent::Kind::no_effect: return "no_effect";
  }
  return "failure";
}

FeedbackEvent::Kind feedback_kind_from_string(std::string_view s) {
  if (s == "success") return FeedbackEvent::Kind::success;
  if (s == "failure") return FeedbackEvent::Kind::failure;
  if (s == "suppressed") return FeedbackEvent::Kind::suppressed;
  if (s == "no_effect") return FeedbackEvent::Kind::no_effect;
  throw std::invalid_argument("unknown feedback kind '" + std::string(s) + "'");
}

void InterventionGateway::on_gaze(const GazeSample& sample) {
  gaze_.push_back(sample);
  while (!gaze_.empty() && gaze_.front().time < sample.time - kGazeHistory) gaze_.pop_front();
}

bool InterventionGateway::on_tap(double time) {
  if (last_tap_ && time - *last_tap_ <= config_.double_tap_window && time >= *last_tap_) {
    last_tap_.reset();
    return true;
  }
  last_tap_ = time;
  return false;
}

std::optional<GazeSample> InterventionGateway::gaze_near(double time) const {
  std::optional<GazeSample> best;
  double best_dt = kInf;
  for (const auto& g : gaze_) {
    const double d = std::abs(g.time - time);
    if (d <= config_.gaze_window && d <= best_dt) {
      best = g;
      best_dt = d;
    }
  }
  return best;
}

TapResult InterventionGateway::process_tap(double tap_time, const TrafficScene& scene,
                                           InjectionStore& store,
                                           const PredictorConfig& predictor,
                                           const std::optional<ManeuverCandidate>& current_plan) {
  const auto gaze = gaze_near(tap_time);
  if (!gaze) {
    TapResult r;
    r.event.tap_time = tap_time;
    r.event.resolution = Selection{std::nullopt, kInf, kInf};
    r.feedback.push_back({FeedbackEvent::Kind::failure, std::nullopt, scene.time});
    return r;
  }
  return resolve(select_vehicle(*gaze, scene, config_), gaze, tap_time, false, scene, store,
                 predictor, current_plan);
}

TapResult InterventionGateway::intervene(VehicleId vehicle, double time,
                                         const TrafficScene& scene, InjectionStore& store,
                                         const PredictorConfig& predictor,
                                         const std::optional<ManeuverCandidate>& current_plan) {
  Selection sel{std::nullopt, kInf, kInf};
  if (const VehicleState* v = scene.find(vehicle); v != nullptr && v->id != scene.ego.id) {
    const double w = scene.road ? scene.road->lane_width() : 3.5;
    sel.vehicle = vehicle;
    sel.angle_deg = 0.0;
    sel.range = norm(sub(body_center_in_ego_frame(scene.ego, *v, w, config_),
                         eye_position(config_)));
  }
  return resolve(sel, std::nullopt, time, true, scene, store, predictor, current_plan);
}

TapResult InterventionGateway::resolve(const Selection& sel, std::optional<GazeSample> gaze,
                                       double time, bool direct, const TrafficScene& scene,
                                       InjectionStore& store, const PredictorConfig& predictor,
                                       const std::optional<ManeuverCandidate>& current_plan) {
  TapResult r;
  r.event.gaze = std::move(gaze);
  r.event.tap_time = time;
  r.event.resolution = sel;
  r.event.direct = direct;
  if (!sel.vehicle) {
    r.feedback.push_back({FeedbackEvent::Kind::failure, std::nullopt, scene.time});
    return r;
  }
  const VehicleState* v = scene.find(*sel.vehicle);
  const double w = scene.road ? scene.road->lane_width() : 3.5;
  const BehaviorPrediction p = map_to_prediction(*v, scene.ego, w, scene.time, predictor);
  store.add(p);
  r.event.derived = p;
  r.feedback.push_back({FeedbackEvent::Kind::success, p.vehicle, scene.time});
  const Pending pending{{p.vehicle, p.hypothesis}, current_plan};
  awaiting_fusion_.push_back(pending);
  awaiting_plan_.push_back(pending);
  return r;
}

std::vector<FeedbackEvent> InterventionGateway::on_fusion(const FusionResult& fusion,
                                                          double now) {
  std::vector<FeedbackEvent> out;
  for (const auto& p : awaiting_fusion_) {
    if (std::find(fusion.suppressed.begin(), fusion.suppressed.end(), p.key) !=
        fusion.suppressed.end()) {
      out.push_back({FeedbackEvent::Kind::suppressed, p.key.first, now});
    }
  }
  awaiting_fusion_.clear();
  return out;
}

std::vector<FeedbackEvent> InterventionGateway::on_plan(const ManeuverCandidate& chosen,
                                                        double now) {
  std::vector<FeedbackEvent> out;
  for (const auto& p : awaiting_plan_) {
    if (p.before && chosen.same_maneuver(*p.before)) {
      out.push_back({FeedbackEvent::Kind::no_effect, p.key.first, now});
    }
  }
  awaiting_plan_.clear();
  return out;
}

void InterventionGateway::reset() {
  gaze_.clear();
  last_tap_.reset();
  awaiting_fusion_.clear();
  awaiting_plan_.clear();
}

}  // namespace coopdrive
