#include "coopdrive/prediction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace coopdrive {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

int hyp_index(Hypothesis h) { return static_cast<int>(h); }

}  // namespace

std::string_view to_string(Hypothesis h) {
  switch (h) {
    case Hypothesis::keep: return "keep";
    case Hypothesis::change_left: return "change_left";
    case Hypothesis::change_right: return "change_right";
    case Hypothesis::hazard: return "hazard";
  }
  return "keep";
}

std::string_view to_string(PredictionSource s) {
  return s == PredictionSource::system ? "system" : "injected";
}

Hypothesis hypothesis_from_string(std::string_view s) {
  if (s == "keep") return Hypothesis::keep;
  if (s == "change_left") return Hypothesis::change_left;
  if (s == "change_right") return Hypothesis::change_right;
  if (s == "hazard") return Hypothesis::hazard;
  throw std::invalid_argument("unknown hypothesis '" + std::string(s) + "'");
}

void PredictorConfig::validate() const {
  if (!(ttc_min > 0.0 && ttc_min < ttc_max)) {
    throw std::invalid_argument("predictor ttc_window must satisfy 0 < min < max");
  }
  if (!(headway_threshold > 0.0)) {
    throw std::invalid_argument("predictor headway_threshold must be positive");
  }
  if (!(0.0 < display_threshold && display_threshold <= plan_threshold &&
        plan_threshold < inject_probability && inject_probability <= 1.0)) {
    throw std::invalid_argument(
        "predictor thresholds must satisfy 0 < display <= plan < inject <= 1");
  }
  if (!(inject_ttl > 0.0) || !std::isfinite(inject_ttl)) {
    throw std::invalid_argument("predictor inject_ttl must be finite and positive");
  }
}

CutInFeatures cut_in_features(const VehicleState& vehicle,
                              const TrafficScene& scene,
                              const PredictorConfig& config) {
  CutInFeatures f;
  f.accel = vehicle.accel;
  f.lateral_vel = vehicle.lateral_vel;
  f.ttc = kInf;
  f.headway = kInf;

  const VehicleState* pred = nullptr;
  double best = kInf;
  auto consider = [&](const VehicleState& other) {
    if (other.id == vehicle.id || other.lane != vehicle.lane) return;
    const double g = gap(vehicle, other);
    if (g < 0.0 || g > config.predecessor_range || g >= best) return;
    best = g;
    pred = &other;
  };
  consider(scene.ego);
  for (const auto& o : scene.others) consider(o);
  if (pred == nullptr) return f;

  f.has_predecessor = true;
  const double closing = vehicle.vel - pred->vel;
  f.ttc = closing > 0.0 ? best / closing : kInf;
  f.headway = vehicle.vel > 0.0 ? best / vehicle.vel : kInf;
  return f;
}

ChangeProbabilities change_probabilities(const CutInFeatures& f,
                                         bool left_possible,
                                         const PredictorConfig& config) {
  double longitudinal = 0.0;
  if (f.has_predecessor) {
    const double x_ttc = std::clamp(
        (config.ttc_max - f.ttc) / (config.ttc_max - config.ttc_min), 0.0, 1.0);
    const double x_thw = std::clamp(
        (config.headway_threshold - f.headway) / config.headway_threshold, 0.0, 1.0);
    const double x_acc = std::max(0.0, f.accel);
    longitudinal = config.ttc_gain * x_ttc + config.headway_gain * x_thw +
                   config.accel_gain * x_acc;
  }
  const double toward_left = std::max(0.0, -f.lateral_vel);
  const double toward_right = std::max(0.0, f.lateral_vel);

  // Overtaking happens on the left when there is a lane there.
  double logit_left = config.bias + config.lateral_vel_gain * toward_left;
  double logit_right = config.bias + config.lateral_vel_gain * toward_right;
  if (left_possible) {
    logit_left += longitudinal;
  } else {
    logit_right += longitudinal;
  }

  ChangeProbabilities p;
  p.left = left_possible ? sigmoid(logit_left) : 0.0;
  p.right = sigmoid(logit_right);
  const double total = p.left + p.right;
  if (total > 1.0) {
    p.left /= total;
    p.right /= total;
  }
  p.keep = std::max(0.0, 1.0 - p.left - p.right);
  return p;
}

std::vector<BehaviorPrediction> predict_base(const TrafficScene& scene,
                                             const PredictorConfig& config) {
  std::vector<BehaviorPrediction> out;
  out.reserve(scene.others.size() * 3);
  for (const auto& v : scene.others) {
    const auto f = cut_in_features(v, scene, config);
    const auto p = change_probabilities(f, v.lane > 0, config);
    const auto make = [&](Hypothesis h, double prob) {
      return BehaviorPrediction{v.id, h, prob, PredictionSource::system,
                                scene.time, scene.time};
    };
    out.push_back(make(Hypothesis::keep, p.keep));
    out.push_back(make(Hypothesis::change_left, p.left));
    out.push_back(make(Hypothesis::change_right, p.right));
  }
  return out;
}

bool crosses_solid_boundary(const VehicleState& vehicle, Hypothesis h,
                            const RoadModel& road) {
  if (h != Hypothesis::change_left && h != Hypothesis::change_right) return false;
  const int target = h == Hypothesis::change_left ? vehicle.lane - 1 : vehicle.lane + 1;
  if (!road.lane_exists(vehicle.s, target)) return true;
  return road.crossing_marking(vehicle.s, vehicle.lane, target) == Marking::solid;
}

FusionResult fuse(const std::vector<BehaviorPrediction>& base,
                  const std::vector<BehaviorPrediction>& injected,
                  const TrafficScene& scene, const RoadModel& road,
                  const PredictorConfig& config) {
  FusionResult result;
  result.predictions = base;

  auto find_entry = [&](VehicleId id, Hypothesis h) -> BehaviorPrediction* {
    for (auto& p : result.predictions) {
      if (p.vehicle == id && p.hypothesis == h) return &p;
    }
    return nullptr;
  };

  for (const auto& inj : injected) {
    if (inj.expiry < scene.time) continue;
    const VehicleState* v = scene.find(inj.vehicle);
    if (v == nullptr || v->id == scene.ego.id) {
      result.dropped.push_back(inj.vehicle);
      continue;
    }
    const InjectionKey key{inj.vehicle, inj.hypothesis};

    if (inj.hypothesis == Hypothesis::hazard) {
      if (auto* existing = find_entry(inj.vehicle, Hypothesis::hazard)) {
        *existing = inj;
      } else {
        result.predictions.push_back(inj);
      }
      result.applied.push_back(key);
      continue;
    }
    if (inj.hypothesis == Hypothesis::keep) continue;

    if (crosses_solid_boundary(*v, inj.hypothesis, road)) {
      result.suppressed.push_back(key);
      continue;
    }

    BehaviorPrediction* entry = find_entry(inj.vehicle, inj.hypothesis);
    const double base_p = entry != nullptr ? entry->probability : 0.0;
    BehaviorPrediction fused = inj;
    fused.probability = std::max(base_p, config.inject_probability);
    if (entry != nullptr) {
      *entry = fused;
    } else {
      result.predictions.push_back(fused);
    }
    result.applied.push_back(key);

    // Keep the distribution consistent for the vehicle.
    BehaviorPrediction* left = find_entry(inj.vehicle, Hypothesis::change_left);
    BehaviorPrediction* right = find_entry(inj.vehicle, Hypothesis::change_right);
    BehaviorPrediction* keep = find_entry(inj.vehicle, Hypothesis::keep);
    if (keep != nullptr) {
      const double l = left != nullptr ? left->probability : 0.0;
      const double r = right != nullptr ? right->probability : 0.0;
      keep->probability = std::max(0.0, 1.0 - l - r);
    }
  }
  return result;
}

void InjectionStore::add(const BehaviorPrediction& p) {
  entries_[{p.vehicle.value, hyp_index(p.hypothesis)}] = p;
}

std::vector<BehaviorPrediction> InjectionStore::expire(double now) {
  std::vector<BehaviorPrediction> removed;
  for (auto it = entries_.begin(); it != entries_.end();) {
    if (it->second.expiry < now) {
      removed.push_back(it->second);
      it = entries_.erase(it);
    } else {
      ++it;
    }
  }
  return removed;
}

std::vector<BehaviorPrediction> InjectionStore::active(double now) const {
  std::vector<BehaviorPrediction> out;
  for (const auto& [key, p] : entries_) {
    if (p.expiry >= now) out.push_back(p);
  }
  return out;
}

PredictedIntent predicted_intent(VehicleId vehicle,
                                 const std::vector<BehaviorPrediction>& predictions,
                                 double plan_threshold) {
  PredictedIntent intent;
  double best = -1.0;
  for (const auto& p : predictions) {
    if (p.vehicle != vehicle || p.probability < plan_threshold) continue;
    if (p.hypothesis == Hypothesis::hazard) {
      intent.hazard = true;
    } else if (p.hypothesis != Hypothesis::keep && p.probability > best) {
      best = p.probability;
      intent.lateral = p.hypothesis;
    }
  }
  return intent;
}

double probability_of(VehicleId vehicle, Hypothesis h,
                      const std::vector<BehaviorPrediction>& predictions) {
  double p = 0.0;
  for (const auto& e : predictions) {
    if (e.vehicle == vehicle && e.hypothesis == h) p = std::max(p, e.probability);
  }
  return p;
}

}  // namespace coopdrive
