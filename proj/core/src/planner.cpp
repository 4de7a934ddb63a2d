#include "coopdrive/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace coopdrive {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double sq(double x) { return x * x; }

// Lane centre reached by a lane change in `h` from lateral position `y`.
double lane_change_target(double y, Hypothesis h, double lane_width) {
  constexpr double eps = 0.05;
  if (h == Hypothesis::change_left) {
    return (std::ceil((y - eps) / lane_width) - 1.0) * lane_width;
  }
  return (std::floor((y + eps) / lane_width) + 1.0) * lane_width;
}

struct LateralProfile {
  double from = 0.0;
  double to = 0.0;
  double duration = 0.0;

  double at(double t) const {
    if (duration <= 0.0) return to;
    return from + (to - from) * lane_change_progress(t / duration);
  }
};

LateralProfile make_profile(double from, double to, double lane_width,
                            double full_duration) {
  const double dist = std::abs(to - from);
  if (dist < 1e-9) return {from, to, 0.0};
  return {from, to, std::max(0.5, full_duration * std::min(1.0, dist / lane_width))};
}

std::optional<LeadInfo> find_lead(double ego_s, double ego_y, double ego_width,
                                  const std::vector<AgentSample>& agents,
                                  double margin) {
  std::optional<LeadInfo> lead;
  for (const auto& a : agents) {
    if (a.s <= ego_s) continue;
    if (!lateral_overlap(ego_y, ego_width, a.lateral, a.width, margin)) continue;
    const double g = (a.s - a.length) - ego_s;
    if (!lead || g < lead->gap) lead = LeadInfo{g, a.vel, a.hazard};
  }
  return lead;
}

}  // namespace

std::string_view to_string(ManeuverKind k) {
  switch (k) {
    case ManeuverKind::keep_lane_cruise: return "keep_lane_cruise";
    case ManeuverKind::keep_lane_decelerate: return "keep_lane_decelerate";
    case ManeuverKind::change_left: return "change_left";
    case ManeuverKind::change_right: return "change_right";
  }
  return "keep_lane_cruise";
}

ManeuverKind maneuver_kind_from_string(std::string_view s) {
  if (s == "keep_lane_cruise") return ManeuverKind::keep_lane_cruise;
  if (s == "keep_lane_decelerate") return ManeuverKind::keep_lane_decelerate;
  if (s == "change_left") return ManeuverKind::change_left;
  if (s == "change_right") return ManeuverKind::change_right;
  throw std::invalid_argument("unknown maneuver kind '" + std::string(s) + "'");
}

void PlannerConfig::validate() const {
  if (!(w_risk > 0.0 && w_comfort > 0.0 && w_efficiency > 0.0)) {
    throw std::invalid_argument("planner weights must be positive");
  }
  if (!(planning_range > 0.0)) throw std::invalid_argument("planning_range must be positive");
  if (!(horizon > 0.0 && rollout_step > 0.0 && rollout_step <= horizon)) {
    throw std::invalid_argument("planner horizon/rollout_step invalid");
  }
  if (!(caution_thw_target > safe_thw_target && safe_thw_target > 0.0)) {
    throw std::invalid_argument("caution_thw_target must exceed safe_thw_target > 0");
  }
  if (!(hysteresis_margin >= 0.0 && hysteresis_margin < 1.0)) {
    throw std::invalid_argument("hysteresis_margin must be in [0, 1)");
  }
  for (double l : decel_levels) {
    if (!(l > 0.0 && l <= -accel_min)) {
      throw std::invalid_argument("decel levels must be in (0, -accel_min]");
    }
  }
  if (!(accel_min < 0.0 && accel_max > 0.0)) {
    throw std::invalid_argument("accel limits must bracket zero");
  }
  if (!(desired_speed > 0.0)) throw std::invalid_argument("desired_speed must be positive");
}

double follow_accel(const ManeuverCandidate& candidate, double vel,
                    const std::optional<LeadInfo>& lead,
                    const PlannerConfig& config) {
  if (candidate.emergency) return config.accel_min;

  double mode;
  if (candidate.kind == ManeuverKind::keep_lane_decelerate &&
      vel > candidate.target_speed) {
    mode = -candidate.decel_level;
  } else {
    const double v0 = std::max(candidate.target_speed, 0.1);
    mode = config.idm_max_accel * (1.0 - std::pow(vel / v0, config.idm_delta));
  }

  double interaction = kInf;
  if (lead) {
    if (lead->gap <= 0.1) {
      interaction = config.accel_min;
    } else {
      const double thw = lead->hazard ? config.caution_thw_target : config.safe_thw_target;
      const double dv = vel - lead->vel;
      const double s_star = std::max(
          config.idm_min_gap,
          vel * thw + vel * dv /
                          (2.0 * std::sqrt(config.idm_max_accel * config.idm_comfort_decel)));
      interaction = config.idm_max_accel * (1.0 - sq(s_star / lead->gap));
    }
  }
  return std::clamp(std::min(mode, interaction), config.accel_min, config.accel_max);
}

std::vector<VehicleId> consideration_set(const TrafficScene& scene,
                                         const PlannerConfig& config) {
  std::vector<VehicleId> out;
  const auto& ego = scene.ego;
  for (const auto& o : scene.others) {
    const bool near_lane = std::abs(o.lane - ego.lane) <= 1 ||
                           std::abs(o.lane - scene.ego_target_lane) <= 1;
    if (!near_lane) continue;
    const double ahead = gap(ego, o);
    const double behind = gap(o, ego);
    const double dist = ahead >= 0.0 ? ahead : (behind >= 0.0 ? behind : 0.0);
    if (dist > config.planning_range) continue;
    out.push_back(o.id);
  }
  return out;
}

std::vector<ManeuverCandidate> generate_candidates(const TrafficScene& scene,
                                                   const PlannerConfig& config) {
  std::vector<ManeuverCandidate> out;
  const auto& ego = scene.ego;
  const int ref_lane = scene.ego_target_lane;

  ManeuverCandidate cruise;
  cruise.kind = ManeuverKind::keep_lane_cruise;
  cruise.target_speed = config.desired_speed;
  cruise.horizon = config.horizon;
  cruise.target_lane = ref_lane;
  out.push_back(cruise);

  for (double level : config.decel_levels) {
    ManeuverCandidate dec = cruise;
    dec.kind = ManeuverKind::keep_lane_decelerate;
    dec.decel_level = level;
    dec.target_speed = std::max(0.0, ego.vel - level * config.decel_window);
    out.push_back(dec);
  }

  if (!scene.road) return out;
  const RoadModel& road = *scene.road;
  const double w = road.lane_width();
  const bool settled = ref_lane == ego.lane && std::abs(ego.lateral_offset) < 0.1 * w &&
                       std::abs(ego.lateral_vel) < 0.1;
  if (!settled) return out;

  const double lookahead = ego.vel * config.horizon + 50.0;
  auto feasible = [&](int target) {
    if (!road.lane_exists(ego.s, target)) return false;
    if (road.crossing_marking(ego.s, ego.lane, target) != Marking::dashed) return false;
    if (road.is_diverging_lane(ego.s, target)) return false;
    const auto end = road.distance_to_lane_end(ego.s, target);
    return !end || *end > lookahead;
  };
  for (auto [kind, target] : {std::pair{ManeuverKind::change_left, ego.lane - 1},
                              std::pair{ManeuverKind::change_right, ego.lane + 1}}) {
    if (!feasible(target)) continue;
    ManeuverCandidate c = cruise;
    c.kind = kind;
    c.target_lane = target;
    out.push_back(c);
  }
  return out;
}

std::vector<RolloutSample> rollout(const TrafficScene& scene,
                                   const std::vector<BehaviorPrediction>& predictions,
                                   const ManeuverCandidate& candidate,
                                   const std::vector<VehicleId>& considered,
                                   const PlannerConfig& config,
                                   double plan_threshold) {
  const double w = scene.road ? scene.road->lane_width() : 3.5;
  const auto& ego = scene.ego;

  struct Agent {
    AgentSample start;
    LateralProfile lateral;
  };
  std::vector<Agent> agents;
  agents.reserve(considered.size());
  for (VehicleId id : considered) {
    const VehicleState* v = scene.find(id);
    if (v == nullptr || v->id == ego.id) continue;
    const PredictedIntent intent = predicted_intent(id, predictions, plan_threshold);
    Agent a;
    a.start.id = id;
    a.start.s = v->s;
    a.start.lateral = v->lateral_position(w);
    a.start.vel = v->vel;
    a.start.length = v->length;
    a.start.hazard = intent.hazard;
    a.start.width = v->width + (intent.hazard ? config.hazard_width_inflation : 0.0);
    a.start.rear_relevant = v->lane != ego.lane;
    const double y0 = a.start.lateral;
    double y1 = y0;
    if (intent.lateral == Hypothesis::change_left ||
        intent.lateral == Hypothesis::change_right) {
      y1 = lane_change_target(y0, intent.lateral, w);
    }
    a.lateral = make_profile(y0, y1, w, config.lane_change_duration);
    agents.push_back(a);
  }

  const LateralProfile ego_lateral = make_profile(
      ego.lateral_position(w), candidate.target_lane * w, w, config.lane_change_duration);

  const int steps = static_cast<int>(std::llround(config.horizon / config.rollout_step));
  const double dt = config.rollout_step;
  std::vector<RolloutSample> out;
  out.reserve(static_cast<std::size_t>(steps) + 1);

  double s = ego.s;
  double v = ego.vel;
  for (int k = 0; k <= steps; ++k) {
    const double t = k * dt;
    RolloutSample sample;
    sample.others.reserve(agents.size());
    for (const auto& a : agents) {
      AgentSample as = a.start;
      as.s = a.start.s + a.start.vel * t;
      as.lateral = a.lateral.at(t);
      sample.others.push_back(as);
    }
    const double y = ego_lateral.at(t);
    const auto lead = find_lead(s, y, ego.width, sample.others, config.lateral_margin);
    const double acc = follow_accel(candidate, v, lead, config);
    sample.ego = EgoSample{t, s, y, v, acc, ego.length, ego.width};
    out.push_back(std::move(sample));

    const double v_next = std::max(0.0, v + acc * dt);
    s += 0.5 * (v + v_next) * dt;
    v = v_next;
  }
  return out;
}

CostBreakdown cost(const std::vector<RolloutSample>& samples,
                   const ManeuverCandidate& candidate,
                   const PlannerConfig& config) {
  CostBreakdown c;
  double peak_accel = 0.0;
  double speed_error = 0.0;
  for (const auto& sample : samples) {
    const auto& e = sample.ego;
    peak_accel = std::max(peak_accel, std::abs(e.accel));
    speed_error += std::abs(e.vel - config.desired_speed);
    for (const auto& a : sample.others) {
      if (!lateral_overlap(e.lateral, e.width, a.lateral, a.width, config.lateral_margin)) {
        continue;
      }
      const double front_gap = (a.s - a.length) - e.s;
      const double rear_gap = (e.s - e.length) - a.s;
      if (front_gap < 0.0 && rear_gap < 0.0) {
        c.collision = true;
        continue;
      }
      double ttc;
      double thw;
      double thw_ref = config.safe_thw_target;
      if (front_gap >= 0.0) {
        const double closing = e.vel - a.vel;
        ttc = closing > 0.0 ? front_gap / closing : kInf;
        thw = e.vel > 0.0 ? front_gap / e.vel : kInf;
        if (a.hazard) thw_ref = config.caution_thw_target;
      } else {
        if (!a.rear_relevant) continue;
        const double closing = a.vel - e.vel;
        ttc = closing > 0.0 ? rear_gap / closing : kInf;
        thw = a.vel > 0.0 ? rear_gap / a.vel : kInf;
      }
      const double penalty = sq(std::max(0.0, 1.0 - ttc / config.ttc_reference)) +
                             sq(std::max(0.0, 1.0 - thw / thw_ref));
      c.risk = std::max(c.risk, penalty);
    }
  }
  if (c.collision) c.risk = config.collision_penalty;
  c.comfort = peak_accel + (candidate.changes_lane() ? config.lane_change_penalty : 0.0);
  c.efficiency = samples.empty() ? 0.0 : speed_error / static_cast<double>(samples.size());
  c.total = config.w_risk * c.risk + config.w_comfort * c.comfort +
            config.w_efficiency * c.efficiency;
  return c;
}

PlanResult plan(const TrafficScene& scene,
                const std::vector<BehaviorPrediction>& predictions,
                const PlannerConfig& config, double plan_threshold,
                const std::optional<ManeuverCandidate>& previous) {
  PlanResult result;
  const auto considered = consideration_set(scene, config);
  for (const auto& cand : generate_candidates(scene, config)) {
    PlanTrace trace;
    trace.candidate = cand;
    trace.rollout = rollout(scene, predictions, cand, considered, config, plan_threshold);
    trace.cost = cost(trace.rollout, cand, config);
    trace.considered = considered;
    result.candidates.push_back(std::move(trace));
  }

  const bool all_collide = std::all_of(result.candidates.begin(), result.candidates.end(),
                                       [](const PlanTrace& t) { return t.cost.collision; });
  std::size_t chosen = 0;
  if (all_collide) {
    ManeuverCandidate fallback;
    fallback.kind = ManeuverKind::keep_lane_decelerate;
    fallback.decel_level = -config.accel_min;
    fallback.target_speed = 0.0;
    fallback.horizon = config.horizon;
    fallback.target_lane = scene.ego_target_lane;
    fallback.emergency = true;
    PlanTrace trace;
    trace.candidate = fallback;
    trace.rollout = rollout(scene, predictions, fallback, considered, config, plan_threshold);
    trace.cost = cost(trace.rollout, fallback, config);
    trace.considered = considered;
    result.candidates.push_back(std::move(trace));
    chosen = result.candidates.size() - 1;
  } else {
    for (std::size_t i = 1; i < result.candidates.size(); ++i) {
      if (result.candidates[i].cost.total < result.candidates[chosen].cost.total) chosen = i;
    }
    if (previous) {
      for (std::size_t i = 0; i < result.candidates.size(); ++i) {
        const auto& t = result.candidates[i];
        if (!t.candidate.same_maneuver(*previous) || t.cost.collision) continue;
        const double challenger = result.candidates[chosen].cost.total;
        if (!(challenger < t.cost.total * (1.0 - config.hysteresis_margin))) chosen = i;
        break;
      }
    }
  }
  result.candidates[chosen].chosen = true;
  result.chosen = result.candidates[chosen];
  return result;
}

LongLatCommand ego_command(const PlanTrace& plan, const TrafficScene& scene,
                           const std::vector<BehaviorPrediction>& predictions,
                           const PlannerConfig& config, double plan_threshold) {
  const double w = scene.road ? scene.road->lane_width() : 3.5;
  const auto& ego = scene.ego;
  const auto& cand = plan.candidate;
  const double y_now = ego.lateral_position(w);
  const double y_target = cand.target_lane * w;

  std::optional<LeadInfo> lead;
  for (const auto& o : scene.others) {
    if (o.center_s() <= ego.center_s()) continue;
    const bool hazard = predicted_intent(o.id, predictions, plan_threshold).hazard;
    const double width = o.width + (hazard ? config.hazard_width_inflation : 0.0);
    const double y = o.lateral_position(w);
    if (!lateral_overlap(y_now, ego.width, y, width, config.lateral_margin) &&
        !lateral_overlap(y_target, ego.width, y, width, config.lateral_margin)) {
      continue;
    }
    const double g = gap(ego, o);
    if (!lead || g < lead->gap) lead = LeadInfo{g, o.vel, hazard};
  }

  LongLatCommand cmd;
  cmd.accel = follow_accel(cand, ego.vel, lead, config);
  cmd.lane_change_duration = config.lane_change_duration;
  if (cand.changes_lane() && scene.ego_target_lane == ego.lane &&
      cand.target_lane != ego.lane) {
    cmd.lane_change_target = cand.target_lane;
  }
  return cmd;
}

}  // namespace coopdrive
