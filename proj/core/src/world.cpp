#include "coopdrive/world.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <random>

namespace coopdrive {

namespace {

constexpr double kLateralMargin = 0.2;
constexpr double kMinFrontGap = 3.0;
constexpr double kMinRearTtc = 2.5;
constexpr double kScriptedAccelMin = -8.0;
constexpr double kScriptedAccelMax = 3.0;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  // splitmix64 finaliser
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double idm_interaction(const IdmParams& p, double vel, double lead_vel, double gap) {
  if (gap <= 0.1) return kScriptedAccelMin;
  const double dv = vel - lead_vel;
  const double s_star = std::max(
      p.min_gap, vel * p.time_headway + vel * dv / (2.0 * std::sqrt(p.max_accel * p.comfort_decel)));
  const double r = s_star / gap;
  return p.max_accel * (1.0 - r * r);
}

}  // namespace

std::string_view to_string(ScenarioId id) {
  switch (id) {
    case ScenarioId::a_cut_in: return "a-cut-in";
    case ScenarioId::b_tailgating: return "b-tailgating";
    case ScenarioId::c_merge_in: return "c-merge-in";
    case ScenarioId::d_double_lane_change: return "d-double-lane-change";
    case ScenarioId::e_drunk_driver: return "e-drunk-driver";
  }
  return "a-cut-in";
}

ScenarioId scenario_id_from_string(std::string_view s) {
  for (ScenarioId id : kAllScenarios) {
    const auto name = to_string(id);
    if (s == name || (s.size() == 1 && s[0] == name[0])) return id;
  }
  throw ScenarioError("unknown scenario id '" + std::string(s) + "'");
}

std::string_view to_string(Trigger::Kind k) {
  switch (k) {
    case Trigger::Kind::ego_gap_below: return "ego_gap_below";
    case Trigger::Kind::ego_ttc_below: return "ego_ttc_below";
    case Trigger::Kind::sim_time: return "sim_time";
    case Trigger::Kind::position: return "position";
  }
  return "sim_time";
}

Trigger::Kind trigger_kind_from_string(std::string_view s) {
  if (s == "ego_gap_below") return Trigger::Kind::ego_gap_below;
  if (s == "ego_ttc_below") return Trigger::Kind::ego_ttc_below;
  if (s == "sim_time") return Trigger::Kind::sim_time;
  if (s == "position") return Trigger::Kind::position;
  throw ScenarioError("unknown trigger kind '" + std::string(s) + "'");
}

std::string_view to_string(ProgramPhase::Kind k) {
  switch (k) {
    case ProgramPhase::Kind::hold_speed: return "hold_speed";
    case ProgramPhase::Kind::accelerate_to: return "accelerate_to";
    case ProgramPhase::Kind::follow_idm: return "follow_idm";
    case ProgramPhase::Kind::lane_change_to: return "lane_change_to";
    case ProgramPhase::Kind::swerve: return "swerve";
    case ProgramPhase::Kind::speed_noise: return "speed_noise";
  }
  return "hold_speed";
}

ProgramPhase::Kind phase_kind_from_string(std::string_view s) {
  using K = ProgramPhase::Kind;
  for (K k : {K::hold_speed, K::accelerate_to, K::follow_idm, K::lane_change_to, K::swerve,
              K::speed_noise}) {
    if (s == to_string(k)) return k;
  }
  throw ScenarioError("unknown program phase '" + std::string(s) + "'");
}

std::string_view to_string(SessionSpec::Phase p) {
  switch (p) {
    case SessionSpec::Phase::baseline1: return "baseline1";
    case SessionSpec::Phase::intervention: return "intervention";
    case SessionSpec::Phase::baseline2: return "baseline2";
  }
  return "baseline1";
}

SessionSpec::Phase session_phase_from_string(std::string_view s) {
  if (s == "baseline1") return SessionSpec::Phase::baseline1;
  if (s == "intervention") return SessionSpec::Phase::intervention;
  if (s == "baseline2") return SessionSpec::Phase::baseline2;
  throw std::invalid_argument("unknown session phase '" + std::string(s) + "'");
}

std::string_view to_string(WorldEvent::Kind k) {
  switch (k) {
    case WorldEvent::Kind::retired: return "retired";
    case WorldEvent::Kind::phase_activated: return "phase_activated";
    case WorldEvent::Kind::lane_change_started: return "lane_change_started";
    case WorldEvent::Kind::lane_change_skipped: return "lane_change_skipped";
  }
  return "retired";
}

void ScenarioScript::validate() const {
  if (!road) throw ScenarioError("scenario has no road");
  road->validate();
  if (!(duration > 0.0)) throw ScenarioError("scenario duration must be positive");
  const double w = road->lane_width();

  std::vector<const VehicleState*> all{&ego};
  for (const auto& v : vehicles) all.push_back(&v.initial);
  for (std::size_t i = 0; i < all.size(); ++i) {
    const auto& v = *all[i];
    if (!road->lane_exists(v.s, v.lane)) {
      throw ScenarioError("vehicle " + std::to_string(v.id.value) + " starts off the road");
    }
    if (!(v.length > 0.0) || !(v.width > 0.0) || v.vel < 0.0) {
      throw ScenarioError("vehicle " + std::to_string(v.id.value) + " has invalid dimensions");
    }
    if (std::abs(v.lateral_offset) >= w) {
      throw ScenarioError("vehicle " + std::to_string(v.id.value) + " lateral offset too large");
    }
    for (std::size_t j = 0; j < i; ++j) {
      const auto& u = *all[j];
      if (u.id == v.id) throw ScenarioError("duplicate vehicle id " + std::to_string(v.id.value));
      if (u.lane == v.lane && gap(u, v) < 0.0 && gap(v, u) < 0.0) {
        throw ScenarioError("vehicles " + std::to_string(u.id.value) + " and " +
                            std::to_string(v.id.value) + " overlap");
      }
    }
  }
  for (const auto& v : vehicles) {
    for (const auto& p : v.program.phases) {
      if (p.trigger && !(p.trigger->threshold > 0.0)) {
        throw ScenarioError("trigger thresholds must be positive (vehicle " + v.tag + ")");
      }
      if (p.kind == ProgramPhase::Kind::swerve && !(p.amplitude < 0.5 * w)) {
        throw ScenarioError("swerve amplitude must be below half a lane width");
      }
      if (p.kind == ProgramPhase::Kind::accelerate_to && !p.speed) {
        throw ScenarioError("accelerate_to needs a speed");
      }
      if (p.kind == ProgramPhase::Kind::lane_change_to && !(p.duration > 0.0)) {
        throw ScenarioError("lane_change_to needs a positive duration");
      }
    }
  }
}

void SessionSpec::validate() const {
  if (clips.size() != 3) throw ScenarioError("a session has exactly three clips");
  for (const auto& clip : clips) {
    if (clip.empty()) throw ScenarioError("empty clip in session");
  }
}

SessionSpec SessionSpec::default_session(Phase phase, std::uint64_t seed) {
  using S = ScenarioId;
  SessionSpec spec;
  spec.phase = phase;
  spec.seed = seed;
  spec.clips = {{S::d_double_lane_change, S::c_merge_in, S::a_cut_in},
                {S::b_tailgating, S::e_drunk_driver, S::a_cut_in},
                {S::e_drunk_driver, S::b_tailgating, S::c_merge_in}};
  return spec;
}

World::World(ScenarioScript script, std::uint64_t seed, double dt)
    : script_(std::move(script)), seed_(seed), dt_(dt) {
  if (!(dt_ > 0.0)) throw std::invalid_argument("world step must be positive");
  script_.validate();
  const double w = script_.road->lane_width();
  ego_ = script_.ego;
  ego_.id = kEgoId;
  ego_lateral_pos_ = ego_.lateral_position(w);

  for (const auto& v : script_.vehicles) {
    Agent a;
    a.state = v.initial;
    a.tag = v.tag;
    a.program = v.program;
    a.lateral = v.initial.lateral_position(w);
    a.target_speed = v.initial.vel;
    a.idm = v.program.interaction;
    std::mt19937_64 rng(mix_seed(seed_, v.initial.id.value));
    a.noise_phase[0] = 2.0 * std::numbers::pi * unit_uniform(rng());
    a.noise_phase[1] = 2.0 * std::numbers::pi * unit_uniform(rng());
    agents_.push_back(std::move(a));
  }
  for (auto& a : agents_) activate_phases(a);
  publish();
}

std::optional<VehicleId> World::vehicle_for_tag(std::string_view tag) const {
  for (const auto& a : agents_) {
    if (a.tag == tag) return a.state.id;
  }
  return std::nullopt;
}

std::vector<WorldEvent> World::drain_events() {
  std::vector<WorldEvent> out;
  out.swap(events_);
  return out;
}

bool World::trigger_fires(const Trigger& t, const Agent& a) const {
  switch (t.kind) {
    case Trigger::Kind::ego_gap_below: {
      const double g = gap(ego_, a.state);
      return g >= 0.0 && g < t.threshold;
    }
    case Trigger::Kind::ego_ttc_below: {
      const double g = gap(ego_, a.state);
      const double closing = ego_.vel - a.state.vel;
      return g >= 0.0 && closing > 0.0 && g / closing < t.threshold;
    }
    case Trigger::Kind::sim_time:
      return static_cast<double>(tick_) * dt_ >= t.threshold;
    case Trigger::Kind::position:
      return a.state.s >= t.threshold;
  }
  return false;
}

void World::activate_phases(Agent& a) {
  while (a.next_phase < a.program.phases.size()) {
    const ProgramPhase& p = a.program.phases[a.next_phase];
    if (p.trigger && !trigger_fires(*p.trigger, a)) break;
    ++a.next_phase;
    activate(a, p);
  }
}

void World::activate(Agent& a, const ProgramPhase& p) {
  const double w = script_.road->lane_width();
  events_.push_back({WorldEvent::Kind::phase_activated, tick_, a.state.id,
                     std::string(to_string(p.kind))});
  switch (p.kind) {
    case ProgramPhase::Kind::hold_speed:
      a.mode = LongMode::hold;
      a.target_speed = p.speed.value_or(a.state.vel);
      break;
    case ProgramPhase::Kind::accelerate_to:
      a.mode = LongMode::accelerate_to;
      a.target_speed = *p.speed;
      a.rate = p.rate;
      break;
    case ProgramPhase::Kind::follow_idm:
      a.mode = LongMode::idm;
      a.idm = p.idm;
      break;
    case ProgramPhase::Kind::speed_noise:
      a.mode = LongMode::noise;
      a.target_speed = p.speed.value_or(a.state.vel);
      a.noise_range = p.range;
      break;
    case ProgramPhase::Kind::lane_change_to:
      if (!script_.road->lane_exists(a.state.s, p.lane)) {
        events_.push_back({WorldEvent::Kind::lane_change_skipped, tick_, a.state.id,
                           "lane " + std::to_string(p.lane) + " does not exist"});
        break;
      }
      a.pending = PendingLaneChange{
          p.lane, std::max<std::int64_t>(1, std::llround(p.duration / dt_)), p.min_rear_gap};
      break;
    case ProgramPhase::Kind::swerve:
      a.swerve_amplitude = p.amplitude;
      a.swerve_period = p.period;
      a.swerve_start_tick = tick_;
      a.swerve_center = a.state.lane * w;
      break;
  }
}

bool World::lane_change_acceptable(const Agent& a, int lane) const {
  const double w = script_.road->lane_width();
  const double target_y = lane * w;
  auto check = [&](const VehicleState& o, double o_lateral) {
    if (!lateral_overlap(target_y, a.state.width, o_lateral, o.width, kLateralMargin)) {
      return true;
    }
    if (o.center_s() > a.state.center_s()) return gap(a.state, o) >= kMinFrontGap;
    const double rear_gap = gap(o, a.state);
    if (rear_gap < a.pending->min_rear_gap) return false;
    const double closing = o.vel - a.state.vel;
    return closing <= 0.0 || rear_gap / closing >= kMinRearTtc;
  };
  if (!check(ego_, ego_lateral_pos_)) return false;
  for (const auto& o : agents_) {
    if (&o == &a || o.retired) continue;
    if (!check(o.state, o.lateral)) return false;
  }
  return true;
}

double World::agent_accel(const Agent& a, double time) const {
  const double w = script_.road->lane_width();
  const double v = a.state.vel;
  const double target_y = a.lane_change ? a.lane_change->to : a.lateral;

  std::optional<std::pair<double, double>> lead;  // gap, velocity
  auto consider = [&](const VehicleState& o, double o_lateral) {
    if (o.center_s() <= a.state.center_s()) return;
    if (!lateral_overlap(a.lateral, a.state.width, o_lateral, o.width, kLateralMargin) &&
        !lateral_overlap(target_y, a.state.width, o_lateral, o.width, kLateralMargin)) {
      return;
    }
    const double g = gap(a.state, o);
    if (!lead || g < lead->first) lead = std::pair{g, o.vel};
  };
  consider(ego_, ego_lateral_pos_);
  for (const auto& o : agents_) {
    if (&o != &a && !o.retired) consider(o.state, o.lateral);
  }
  (void)w;

  double mode = 0.0;
  switch (a.mode) {
    case LongMode::hold:
      mode = std::clamp(a.target_speed - v, -2.0, 1.5);
      break;
    case LongMode::accelerate_to:
      mode = std::clamp((a.target_speed - v) / dt_, -a.rate, a.rate);
      break;
    case LongMode::idm:
      mode = a.idm.max_accel * (1.0 - std::pow(v / std::max(a.idm.desired_speed, 0.1), a.idm.delta));
      break;
    case LongMode::noise: {
      constexpr double two_pi = 2.0 * std::numbers::pi;
      const double wobble = 0.6 * std::sin(two_pi * time / 11.0 + a.noise_phase[0]) +
                            0.4 * std::sin(two_pi * time / 4.7 + a.noise_phase[1]);
      mode = std::clamp(a.target_speed + a.noise_range * wobble - v, -3.0, 2.0);
      break;
    }
  }
  double acc = mode;
  if (lead) acc = std::min(acc, idm_interaction(a.idm, v, lead->second, lead->first));
  return std::clamp(acc, kScriptedAccelMin, kScriptedAccelMax);
}

const TrafficScene& World::step(double dt, const LongLatCommand& ego_command) {
  if (dt != dt_) throw std::invalid_argument("step size differs from the configured dt");
  const double w = script_.road->lane_width();
  const double time = static_cast<double>(tick_) * dt_;

  for (auto& a : agents_) {
    if (a.retired) continue;
    activate_phases(a);
    if (a.pending && !a.lane_change && lane_change_acceptable(a, a.pending->lane)) {
      a.lane_change = LateralManeuver{a.lateral, a.pending->lane * w, tick_, a.pending->steps};
      events_.push_back({WorldEvent::Kind::lane_change_started, tick_, a.state.id,
                         "to lane " + std::to_string(a.pending->lane)});
      a.pending.reset();
    }
  }
  if (ego_command.lane_change_target && !ego_lateral_) {
    const std::int64_t steps =
        std::max<std::int64_t>(1, std::llround(ego_command.lane_change_duration / dt_));
    ego_lateral_ = LateralManeuver{ego_lateral_pos_, *ego_command.lane_change_target * w,
                                   tick_, steps};
    events_.push_back({WorldEvent::Kind::lane_change_started, tick_, ego_.id,
                       "to lane " + std::to_string(*ego_command.lane_change_target)});
  }

  // Accelerations from the current state, then a synchronous update.
  std::vector<double> accels(agents_.size(), 0.0);
  for (std::size_t i = 0; i < agents_.size(); ++i) {
    if (!agents_[i].retired) accels[i] = agent_accel(agents_[i], time);
  }
  const std::int64_t next_tick = tick_ + 1;

  auto advance_long = [&](VehicleState& st, double acc) {
    const double v_next = std::max(0.0, st.vel + acc * dt_);
    st.s += 0.5 * (st.vel + v_next) * dt_;
    st.accel = acc;
    st.vel = v_next;
  };
  auto advance_lat = [&](std::optional<LateralManeuver>& m, double& lateral) {
    if (!m) return;
    const double tau = static_cast<double>(next_tick - m->start_tick) /
                       static_cast<double>(m->steps);
    if (tau >= 1.0) {
      lateral = m->to;
      m.reset();
    } else {
      lateral = m->from + (m->to - m->from) * lane_change_progress(tau);
    }
  };
  auto sync_lane = [&](VehicleState& st, double lateral, double previous) {
    const auto lp = lane_position_from_lateral(lateral, w);
    st.lane = lp.lane;
    st.lateral_offset = lp.offset;
    st.lateral_vel = (lateral - previous) / dt_;
  };

  for (std::size_t i = 0; i < agents_.size(); ++i) {
    Agent& a = agents_[i];
    if (a.retired) continue;
    advance_long(a.state, accels[i]);
    const double previous = a.lateral;
    if (a.lane_change) {
      advance_lat(a.lane_change, a.lateral);
      if (!a.lane_change) a.swerve_center = a.lateral;
    } else if (a.swerve_amplitude > 0.0) {
      const double t = static_cast<double>(next_tick - a.swerve_start_tick) * dt_;
      a.lateral = a.swerve_center +
                  a.swerve_amplitude * std::sin(2.0 * std::numbers::pi * t / a.swerve_period);
    }
    sync_lane(a.state, a.lateral, previous);
  }

  {
    const double accel = std::clamp(ego_command.accel, -4.0, 2.0);
    advance_long(ego_, accel);
    const double previous = ego_lateral_pos_;
    advance_lat(ego_lateral_, ego_lateral_pos_);
    sync_lane(ego_, ego_lateral_pos_, previous);
  }

  tick_ = next_tick;
  for (auto& a : agents_) {
    if (a.retired) continue;
    if (!script_.road->lane_exists(a.state.s, a.state.lane) || a.state.s < 0.0) {
      a.retired = true;
      events_.push_back({WorldEvent::Kind::retired, tick_, a.state.id, "left the road"});
    }
  }
  publish();
  return scene_;
}

void World::publish() {
  TrafficScene next;
  next.tick = tick_;
  next.time = static_cast<double>(tick_) * dt_;
  next.road = script_.road;
  next.ego = ego_;
  const double w = script_.road->lane_width();
  next.ego_target_lane =
      ego_lateral_ ? static_cast<int>(std::llround(ego_lateral_->to / w)) : ego_.lane;
  next.others.reserve(agents_.size());
  for (const auto& a : agents_) {
    if (!a.retired) next.others.push_back(a.state);
  }
  scene_ = std::move(next);
}

ScenarioScript apply_jitter(ScenarioScript script, std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed, 0x5CE7A110ULL + static_cast<std::uint64_t>(script.id)));
  for (auto& v : script.vehicles) {
    const double ds = (2.0 * unit_uniform(rng()) - 1.0) * script.jitter_position;
    const double dv = (2.0 * unit_uniform(rng()) - 1.0) * script.jitter_speed;
    v.initial.s += ds;
    v.initial.vel = std::max(0.0, v.initial.vel + dv);
  }
  return script;
}

ScenarioLibrary::ScenarioLibrary(std::filesystem::path dir) : dir_(std::move(dir)) {}

ScenarioLibrary ScenarioLibrary::default_library() {
  if (const char* env = std::getenv("COOPDRIVE_DATA_DIR")) {
    return ScenarioLibrary(std::filesystem::path(env) / "scenarios");
  }
  // Source tree first so uninstalled builds see edits; then the install prefix.
#ifdef COOPDRIVE_DEFAULT_DATA_DIR
  if (std::filesystem::is_directory(COOPDRIVE_DEFAULT_DATA_DIR)) {
    return ScenarioLibrary(std::filesystem::path(COOPDRIVE_DEFAULT_DATA_DIR) / "scenarios");
  }
#endif
#ifdef COOPDRIVE_INSTALL_DATA_DIR
  return ScenarioLibrary(std::filesystem::path(COOPDRIVE_INSTALL_DATA_DIR) / "scenarios");
#else
  return ScenarioLibrary(std::filesystem::path("data") / "scenarios");
#endif
}

std::filesystem::path ScenarioLibrary::path_for(ScenarioId id) const {
  return dir_ / (std::string(to_string(id)) + ".json");
}

ScenarioScript ScenarioLibrary::script(ScenarioId id) const {
  auto script = load_scenario_file(path_for(id));
  if (script.id != id) {
    throw ScenarioError("scenario file " + path_for(id).string() + " declares a different id");
  }
  return script;
}

ScenarioScript ScenarioLibrary::load(ScenarioId id, std::uint64_t seed) const {
  auto script = apply_jitter(this->script(id), seed);
  script.validate();
  return script;
}

World ScenarioLibrary::load_world(ScenarioId id, std::uint64_t seed, double dt) const {
  return World(load(id, seed), seed, dt);
}

World load_scenario(ScenarioId id, std::uint64_t seed) {
  return ScenarioLibrary::default_library().load_world(id, seed);
}

AppearanceTable randomize_appearance(std::uint64_t seed,
                                     const std::vector<VehicleId>& vehicles) {
  static constexpr const char* kBodies[] = {"sedan", "hatchback", "wagon", "suv", "van"};
  static constexpr const char* kBrands[] = {"aurel", "brisk", "corvan", "delta", "elmo", "fenix"};
  static constexpr const char* kColors[] = {"white", "black", "silver", "blue",
                                            "red",   "green", "yellow", "grey"};
  std::mt19937_64 rng(mix_seed(seed, 0xA77EA12ULL));
  auto pick = [&](std::size_t n) {
    return static_cast<std::size_t>(unit_uniform(rng()) * static_cast<double>(n));
  };
  AppearanceTable table;
  for (VehicleId id : vehicles) {
    std::string token = kBrands[pick(std::size(kBrands))];
    token += '-';
    token += kBodies[pick(std::size(kBodies))];
    token += '-';
    token += kColors[pick(std::size(kColors))];
    table[id] = std::move(token);
  }
  return table;
}

std::string style_for(const AppearanceTable& table, VehicleId id) {
  const auto it = table.find(id);
  return it == table.end() ? std::string("default") : it->second;
}

}  // namespace coopdrive
