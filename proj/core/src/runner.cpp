#include "coopdrive/runner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "json_util.hpp"

namespace coopdrive {

using nlohmann::json;
using detail::get_or;

namespace {

constexpr int kLogVersion = 1;

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ULL + salt;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// ---- config sections ------------------------------------------------------

#define COOPDRIVE_FIELD(obj, j, name) obj.name = get_or(j, #name, obj.name)

PredictorConfig predictor_from(const json& j) {
  PredictorConfig c;
  if (const auto it = j.find("ttc_window"); it != j.end()) {
    c.ttc_min = it->at(0).get<double>();
    c.ttc_max = it->at(1).get<double>();
  }
  COOPDRIVE_FIELD(c, j, headway_threshold);
  COOPDRIVE_FIELD(c, j, predecessor_range);
  COOPDRIVE_FIELD(c, j, lateral_vel_gain);
  COOPDRIVE_FIELD(c, j, ttc_gain);
  COOPDRIVE_FIELD(c, j, headway_gain);
  COOPDRIVE_FIELD(c, j, accel_gain);
  COOPDRIVE_FIELD(c, j, bias);
  COOPDRIVE_FIELD(c, j, display_threshold);
  COOPDRIVE_FIELD(c, j, plan_threshold);
  COOPDRIVE_FIELD(c, j, inject_probability);
  COOPDRIVE_FIELD(c, j, inject_ttl);
  return c;
}

json predictor_json(const PredictorConfig& c) {
  return {{"ttc_window", {c.ttc_min, c.ttc_max}},
          {"headway_threshold", c.headway_threshold},
          {"predecessor_range", c.predecessor_range},
          {"lateral_vel_gain", c.lateral_vel_gain},
          {"ttc_gain", c.ttc_gain},
          {"headway_gain", c.headway_gain},
          {"accel_gain", c.accel_gain},
          {"bias", c.bias},
          {"display_threshold", c.display_threshold},
          {"plan_threshold", c.plan_threshold},
          {"inject_probability", c.inject_probability},
          {"inject_ttl", c.inject_ttl}};
}

PlannerConfig planner_from(const json& j) {
  PlannerConfig c;
  COOPDRIVE_FIELD(c, j, w_risk);
  COOPDRIVE_FIELD(c, j, w_comfort);
  COOPDRIVE_FIELD(c, j, w_efficiency);
  COOPDRIVE_FIELD(c, j, horizon);
  COOPDRIVE_FIELD(c, j, rollout_step);
  COOPDRIVE_FIELD(c, j, planning_range);
  COOPDRIVE_FIELD(c, j, hysteresis_margin);
  COOPDRIVE_FIELD(c, j, safe_thw_target);
  COOPDRIVE_FIELD(c, j, caution_thw_target);
  COOPDRIVE_FIELD(c, j, decel_levels);
  COOPDRIVE_FIELD(c, j, decel_window);
  COOPDRIVE_FIELD(c, j, desired_speed);
  COOPDRIVE_FIELD(c, j, lane_change_duration);
  COOPDRIVE_FIELD(c, j, lane_change_penalty);
  COOPDRIVE_FIELD(c, j, collision_penalty);
  COOPDRIVE_FIELD(c, j, ttc_reference);
  COOPDRIVE_FIELD(c, j, hazard_width_inflation);
  COOPDRIVE_FIELD(c, j, lateral_margin);
  COOPDRIVE_FIELD(c, j, idm_max_accel);
  COOPDRIVE_FIELD(c, j, idm_comfort_decel);
  COOPDRIVE_FIELD(c, j, idm_min_gap);
  COOPDRIVE_FIELD(c, j, idm_delta);
  COOPDRIVE_FIELD(c, j, accel_min);
  COOPDRIVE_FIELD(c, j, accel_max);
  return c;
}

json planner_json(const PlannerConfig& c) {
  return {{"w_risk", c.w_risk},
          {"w_comfort", c.w_comfort},
          {"w_efficiency", c.w_efficiency},
          {"horizon", c.horizon},
          {"rollout_step", c.rollout_step},
          {"planning_range", c.planning_range},
          {"hysteresis_margin", c.hysteresis_margin},
          {"safe_thw_target", c.safe_thw_target},
          {"caution_thw_target", c.caution_thw_target},
          {"decel_levels", c.decel_levels},
          {"decel_window", c.decel_window},
          {"desired_speed", c.desired_speed},
          {"lane_change_duration", c.lane_change_duration},
          {"lane_change_penalty", c.lane_change_penalty},
          {"collision_penalty", c.collision_penalty},
          {"ttc_reference", c.ttc_reference},
          {"hazard_width_inflation", c.hazard_width_inflation},
          {"lateral_margin", c.lateral_margin},
          {"idm_max_accel", c.idm_max_accel},
          {"idm_comfort_decel", c.idm_comfort_decel},
          {"idm_min_gap", c.idm_min_gap},
          {"idm_delta", c.idm_delta},
          {"accel_min", c.accel_min},
          {"accel_max", c.accel_max}};
}

MetricsConfig metrics_from(const json& j) {
  MetricsConfig c;
  COOPDRIVE_FIELD(c, j, ttp_range);
  COOPDRIVE_FIELD(c, j, thw_threshold);
  COOPDRIVE_FIELD(c, j, sample_rate);
  return c;
}

json metrics_json(const MetricsConfig& c) {
  return {{"ttp_range", c.ttp_range},
          {"thw_threshold", c.thw_threshold},
          {"sample_rate", c.sample_rate}};
}

InterventionConfig intervention_from(const json& j) {
  InterventionConfig c;
  COOPDRIVE_FIELD(c, j, cutoff_deg);
  COOPDRIVE_FIELD(c, j, double_tap_window);
  COOPDRIVE_FIELD(c, j, gaze_window);
  COOPDRIVE_FIELD(c, j, tie_epsilon_rad);
  COOPDRIVE_FIELD(c, j, eye_back);
  COOPDRIVE_FIELD(c, j, eye_left);
  COOPDRIVE_FIELD(c, j, eye_height);
  COOPDRIVE_FIELD(c, j, body_center_height);
  COOPDRIVE_FIELD(c, j, gaze_noise_deg);
  return c;
}

json intervention_json(const InterventionConfig& c) {
  return {{"cutoff_deg", c.cutoff_deg},
          {"double_tap_window", c.double_tap_window},
          {"gaze_window", c.gaze_window},
          {"tie_epsilon_rad", c.tie_epsilon_rad},
          {"eye_back", c.eye_back},
          {"eye_left", c.eye_left},
          {"eye_height", c.eye_height},
          {"body_center_height", c.body_center_height},
          {"gaze_noise_deg", c.gaze_noise_deg}};
}

#undef COOPDRIVE_FIELD

Trigger trigger_from(const json& j) {
  Trigger t;
  t.kind = trigger_kind_from_string(j.at("kind").get<std::string>());
  t.threshold = j.at("threshold").get<double>();
  t.once = get_or(j, "once", true);
  return t;
}

json trigger_json(const Trigger& t) {
  return {{"kind", std::string(to_string(t.kind))}, {"threshold", t.threshold}, {"once", t.once}};
}

json session_json(const SessionSpec& s) {
  json clips = json::array();
  for (const auto& clip : s.clips) {
    json c = json::array();
    for (ScenarioId id : clip) c.push_back(std::string(to_string(id)));
    clips.push_back(std::move(c));
  }
  return {{"phase", std::string(to_string(s.phase))}, {"clips", clips}};
}

// ---- log records ----------------------------------------------------------

json stamp(const char* type, int run, std::int64_t tick, double time) {
  return {{"type", type}, {"run", run}, {"tick", tick}, {"time", time}};
}

json input_json(const InputMessage& m) {
  json j{{"kind", std::string(to_string(m.kind))}, {"time", m.time}};
  switch (m.kind) {
    case InputMessage::Kind::gaze:
      j["origin"] = m.origin;
      j["dir"] = m.direction;
      break;
    case InputMessage::Kind::intervene:
      j["vehicle_id"] = m.vehicle.value;
      break;
    case InputMessage::Kind::tap:
      break;
  }
  return j;
}

InputMessage input_from(const json& j) {
  InputMessage m;
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "gaze") {
    m.kind = InputMessage::Kind::gaze;
    m.origin = j.at("origin").get<Vec3>();
    m.direction = j.at("dir").get<Vec3>();
  } else if (kind == "tap") {
    m.kind = InputMessage::Kind::tap;
  } else if (kind == "intervene") {
    m.kind = InputMessage::Kind::intervene;
    m.vehicle = VehicleId{j.at("vehicle_id").get<std::uint32_t>()};
  } else {
    throw ConfigError("unknown input kind '" + kind + "' in log");
  }
  m.time = j.at("time").get<double>();
  return m;
}

bool trigger_fires(const Trigger& t, const TrafficScene& scene, const VehicleState& target) {
  switch (t.kind) {
    case Trigger::Kind::ego_gap_below: {
      const double g = gap(scene.ego, target);
      return g >= 0.0 && g < t.threshold;
    }
    case Trigger::Kind::ego_ttc_below: {
      const double g = gap(scene.ego, target);
      const double closing = scene.ego.vel - target.vel;
      return g >= 0.0 && closing > 0.0 && g / closing < t.threshold;
    }
    case Trigger::Kind::sim_time:
      return scene.time >= t.threshold;
    case Trigger::Kind::position:
      return target.s >= t.threshold;
  }
  return false;
}

}  // namespace

std::string_view to_string(PolicySpec::Kind k) {
  switch (k) {
    case PolicySpec::Kind::none: return "none";
    case PolicySpec::Kind::scripted: return "scripted";
    case PolicySpec::Kind::replay: return "replay";
  }
  return "none";
}

std::string_view to_string(InputMessage::Kind k) {
  switch (k) {
    case InputMessage::Kind::gaze: return "gaze";
    case InputMessage::Kind::tap: return "tap";
    case InputMessage::Kind::intervene: return "intervene";
  }
  return "tap";
}

void RunConfig::validate() const {
  try {
    session.validate();
    predictor.validate();
    planner.validate();
    metrics.validate();
    intervention.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  if (planning_interval < 1) throw ConfigError("planning_interval must be >= 1");
  if (!(broadcast_rate > 0.0)) throw ConfigError("broadcast_rate must be positive");
  const double per_sample = 1.0 / (metrics.sample_rate * dt);
  if (std::abs(per_sample - std::round(per_sample)) > 1e-9 || per_sample < 1.0) {
    throw ConfigError("metrics sample period must be a whole number of steps");
  }
  if (policy.kind == PolicySpec::Kind::replay && !std::filesystem::exists(policy.replay_file)) {
    throw ConfigError("replay file " + policy.replay_file.string() + " does not exist");
  }
  if (scenario_dir && !std::filesystem::is_directory(*scenario_dir)) {
    throw ConfigError("scenario directory " + scenario_dir->string() + " does not exist");
  }
  for (const auto& [scenario, actions] : policy.scripted) {
    try {
      (void)scenario_id_from_string(scenario);
    } catch (const ScenarioError& e) {
      throw ConfigError(std::string("policy: ") + e.what());
    }
    for (const auto& a : actions) {
      if (a.target.empty()) throw ConfigError("policy action without a target tag");
    }
  }
}

PolicySpec::Kind RunConfig::effective_policy() const {
  return session.phase == SessionSpec::Phase::intervention ? policy.kind : PolicySpec::Kind::none;
}

ScenarioLibrary RunConfig::library() const {
  return scenario_dir ? ScenarioLibrary(*scenario_dir) : ScenarioLibrary::default_library();
}

RunConfig parse_run_config(const std::string& json_text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  };
  try {
    RunConfig c;
    c.seed = get_or<std::uint64_t>(j, "seed", 0);
    c.dt = get_or(j, "dt", c.dt);
    c.planning_interval = get_or(j, "planning_interval", c.planning_interval);
    c.broadcast_rate = get_or(j, "broadcast_rate", c.broadcast_rate);

    const json session = get_or(j, "session", json::object());
    const auto phase = session_phase_from_string(get_or<std::string>(session, "phase", "baseline1"));
    c.session = SessionSpec::default_session(phase, c.seed);
    if (const auto it = session.find("clips"); it != session.end()) {
      c.session.clips.clear();
      for (const auto& clip : *it) {
        std::vector<ScenarioId> ids;
        for (const auto& id : clip) ids.push_back(scenario_id_from_string(id.get<std::string>()));
        c.session.clips.push_back(std::move(ids));
      }
    }
    c.predictor = predictor_from(get_or(j, "predictor", json::object()));
    c.planner = planner_from(get_or(j, "planner", json::object()));
    c.metrics = metrics_from(get_or(j, "metrics", json::object()));
    c.intervention = intervention_from(get_or(j, "intervention", json::object()));

    const json policy = get_or(j, "policy", json::object());
    const auto kind = get_or<std::string>(policy, "kind", "none");
    if (kind == "none") {
      c.policy.kind = PolicySpec::Kind::none;
    } else if (kind == "scripted") {
      c.policy.kind = PolicySpec::Kind::scripted;
    } else if (kind == "replay") {
      c.policy.kind = PolicySpec::Kind::replay;
      c.policy.replay_file = resolve(policy.at("file").get<std::string>());
    } else {
      throw ConfigError("unknown policy kind '" + kind + "'");
    }
    if (const auto it = policy.find("scenarios"); it != policy.end()) {
      for (const auto& [scenario, actions] : it->items()) {
        const std::string id(to_string(scenario_id_from_string(scenario)));
        for (const auto& a : actions) {
          c.policy.scripted[id].push_back(
              PolicyAction{trigger_from(a.at("trigger")), a.at("target").get<std::string>()});
        }
      }
    }

    if (const auto it = j.find("scenario_dir"); it != j.end() && !it->is_null()) {
      c.scenario_dir = resolve(it->get<std::string>());
    }
    const json outputs = get_or(j, "outputs", json::object());
    c.outputs.dir = get_or<std::string>(outputs, "dir", c.outputs.dir.string());
    c.outputs.log = get_or(outputs, "log", c.outputs.log);
    c.outputs.report = get_or(outputs, "report", c.outputs.report);
    c.outputs.csv = get_or(outputs, "csv", c.outputs.csv);
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  } catch (const ScenarioError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), path.parent_path());
}

std::string run_config_to_json(const RunConfig& c) {
  json policy{{"kind", std::string(to_string(c.policy.kind))}};
  if (c.policy.kind == PolicySpec::Kind::replay) policy["file"] = c.policy.replay_file.string();
  json scenarios = json::object();
  for (const auto& [id, actions] : c.policy.scripted) {
    json list = json::array();
    for (const auto& a : actions) {
      list.push_back({{"trigger", trigger_json(a.trigger)}, {"target", a.target}});
    }
    scenarios[id] = std::move(list);
  }
  policy["scenarios"] = std::move(scenarios);
  json j{{"seed", c.seed},
         {"dt", c.dt},
         {"planning_interval", c.planning_interval},
         {"broadcast_rate", c.broadcast_rate},
         {"session", session_json(c.session)},
         {"predictor", predictor_json(c.predictor)},
         {"planner", planner_json(c.planner)},
         {"metrics", metrics_json(c.metrics)},
         {"intervention", intervention_json(c.intervention)},
         {"policy", policy},
         {"outputs",
          {{"dir", c.outputs.dir.string()},
           {"log", c.outputs.log},
           {"report", c.outputs.report},
           {"csv", c.outputs.csv}}}};
  if (c.scenario_dir) j["scenario_dir"] = c.scenario_dir->string();
  return j.dump(2);
}

std::vector<RunSlot> session_runs(const SessionSpec& spec) {
  std::vector<RunSlot> out;
  int run = 0;
  for (std::size_t c = 0; c < spec.clips.size(); ++c) {
    for (ScenarioId id : spec.clips[c]) out.push_back({run++, static_cast<int>(c), id});
  }
  return out;
}

// ---- input sources --------------------------------------------------------

ScriptedPolicy::ScriptedPolicy(std::map<std::string, std::vector<PolicyAction>> actions,
                               InterventionConfig gaze, std::uint64_t seed)
    : actions_(std::move(actions)), gaze_(gaze), seed_(seed) {}

std::vector<InputMessage> ScriptedPolicy::inputs(const RunSlot& slot, const World& world) {
  const auto it = actions_.find(std::string(to_string(slot.scenario)));
  if (it == actions_.end()) return {};
  const auto& actions = it->second;
  if (slot.run != run_) {
    run_ = slot.run;
    fired_.assign(actions.size(), false);
    rng_.seed(mix(seed_, 0x6A2E0000ULL + static_cast<std::uint64_t>(slot.run)));
    for (const auto& a : actions) {
      if (!world.vehicle_for_tag(a.target)) {
        throw ConfigError("policy references unknown vehicle tag '" + a.target + "' in " +
                          std::string(to_string(slot.scenario)));
      }
    }
  }
  const TrafficScene& scene = world.scene();
  std::vector<InputMessage> out;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (fired_[i]) continue;
    const auto id = world.vehicle_for_tag(actions[i].target);
    const VehicleState* target = scene.find(*id);
    if (target == nullptr || !trigger_fires(actions[i].trigger, scene, *target)) continue;
    fired_[i] = true;
    const GazeSample g = perturb_gaze(gaze_toward(scene, *id, gaze_), gaze_.gaze_noise_deg, rng_);
    InputMessage gaze_msg;
    gaze_msg.kind = InputMessage::Kind::gaze;
    gaze_msg.time = scene.time;
    gaze_msg.origin = g.origin;
    gaze_msg.direction = g.direction;
    out.push_back(gaze_msg);
    InputMessage tap;
    tap.kind = InputMessage::Kind::tap;
    tap.time = scene.time;
    out.push_back(tap);
    out.push_back(tap);
  }
  return out;
}

ReplayPolicy::ReplayPolicy(const std::filesystem::path& log) {
  for (const auto& line : read_log(log)) {
    const json j = json::parse(line);
    if (j.at("type") != "input") continue;
    by_tick_[{j.at("run").get<int>(), j.at("tick").get<std::int64_t>()}].push_back(
        input_from(j.at("input")));
  }
}

std::vector<InputMessage> ReplayPolicy::inputs(const RunSlot& slot, const World& world) {
  const auto it = by_tick_.find({slot.run, world.scene().tick});
  return it == by_tick_.end() ? std::vector<InputMessage>{} : it->second;
}

void QueuedInputs::push(const InputMessage& m) {
  std::lock_guard lock(mutex_);
  queue_.push_back(m);
}

void QueuedInputs::clear() {
  std::lock_guard lock(mutex_);
  queue_.clear();
}

std::vector<InputMessage> QueuedInputs::inputs(const RunSlot&, const World& world) {
  std::vector<InputMessage> out;
  {
    std::lock_guard lock(mutex_);
    out.swap(queue_);
  }
  for (auto& m : out) m.time = world.scene().time;
  return out;
}

// ---- session runner -------------------------------------------------------

SessionRunner::SessionRunner(RunConfig config, InputSource* inputs, LogSink sink)
    : config_(std::move(config)),
      inputs_(inputs),
      sink_(std::move(sink)),
      library_(config_.library()),
      gateway_(config_.intervention) {
  config_.session.seed = config_.seed;
  config_.validate();
  slots_ = session_runs(config_.session);
  sample_interval_ =
      static_cast<int>(std::llround(1.0 / (config_.metrics.sample_rate * config_.dt)));
}

const RunSlot* SessionRunner::current_slot() const {
  return slot_ < slots_.size() ? &slots_[slot_] : nullptr;
}

void SessionRunner::log(const std::string& line) {
  if (sink_) sink_(line);
}

void SessionRunner::start_run(std::size_t index) {
  const RunSlot& slot = slots_[index];
  world_ = std::make_unique<World>(library_.load(slot.scenario, config_.seed), config_.seed,
                                   config_.dt);
  steps_in_run_ = 0;
  run_steps_ = std::llround(world_->script().duration / config_.dt);
  store_.clear();
  gateway_.reset();
  previous_.reset();
  command_ = LongLatCommand{};
  overlapping_ = false;

  std::vector<VehicleId> ids;
  for (const auto& v : world_->script().vehicles) ids.push_back(v.initial.id);
  const auto phase_salt = static_cast<std::uint64_t>(config_.session.phase) + 1;
  appearance_ = randomize_appearance(mix(config_.seed, phase_salt * 1000 + index), ids);

  const std::string scenario(to_string(slot.scenario));
  run_infos_.push_back({slot.run, slot.clip, scenario});
  const auto& scene = world_->scene();
  json rec = stamp("scenario_marker", slot.run, scene.tick, scene.time);
  rec["event"] = "start";
  rec["clip"] = slot.clip;
  rec["scenario"] = scenario;
  json styles = json::object();
  for (const auto& [id, style] : appearance_) styles[std::to_string(id.value)] = style;
  rec["appearance"] = std::move(styles);
  rec["road"] = detail::road_to_json(*scene.road);
  log(rec.dump());
  record_sample();
}

void SessionRunner::finish_run() {
  const auto& scene = world_->scene();
  json rec = stamp("scenario_marker", slots_[slot_].run, scene.tick, scene.time);
  rec["event"] = "end";
  rec["clip"] = slots_[slot_].clip;
  rec["scenario"] = std::string(to_string(slots_[slot_].scenario));
  log(rec.dump());
}

bool SessionRunner::step() {
  if (finished_) return false;
  if (!started_) {
    started_ = true;
    json header{{"type", "header"},
                {"version", kLogVersion},
                {"phase", std::string(to_string(config_.session.phase))},
                {"seed", config_.seed},
                {"policy", std::string(to_string(config_.effective_policy()))},
                {"config", json::parse(run_config_to_json(config_))}};
    log(header.dump());
    if (slots_.empty()) {
      finished_ = true;
      return false;
    }
    start_run(0);
  }

  if (steps_in_run_ % config_.planning_interval == 0) planning_tick();
  world_->step(command_);
  ++steps_in_run_;

  const RunSlot& slot = slots_[slot_];
  for (const auto& ev : world_->drain_events()) {
    if (ev.kind != WorldEvent::Kind::retired && ev.kind != WorldEvent::Kind::lane_change_skipped) {
      continue;
    }
    json rec = stamp(ev.kind == WorldEvent::Kind::retired ? "retired" : "lane_change_skipped",
                     slot.run, ev.tick, static_cast<double>(ev.tick) * config_.dt);
    rec["vehicle"] = ev.vehicle.value;
    rec["detail"] = ev.detail;
    log(rec.dump());
  }
  check_overlap();
  if (steps_in_run_ % sample_interval_ == 0) record_sample();

  if (steps_in_run_ >= run_steps_) {
    finish_run();
    if (++slot_ < slots_.size()) {
      start_run(slot_);
    } else {
      finished_ = true;
      json rec{{"type", "end"},
               {"ego_overlaps", constraints_.ego_overlaps},
               {"legality_violations", constraints_.legality_violations},
               {"horizon_violations", constraints_.horizon_violations},
               {"horizon_checks", constraints_.horizon_checks},
               {"rejected_inputs", constraints_.rejected_inputs}};
      log(rec.dump());
    }
  }
  return !finished_;
}

void SessionRunner::run_to_end() {
  while (step()) {
  }
}

void SessionRunner::emit_feedback(const std::vector<FeedbackEvent>& events) {
  const RunSlot& slot = slots_[slot_];
  const auto& scene = world_->scene();
  for (const auto& f : events) {
    feedback_.push_back({slot.run, f});
    new_feedback_.push_back(f);
    json rec = stamp("feedback", slot.run, scene.tick, scene.time);
    rec["kind"] = std::string(to_string(f.kind));
    rec["vehicle"] = f.vehicle ? json(f.vehicle->value) : json(nullptr);
    rec["at"] = f.time;
    log(rec.dump());
  }
}

void SessionRunner::handle_inputs(const std::vector<InputMessage>& inputs) {
  const RunSlot& slot = slots_[slot_];
  const auto& scene = world_->scene();
  for (const auto& m : inputs) {
    json rec = stamp("input", slot.run, scene.tick, scene.time);
    rec["input"] = input_json(m);
    log(rec.dump());

    std::optional<TapResult> result;
    switch (m.kind) {
      case InputMessage::Kind::gaze:
        try {
          gateway_.on_gaze(make_gaze(m.origin, m.direction, m.time));
        } catch (const std::invalid_argument&) {
          ++constraints_.rejected_inputs;
        }
        break;
      case InputMessage::Kind::tap:
        if (gateway_.on_tap(m.time)) {
          result = gateway_.process_tap(m.time, scene, store_, config_.predictor, previous_);
        }
        break;
      case InputMessage::Kind::intervene:
        result = gateway_.intervene(m.vehicle, m.time, scene, store_, config_.predictor, previous_);
        break;
    }
    if (!result) continue;
    const auto& ev = result->event;
    json irec = stamp("intervention", slot.run, scene.tick, scene.time);
    irec["tap_time"] = ev.tap_time;
    irec["direct"] = ev.direct;
    irec["vehicle"] = ev.resolution.vehicle ? json(ev.resolution.vehicle->value) : json(nullptr);
    irec["angle_deg"] = std::isfinite(ev.resolution.angle_deg) ? json(ev.resolution.angle_deg)
                                                              : json(nullptr);
    irec["range"] = std::isfinite(ev.resolution.range) ? json(ev.resolution.range) : json(nullptr);
    if (ev.derived) {
      irec["derived"] = detail::prediction_to_json(*ev.derived);
      if (const VehicleState* v = scene.find(ev.derived->vehicle)) {
        irec["target_gap"] = gap(scene.ego, *v);
      }
    }
    log(irec.dump());
    emit_feedback(result->feedback);
  }
}

void SessionRunner::planning_tick() {
  const RunSlot& slot = slots_[slot_];
  const TrafficScene& scene = world_->scene();
  const double now = scene.time;
  const auto& road = *scene.road;
  const double plan_threshold = config_.predictor.plan_threshold;
  const std::size_t feedback_before = feedback_.size();

  if (inputs_ != nullptr) {
    auto incoming = inputs_->inputs(slot, *world_);
    if (!incoming.empty()) {
      if (config_.session.phase == SessionSpec::Phase::intervention) {
        handle_inputs(incoming);
      } else {
        constraints_.rejected_inputs += incoming.size();
        json rec = stamp("rejected", slot.run, scene.tick, scene.time);
        rec["count"] = incoming.size();
        rec["reason"] = "inputs are disabled in baseline phases";
        log(rec.dump());
      }
    }
  }

  store_.expire(now);
  const auto base = predict_base(scene, config_.predictor);
  const auto active = store_.active(now);
  FusionResult fusion = fuse(base, active, scene, road, config_.predictor);
  emit_feedback(gateway_.on_fusion(fusion, now));

  for (const auto& p : fusion.predictions) {
    if (p.hypothesis != Hypothesis::change_left && p.hypothesis != Hypothesis::change_right) {
      continue;
    }
    const VehicleState* v = scene.find(p.vehicle);
    if (v == nullptr || !crosses_solid_boundary(*v, p.hypothesis, road)) continue;
    if (p.probability > probability_of(p.vehicle, p.hypothesis, base)) {
      ++constraints_.legality_violations;
      json rec = stamp("violation", slot.run, scene.tick, now);
      rec["kind"] = "legality";
      rec["vehicle"] = p.vehicle.value;
      log(rec.dump());
    }
  }

  if (previous_ && previous_->changes_lane() && !world_->ego_lane_change_active() &&
      scene.ego.lane == previous_->target_lane) {
    previous_.reset();
  }

  PlanResult result = plan(scene, fusion.predictions, config_.planner, plan_threshold, previous_);
  emit_feedback(gateway_.on_plan(result.chosen.candidate, now));

  // Injections beyond the planning range must not move the plan.
  std::set<VehicleId> far;
  for (const auto& inj : active) {
    const VehicleState* v = scene.find(inj.vehicle);
    if (v != nullptr && gap(scene.ego, *v) > config_.planner.planning_range) far.insert(v->id);
  }
  if (!far.empty()) {
    std::vector<BehaviorPrediction> near;
    for (const auto& inj : active) {
      if (!far.count(inj.vehicle)) near.push_back(inj);
    }
    const auto without = fuse(base, near, scene, road, config_.predictor);
    const auto alt = plan(scene, without.predictions, config_.planner, plan_threshold, previous_);
    ++constraints_.horizon_checks;
    if (!alt.chosen.candidate.same_maneuver(result.chosen.candidate)) {
      ++constraints_.horizon_violations;
      json rec = stamp("violation", slot.run, scene.tick, now);
      rec["kind"] = "horizon";
      log(rec.dump());
    }
  }

  const auto& chosen = result.chosen.candidate;
  if (!previous_ || !previous_->same_maneuver(chosen)) {
    json rec = stamp("plan_change", slot.run, scene.tick, now);
    rec["from"] = previous_ ? json(std::string(to_string(previous_->kind))) : json(nullptr);
    rec["to"] = std::string(to_string(chosen.kind));
    rec["level"] = chosen.decel_level;
    rec["target_lane"] = chosen.target_lane;
    rec["emergency"] = chosen.emergency;
    rec["cost"] = result.chosen.cost.total;
    log(rec.dump());
  }

  previous_ = chosen;
  command_ = ego_command(result.chosen, scene, fusion.predictions, config_.planner, plan_threshold);
  current_plan_ = std::move(result.chosen);
  predictions_ = std::move(fusion.predictions);

  auto snap = std::make_shared<SceneSnapshot>();
  snap->run = slot.run;
  snap->clip = slot.clip;
  snap->scenario = std::string(to_string(slot.scenario));
  snap->phase = std::string(to_string(config_.session.phase));
  snap->scene = scene;
  snap->predictions = predictions_;
  snap->plan = current_plan_;
  for (std::size_t i = feedback_before; i < feedback_.size(); ++i) {
    snap->pending_feedback.push_back(feedback_[i].event);
  }
  snap->appearance = appearance_;
  snapshot_ = std::move(snap);
}

std::shared_ptr<const SceneSnapshot> SessionRunner::capture() const {
  if (!world_) return nullptr;
  auto snap = std::make_shared<SceneSnapshot>();
  const RunSlot& slot = slots_[std::min(slot_, slots_.size() - 1)];
  snap->run = slot.run;
  snap->clip = slot.clip;
  snap->scenario = std::string(to_string(slot.scenario));
  snap->phase = std::string(to_string(config_.session.phase));
  snap->scene = world_->scene();
  snap->predictions = predictions_;
  snap->plan = current_plan_;
  snap->appearance = appearance_;
  return snap;
}

void SessionRunner::record_sample() {
  const RunSlot& slot = slots_[slot_];
  const auto& scene = world_->scene();
  TrafficSample s{scene.tick, scene.time, slot.run, scene.ego, scene.others};

  json rec = stamp("snapshot", slot.run, scene.tick, scene.time);
  rec["ego"] = detail::vehicle_to_json(s.ego);
  json others = json::array();
  for (const auto& o : s.others) others.push_back(detail::vehicle_to_json(o));
  rec["others"] = std::move(others);
  if (previous_) {
    rec["plan"] = {{"kind", std::string(to_string(previous_->kind))},
                   {"level", previous_->decel_level},
                   {"target_lane", previous_->target_lane}};
  }
  json preds = json::array();
  for (const auto& p : predictions_) {
    if (p.hypothesis == Hypothesis::keep) continue;
    if (p.source == PredictionSource::system &&
        p.probability < config_.predictor.display_threshold) {
      continue;
    }
    preds.push_back(detail::prediction_to_json(p));
  }
  rec["predictions"] = std::move(preds);
  log(rec.dump());
  samples_.push_back(std::move(s));
}

void SessionRunner::check_overlap() {
  const auto& scene = world_->scene();
  const double w = scene.road->lane_width();
  const double ego_y = scene.ego.lateral_position(w);
  bool any = false;
  for (const auto& o : scene.others) {
    if (!lateral_overlap(ego_y, scene.ego.width, o.lateral_position(w), o.width)) continue;
    if (gap(scene.ego, o) < 0.0 && gap(o, scene.ego) < 0.0) {
      any = true;
      if (!overlapping_) {
        json rec = stamp("violation", slots_[slot_].run, scene.tick, scene.time);
        rec["kind"] = "overlap";
        rec["vehicle"] = o.id.value;
        log(rec.dump());
      }
    }
  }
  if (any && !overlapping_) ++constraints_.ego_overlaps;
  overlapping_ = any;
}

MetricsReport SessionRunner::report() const {
  return compute_report(std::string(to_string(config_.session.phase)), config_.seed, run_infos_,
                        samples_, feedback_, config_.metrics);
}

std::vector<FeedbackEvent> SessionRunner::take_new_feedback() {
  std::vector<FeedbackEvent> out;
  out.swap(new_feedback_);
  return out;
}

// ---- headless entry points -------------------------------------------------

SessionResult run_session(const RunConfig& config) {
  std::unique_ptr<InputSource> source;
  switch (config.effective_policy()) {
    case PolicySpec::Kind::none:
      break;
    case PolicySpec::Kind::scripted:
      source = std::make_unique<ScriptedPolicy>(config.policy.scripted, config.intervention,
                                                config.seed);
      break;
    case PolicySpec::Kind::replay:
      source = std::make_unique<ReplayPolicy>(config.policy.replay_file);
      break;
  }
  SessionResult result;
  SessionRunner runner(config, source.get(),
                       [&](const std::string& line) { result.log.push_back(line); });
  runner.run_to_end();
  result.report = runner.report();
  result.constraints = runner.constraints();
  return result;
}

void write_outputs(const RunConfig& config, const SessionResult& result) {
  const auto& dir = config.outputs.dir;
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / config.outputs.log, std::ios::binary);
    for (const auto& line : result.log) out << line << '\n';
    if (!out) throw std::runtime_error("failed to write " + (dir / config.outputs.log).string());
  }
  {
    std::ofstream out(dir / config.outputs.report, std::ios::binary);
    out << result.report.to_json() << '\n';
  }
  if (!config.outputs.csv.empty()) {
    std::ofstream out(dir / config.outputs.csv, std::ios::binary);
    write_trace_csv(out, samples_from_log(result.log), config.metrics);
  }
}

std::vector<std::string> read_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open run log " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

RunConfig config_from_log(const std::vector<std::string>& lines) {
  for (const auto& line : lines) {
    const json j = json::parse(line);
    if (j.at("type") == "header") {
      auto c = parse_run_config(j.at("config").dump());
      return c;
    }
  }
  throw ConfigError("run log has no header record");
}

std::vector<TrafficSample> samples_from_log(const std::vector<std::string>& lines) {
  std::vector<TrafficSample> samples;
  for (const auto& line : lines) {
    const json j = json::parse(line);
    if (j.at("type") != "snapshot") continue;
    TrafficSample s;
    s.run = j.at("run").get<int>();
    s.tick = j.at("tick").get<std::int64_t>();
    s.time = j.at("time").get<double>();
    s.ego = detail::vehicle_from_json(j.at("ego"));
    for (const auto& o : j.at("others")) s.others.push_back(detail::vehicle_from_json(o));
    samples.push_back(std::move(s));
  }
  return samples;
}

MetricsReport report_from_log(const std::vector<std::string>& lines) {
  std::string phase;
  std::uint64_t seed = 0;
  MetricsConfig metrics;
  bool have_header = false;
  std::vector<ScenarioRunInfo> runs;
  std::vector<FeedbackRecord> feedback;
  for (const auto& line : lines) {
    const json j = json::parse(line);
    const auto type = j.at("type").get<std::string>();
    if (type == "header") {
      phase = j.at("phase").get<std::string>();
      seed = j.at("seed").get<std::uint64_t>();
      metrics = metrics_from(j.at("config").at("metrics"));
      have_header = true;
    } else if (type == "scenario_marker" && j.at("event") == "start") {
      runs.push_back({j.at("run").get<int>(), j.at("clip").get<int>(),
                      j.at("scenario").get<std::string>()});
    } else if (type == "feedback") {
      FeedbackRecord r;
      r.run = j.at("run").get<int>();
      r.event.kind = feedback_kind_from_string(j.at("kind").get<std::string>());
      if (!j.at("vehicle").is_null()) r.event.vehicle = VehicleId{j.at("vehicle").get<std::uint32_t>()};
      r.event.time = j.at("at").get<double>();
      feedback.push_back(r);
    }
  }
  if (!have_header) throw ConfigError("run log has no header record");
  return compute_report(phase, seed, runs, samples_from_log(lines), feedback, metrics);
}

}  // namespace coopdrive
