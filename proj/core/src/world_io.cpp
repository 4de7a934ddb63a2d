// Scenario JSON documents. See docs/scenario-format.md for the schema.

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "coopdrive/world.hpp"
#include "json_util.hpp"

namespace coopdrive {

using nlohmann::json;
using detail::get_or;

namespace {

constexpr int kScenarioVersion = 1;

const json& require(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) throw ScenarioError(std::string("missing field '") + key + "'");
  return *it;
}

IdmParams parse_idm(const json& j, IdmParams p = {}) {
  p.desired_speed = get_or(j, "desired_speed", p.desired_speed);
  p.time_headway = get_or(j, "time_headway", p.time_headway);
  p.min_gap = get_or(j, "min_gap", p.min_gap);
  p.max_accel = get_or(j, "max_accel", p.max_accel);
  p.comfort_decel = get_or(j, "comfort_decel", p.comfort_decel);
  p.delta = get_or(j, "delta", p.delta);
  return p;
}

json idm_json(const IdmParams& p) {
  return {{"desired_speed", p.desired_speed}, {"time_headway", p.time_headway},
          {"min_gap", p.min_gap},             {"max_accel", p.max_accel},
          {"comfort_decel", p.comfort_decel}, {"delta", p.delta}};
}

ProgramPhase parse_phase(const json& j) {
  ProgramPhase p;
  p.kind = phase_kind_from_string(require(j, "kind").get<std::string>());
  if (const auto it = j.find("trigger"); it != j.end() && !it->is_null()) {
    Trigger t;
    t.kind = trigger_kind_from_string(require(*it, "kind").get<std::string>());
    t.threshold = require(*it, "threshold").get<double>();
    t.once = get_or(*it, "once", true);
    p.trigger = t;
  }
  if (const auto it = j.find("speed"); it != j.end() && !it->is_null()) p.speed = it->get<double>();
  p.rate = get_or(j, "rate", p.rate);
  if (const auto it = j.find("idm"); it != j.end()) p.idm = parse_idm(*it);
  p.lane = get_or(j, "lane", p.lane);
  p.duration = get_or(j, "duration", p.duration);
  p.min_rear_gap = get_or(j, "min_rear_gap", p.min_rear_gap);
  p.amplitude = get_or(j, "amplitude", p.amplitude);
  p.period = get_or(j, "period", p.period);
  p.range = get_or(j, "range", p.range);
  return p;
}

json phase_json(const ProgramPhase& p) {
  json j{{"kind", std::string(to_string(p.kind))}};
  if (p.trigger) {
    j["trigger"] = {{"kind", std::string(to_string(p.trigger->kind))},
                    {"threshold", p.trigger->threshold},
                    {"once", p.trigger->once}};
  }
  switch (p.kind) {
    case ProgramPhase::Kind::hold_speed:
      if (p.speed) j["speed"] = *p.speed;
      break;
    case ProgramPhase::Kind::accelerate_to:
      if (p.speed) j["speed"] = *p.speed;
      j["rate"] = p.rate;
      break;
    case ProgramPhase::Kind::follow_idm:
      j["idm"] = idm_json(p.idm);
      break;
    case ProgramPhase::Kind::lane_change_to:
      j["lane"] = p.lane;
      j["duration"] = p.duration;
      j["min_rear_gap"] = p.min_rear_gap;
      break;
    case ProgramPhase::Kind::swerve:
      j["amplitude"] = p.amplitude;
      j["period"] = p.period;
      break;
    case ProgramPhase::Kind::speed_noise:
      if (p.speed) j["speed"] = *p.speed;
      j["range"] = p.range;
      break;
  }
  return j;
}

std::shared_ptr<const RoadModel> parse_road(const json& j) {
  const double lane_width = get_or(j, "lane_width", 3.5);
  std::vector<LaneSegment> segments;
  for (const auto& sj : require(j, "segments")) {
    LaneSegment seg;
    seg.s_start = require(sj, "s_start").get<double>();
    seg.s_end = require(sj, "s_end").get<double>();
    seg.lane_count = require(sj, "lane_count").get<int>();
    for (const auto& m : require(sj, "markings")) {
      seg.markings.push_back(marking_from_string(m.get<std::string>()));
    }
    seg.lanes.assign(static_cast<std::size_t>(std::max(seg.lane_count, 0)), LaneSpec{});
    if (const auto it = sj.find("lanes"); it != sj.end()) {
      seg.lanes.clear();
      for (const auto& lj : *it) {
        seg.lanes.push_back({get_or(lj, "terminating", false), get_or(lj, "taper", 0.0)});
      }
    }
    if (const auto it = sj.find("diverge"); it != sj.end() && !it->is_null()) {
      seg.diverge = LaneDiverge{require(*it, "first_lane").get<int>(),
                                require(*it, "s_split").get<double>()};
    }
    segments.push_back(std::move(seg));
  }
  return std::make_shared<const RoadModel>(std::move(segments), lane_width);
}

}  // namespace

ScenarioScript parse_scenario(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ScenarioError(std::string("scenario is not valid JSON: ") + e.what());
  }
  try {
    ScenarioScript s;
    s.version = get_or(j, "version", kScenarioVersion);
    if (s.version != kScenarioVersion) {
      throw ScenarioError("unsupported scenario version " + std::to_string(s.version));
    }
    s.id = scenario_id_from_string(require(j, "id").get<std::string>());
    s.description = get_or<std::string>(j, "description", "");
    s.duration = get_or(j, "duration", s.duration);
    if (const auto it = j.find("jitter"); it != j.end()) {
      s.jitter_position = get_or(*it, "position", 0.0);
      s.jitter_speed = get_or(*it, "speed", 0.0);
    }
    s.road = parse_road(require(j, "road"));
    s.ego = detail::vehicle_from_json(require(j, "ego"));
    s.ego.id = kEgoId;
    std::uint32_t next_id = 1;
    for (const auto& vj : get_or(j, "vehicles", json::array())) {
      ScriptedVehicle v;
      v.tag = require(vj, "tag").get<std::string>();
      v.initial = detail::vehicle_from_json(require(vj, "vehicle"));
      if (v.initial.id == kEgoId) v.initial.id = VehicleId{next_id};
      next_id = std::max(next_id, v.initial.id.value) + 1;
      if (const auto it = vj.find("interaction"); it != vj.end()) {
        v.program.interaction = parse_idm(*it);
      }
      for (const auto& pj : get_or(vj, "program", json::array())) {
        v.program.phases.push_back(parse_phase(pj));
      }
      s.vehicles.push_back(std::move(v));
    }
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw ScenarioError(std::string("malformed scenario: ") + e.what());
  } catch (const RoadError& e) {
    throw ScenarioError(std::string("invalid road: ") + e.what());
  }
}

ScenarioScript load_scenario_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot open scenario file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_scenario(buf.str());
  } catch (const ScenarioError& e) {
    throw ScenarioError(path.string() + ": " + e.what());
  }
}

std::string scenario_to_json(const ScenarioScript& s) {
  json vehicles = json::array();
  for (const auto& v : s.vehicles) {
    json program = json::array();
    for (const auto& p : v.program.phases) program.push_back(phase_json(p));
    vehicles.push_back({{"tag", v.tag},
                        {"vehicle", detail::vehicle_to_json(v.initial)},
                        {"interaction", idm_json(v.program.interaction)},
                        {"program", program}});
  }
  json j{{"version", s.version},
         {"id", std::string(to_string(s.id))},
         {"description", s.description},
         {"duration", s.duration},
         {"jitter", {{"position", s.jitter_position}, {"speed", s.jitter_speed}}},
         {"road", detail::road_to_json(*s.road)},
         {"ego", detail::vehicle_to_json(s.ego)},
         {"vehicles", vehicles}};
  return j.dump(2);
}

}  // namespace coopdrive
