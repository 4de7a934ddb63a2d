#include "coopdrive/protocol.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "json_util.hpp"

namespace coopdrive::protocol {

using nlohmann::json;

namespace {

ClientMessage invalid(std::string code, std::string message) {
  ClientMessage m;
  m.kind = ClientMessage::Kind::invalid;
  m.error_code = std::move(code);
  m.error_message = std::move(message);
  return m;
}

bool read_vec3(const json& j, const char* key, Vec3& out) {
  const auto it = j.find(key);
  if (it == j.end() || !it->is_array() || it->size() != 3) return false;
  for (std::size_t i = 0; i < 3; ++i) {
    if (!(*it)[i].is_number()) return false;
    out[i] = (*it)[i].get<double>();
    if (!std::isfinite(out[i])) return false;
  }
  return true;
}

json vehicle_with_style(const VehicleState& v, const AppearanceTable& appearance) {
  json j = detail::vehicle_to_json(v);
  j["style"] = style_for(appearance, v.id);
  return j;
}

json feedback_json(const FeedbackEvent& f) {
  return {{"kind", std::string(to_string(f.kind))},
          {"vehicle", f.vehicle ? json(f.vehicle->value) : json(nullptr)},
          {"time", f.time}};
}

}  // namespace

ClientMessage parse_client_message(std::string_view text) {
  json j = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) return invalid("bad_json", "message is not valid JSON");
  if (!j.is_object()) return invalid("bad_message", "message must be a JSON object");
  const auto kind_it = j.find("kind");
  if (kind_it == j.end() || !kind_it->is_string()) {
    return invalid("bad_message", "message has no string 'kind'");
  }
  const auto kind = kind_it->get<std::string>();

  ClientMessage m;
  if (kind == "gaze") {
    m.kind = ClientMessage::Kind::input;
    m.input.kind = InputMessage::Kind::gaze;
    if (!read_vec3(j, "origin", m.input.origin) || !read_vec3(j, "dir", m.input.direction)) {
      return invalid("bad_message", "gaze needs 'origin' and 'dir' as three finite numbers");
    }
    if (norm(m.input.direction) == 0.0) return invalid("bad_message", "gaze 'dir' is zero");
    return m;
  }
  if (kind == "tap") {
    m.kind = ClientMessage::Kind::input;
    m.input.kind = InputMessage::Kind::tap;
    return m;
  }
  if (kind == "intervene") {
    const auto it = j.find("vehicle_id");
    if (it == j.end() || !it->is_number_unsigned() || it->get<std::uint64_t>() == 0 ||
        it->get<std::uint64_t>() > 0xFFFFFFFFull) {
      return invalid("bad_message", "intervene needs a positive integer 'vehicle_id'");
    }
    m.kind = ClientMessage::Kind::input;
    m.input.kind = InputMessage::Kind::intervene;
    m.input.vehicle = VehicleId{static_cast<std::uint32_t>(it->get<std::uint64_t>())};
    return m;
  }
  if (kind == "control") {
    const auto it = j.find("action");
    if (it == j.end() || !it->is_string()) return invalid("bad_message", "control needs 'action'");
    const auto action = it->get<std::string>();
    m.kind = ClientMessage::Kind::control;
    if (action == "pause") {
      m.control.action = ControlMessage::Action::pause;
    } else if (action == "resume") {
      m.control.action = ControlMessage::Action::resume;
    } else if (action == "phase") {
      m.control.action = ControlMessage::Action::phase;
      const auto p = j.find("phase");
      if (p == j.end() || !p->is_string()) return invalid("bad_message", "phase control needs 'phase'");
      try {
        m.control.phase = session_phase_from_string(p->get<std::string>());
      } catch (const std::invalid_argument& e) {
        return invalid("bad_message", e.what());
      }
    } else {
      return invalid("bad_message", "unknown control action '" + action + "'");
    }
    return m;
  }
  return invalid("unknown_kind", "unknown message kind '" + kind + "'");
}

std::string hello_message(const RoadModel& road, const std::string& phase,
                          const std::string& scenario, int run) {
  json j{{"kind", "hello"},
         {"protocol_version", kVersion},
         {"road", detail::road_to_json(road)},
         {"phase", phase},
         {"scenario", scenario},
         {"run", run}};
  return j.dump();
}

std::string snapshot_message(const SceneSnapshot& snap, const std::vector<FeedbackEvent>& feedback,
                             double display_threshold) {
  json others = json::array();
  for (const auto& o : snap.scene.others) others.push_back(vehicle_with_style(o, snap.appearance));

  json predictions = json::array();
  for (const auto& p : snap.predictions) {
    if (p.hypothesis == Hypothesis::keep) continue;
    if (p.source == PredictionSource::system && p.probability < display_threshold) continue;
    predictions.push_back(detail::prediction_to_json(p));
  }

  const auto& c = snap.plan.candidate;
  json trajectory = json::array();
  for (const auto& r : snap.plan.rollout) {
    trajectory.push_back({{"t", r.ego.t}, {"s", r.ego.s}, {"lateral", r.ego.lateral},
                          {"vel", r.ego.vel}});
  }

  json fb = json::array();
  for (const auto& f : feedback) fb.push_back(feedback_json(f));

  json j{{"kind", "snapshot"},
         {"run", snap.run},
         {"clip", snap.clip},
         {"scenario", snap.scenario},
         {"phase", snap.phase},
         {"tick", snap.scene.tick},
         {"time", snap.scene.time},
         {"ego", detail::vehicle_to_json(snap.scene.ego)},
         {"others", std::move(others)},
         {"predictions", std::move(predictions)},
         {"plan",
          {{"kind", std::string(to_string(c.kind))},
           {"level", c.decel_level},
           {"target_lane", c.target_lane},
           {"emergency", c.emergency},
           {"trajectory", std::move(trajectory)}}},
         {"feedback", std::move(fb)}};
  return j.dump();
}

std::string metrics_message(const MetricsReport& report, const ConstraintCounters& counters,
                            bool final) {
  json j{{"kind", "metrics_update"},
         {"final", final},
         {"phase", report.phase},
         {"ttp_mean", report.ttp.mean ? json(*report.ttp.mean) : json(nullptr)},
         {"thw_episode_count", report.episodes.count},
         {"thw_episode_duration", report.episodes.total_duration},
         {"input_count", report.usage.input_count},
         {"behavior_change_count", report.usage.behavior_change_count},
         {"behavior_change_rate", report.usage.behavior_change_rate()},
         {"ego_overlaps", counters.ego_overlaps},
         {"rejected_inputs", counters.rejected_inputs}};
  return j.dump();
}

std::string error_message(std::string_view code, std::string_view message) {
  return json{{"kind", "error"}, {"code", code}, {"msg", message}}.dump();
}

}  // namespace coopdrive::protocol
