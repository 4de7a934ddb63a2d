#pragma once

// Fixed-step kinematic traffic simulation with scripted scenario actors.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "coopdrive/planner.hpp"
#include "coopdrive/scene.hpp"

namespace coopdrive {

enum class ScenarioId {
  a_cut_in,
  b_tailgating,
  c_merge_in,
  d_double_lane_change,
  e_drunk_driver
};

inline constexpr ScenarioId kAllScenarios[] = {
    ScenarioId::a_cut_in, ScenarioId::b_tailgating, ScenarioId::c_merge_in,
    ScenarioId::d_double_lane_change, ScenarioId::e_drunk_driver};

std::string_view to_string(ScenarioId id);
/// Accepts the full id ("c-merge-in") or its letter ("c").
ScenarioId scenario_id_from_string(std::string_view s);

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Trigger {
  enum class Kind { ego_gap_below, ego_ttc_below, sim_time, position };
  Kind kind = Kind::sim_time;
  double threshold = 0.0;
  bool once = true;
};

std::string_view to_string(Trigger::Kind k);
Trigger::Kind trigger_kind_from_string(std::string_view s);

struct IdmParams {
  double desired_speed = 30.0;
  double time_headway = 1.2;
  double min_gap = 2.0;
  double max_accel = 1.5;
  double comfort_decel = 2.0;
  double delta = 4.0;
};

struct ProgramPhase {
  enum class Kind {
    hold_speed,
    accelerate_to,
    follow_idm,
    lane_change_to,
    swerve,
    speed_noise
  };
  Kind kind = Kind::hold_speed;
  std::optional<Trigger> trigger;  // empty: activate right after the previous phase

  std::optional<double> speed;  // hold_speed / accelerate_to / speed_noise base
  double rate = 1.0;            // accelerate_to, m/s^2
  IdmParams idm;                // follow_idm
  int lane = 0;                 // lane_change_to
  double duration = 3.0;        // lane_change_to, s
  double min_rear_gap = 10.0;   // lane_change_to gap acceptance, m
  double amplitude = 0.0;       // swerve, m
  double period = 4.0;          // swerve, s
  double range = 0.0;           // speed_noise, +/- m/s
};

std::string_view to_string(ProgramPhase::Kind k);
ProgramPhase::Kind phase_kind_from_string(std::string_view s);

struct BehaviorProgram {
  std::vector<ProgramPhase> phases;
  IdmParams interaction;  // car-following limits applied in every mode
};

struct ScriptedVehicle {
  std::string tag;
  VehicleState initial;
  BehaviorProgram program;
};

struct ScenarioScript {
  int version = 1;
  ScenarioId id = ScenarioId::a_cut_in;
  std::string description;
  double duration = 80.0;
  double jitter_position = 0.0;
  double jitter_speed = 0.0;
  std::shared_ptr<const RoadModel> road;
  VehicleState ego;
  std::vector<ScriptedVehicle> vehicles;

  /// Throws ScenarioError on overlapping vehicles, bad lanes or programs.
  void validate() const;
};

ScenarioScript parse_scenario(const std::string& json_text);
ScenarioScript load_scenario_file(const std::filesystem::path& path);
std::string scenario_to_json(const ScenarioScript& script);

struct SessionSpec {
  enum class Phase { baseline1, intervention, baseline2 };
  Phase phase = Phase::baseline1;
  std::vector<std::vector<ScenarioId>> clips;
  std::uint64_t seed = 0;

  void validate() const;
  /// Three clips; clip 1 is d, c, a and every scenario appears in the session.
  static SessionSpec default_session(Phase phase, std::uint64_t seed);
};

std::string_view to_string(SessionSpec::Phase p);
SessionSpec::Phase session_phase_from_string(std::string_view s);

struct WorldEvent {
  enum class Kind { retired, phase_activated, lane_change_started, lane_change_skipped };
  Kind kind;
  std::int64_t tick = 0;
  VehicleId vehicle;
  std::string detail;
};

std::string_view to_string(WorldEvent::Kind k);

class World {
 public:
  World(ScenarioScript script, std::uint64_t seed, double dt = 0.01);

  const TrafficScene& scene() const { return scene_; }
  double dt() const { return dt_; }
  const ScenarioScript& script() const { return script_; }
  std::uint64_t seed() const { return seed_; }

  /// Advances every vehicle by one fixed step and returns the new scene.
  /// Throws std::invalid_argument if `dt` differs from the configured step.
  const TrafficScene& step(double dt, const LongLatCommand& ego_command);
  const TrafficScene& step(const LongLatCommand& ego_command) { return step(dt_, ego_command); }

  std::optional<VehicleId> vehicle_for_tag(std::string_view tag) const;
  std::vector<WorldEvent> drain_events();
  bool ego_lane_change_active() const { return ego_lateral_.has_value(); }

 private:
  struct LateralManeuver {
    double from = 0.0;
    double to = 0.0;
    std::int64_t start_tick = 0;
    std::int64_t steps = 1;
  };
  struct PendingLaneChange {
    int lane = 0;
    std::int64_t steps = 1;
    double min_rear_gap = 10.0;
  };
  enum class LongMode { hold, accelerate_to, idm, noise };
  struct Agent {
    VehicleState state;
    std::string tag;
    BehaviorProgram program;
    std::size_t next_phase = 0;
    double lateral = 0.0;
    LongMode mode = LongMode::hold;
    double target_speed = 0.0;
    double rate = 1.0;
    IdmParams idm;
    double noise_range = 0.0;
    double noise_phase[2] = {0.0, 0.0};
    std::optional<LateralManeuver> lane_change;
    std::optional<PendingLaneChange> pending;
    double swerve_amplitude = 0.0;
    double swerve_period = 4.0;
    std::int64_t swerve_start_tick = 0;
    double swerve_center = 0.0;
    bool retired = false;
  };

  bool trigger_fires(const Trigger& t, const Agent& a) const;
  void activate_phases(Agent& a);
  void activate(Agent& a, const ProgramPhase& p);
  double agent_accel(const Agent& a, double time) const;
  bool lane_change_acceptable(const Agent& a, int lane) const;
  void publish();

  ScenarioScript script_;
  std::uint64_t seed_;
  double dt_;
  std::int64_t tick_ = 0;
  VehicleState ego_;
  double ego_lateral_pos_ = 0.0;
  std::optional<LateralManeuver> ego_lateral_;
  std::vector<Agent> agents_;
  TrafficScene scene_;
  std::vector<WorldEvent> events_;
};

/// Loads scenario JSON files from a directory named `<id>.json`.
class ScenarioLibrary {
 public:
  explicit ScenarioLibrary(std::filesystem::path dir);
  static ScenarioLibrary default_library();

  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path path_for(ScenarioId id) const;
  ScenarioScript script(ScenarioId id) const;

  /// Scenario with the seeded initial-condition jitter applied.
  ScenarioScript load(ScenarioId id, std::uint64_t seed) const;
  World load_world(ScenarioId id, std::uint64_t seed, double dt = 0.01) const;

 private:
  std::filesystem::path dir_;
};

/// Applies the script's seeded position/speed jitter to scripted vehicles.
ScenarioScript apply_jitter(ScenarioScript script, std::uint64_t seed);

World load_scenario(ScenarioId id, std::uint64_t seed);

/// Cosmetic vehicle styles; never read by the dynamics.
using AppearanceTable = std::map<VehicleId, std::string>;

AppearanceTable randomize_appearance(std::uint64_t seed,
                                     const std::vector<VehicleId>& vehicles);
std::string style_for(const AppearanceTable& table, VehicleId id);

/// Uniform double in [0, 1) from a 64-bit engine output.
inline double unit_uniform(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

}  // namespace coopdrive
