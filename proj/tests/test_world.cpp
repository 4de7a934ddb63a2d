#include <cmath>

#include <gtest/gtest.h>

#include "coopdrive/world.hpp"
#include "support.hpp"

using namespace coopdrive;
using coopdrive::testing::car;
using coopdrive::testing::straight_road;

namespace {

ScenarioScript simple_script(std::vector<ScriptedVehicle> vehicles, int lanes = 3) {
  ScenarioScript s;
  s.id = ScenarioId::a_cut_in;
  s.duration = 60.0;
  s.road = straight_road(lanes, 3000.0);
  s.ego = car(0, 50, 1, 30);
  s.vehicles = std::move(vehicles);
  return s;
}

ScriptedVehicle scripted(std::uint32_t id, double s, int lane, double vel,
                         std::vector<ProgramPhase> phases) {
  ScriptedVehicle v;
  v.tag = "v" + std::to_string(id);
  v.initial = car(id, s, lane, vel);
  v.program.phases = std::move(phases);
  return v;
}

ProgramPhase hold(double speed) {
  ProgramPhase p;
  p.kind = ProgramPhase::Kind::hold_speed;
  p.speed = speed;
  return p;
}

const VehicleState& find(const World& w, std::uint32_t id) {
  const auto* v = w.scene().find(VehicleId{id});
  if (v == nullptr) throw std::runtime_error("vehicle missing");
  return *v;
}

bool same_scene(const TrafficScene& a, const TrafficScene& b) {
  if (a.tick != b.tick || a.time != b.time || a.others.size() != b.others.size()) return false;
  auto eq = [](const VehicleState& x, const VehicleState& y) {
    return x.id == y.id && x.s == y.s && x.lane == y.lane && x.lateral_offset == y.lateral_offset &&
           x.vel == y.vel && x.accel == y.accel && x.lateral_vel == y.lateral_vel;
  };
  if (!eq(a.ego, b.ego)) return false;
  for (std::size_t i = 0; i < a.others.size(); ++i) {
    if (!eq(a.others[i], b.others[i])) return false;
  }
  return true;
}

}  // namespace

TEST(World, HoldSpeedAdvancesVelocityTimesDt) {
  World w(simple_script({scripted(1, 200, 2, 20, {hold(20)})}), 1);
  const double s0 = find(w, 1).s;
  w.step({});
  EXPECT_NEAR(find(w, 1).s - s0, 0.2, 1e-12);
  EXPECT_EQ(w.scene().tick, 1);
  EXPECT_EQ(w.scene().time, 0.01);
}

TEST(World, RejectsAForeignStepSize) {
  World w(simple_script({}), 1);
  EXPECT_THROW(w.step(0.02, {}), std::invalid_argument);
}

TEST(World, LaneChangeFollowsQuinticAndLandsAtThreeSeconds) {
  ProgramPhase change;
  change.kind = ProgramPhase::Kind::lane_change_to;
  change.lane = 1;
  change.duration = 3.0;
  change.min_rear_gap = 0.0;
  change.trigger = Trigger{Trigger::Kind::sim_time, 1.0, true};
  auto script = simple_script({scripted(1, 400, 2, 25, {hold(25), change})});
  World w(script, 1);
  const double W = script.road->lane_width();
  const double from = 2 * W, to = 1 * W;

  std::optional<std::int64_t> start;
  double previous = from;
  for (int i = 0; i < 600; ++i) {
    w.step({});
    const auto& v = find(w, 1);
    const double y = v.lateral_position(W);
    if (!start && y != from) start = w.scene().tick - 1;
    if (start) {
      const double tau = static_cast<double>(w.scene().tick - *start) * 0.01 / 3.0;
      EXPECT_NEAR(y, from + (to - from) * lane_change_progress(tau), 1e-9);
      EXPECT_LE(y, previous + 1e-12);  // monotone toward the left
    }
    previous = y;
  }
  ASSERT_TRUE(start.has_value());
  EXPECT_NEAR(static_cast<double>(*start) * 0.01, 1.0, 0.011);
  const auto& v = find(w, 1);
  EXPECT_EQ(v.lane, 1);
  EXPECT_EQ(v.lateral_offset, 0.0);
  EXPECT_EQ(v.lateral_vel, 0.0);
}

TEST(World, SameSeedSameCommandsBitIdentical) {
  const auto lib = ScenarioLibrary::default_library();
  World a = lib.load_world(ScenarioId::e_drunk_driver, 7);
  World b = lib.load_world(ScenarioId::e_drunk_driver, 7);
  for (int i = 0; i < 10000; ++i) {
    LongLatCommand cmd;
    cmd.accel = std::sin(i * 0.01);
    a.step(cmd);
    b.step(cmd);
    ASSERT_TRUE(same_scene(a.scene(), b.scene())) << "diverged at step " << i;
  }
}

TEST(World, NoTeleportation) {
  const auto lib = ScenarioLibrary::default_library();
  for (ScenarioId id : kAllScenarios) {
    World w = lib.load_world(id, 3);
    auto prev = w.scene();
    for (int i = 0; i < 3000; ++i) {
      w.step({});
      const auto& now = w.scene();
      for (const auto& o : now.others) {
        const VehicleState* before = prev.find(o.id);
        if (before == nullptr) continue;
        const double ds = o.s - before->s;
        EXPECT_GE(ds, -1e-12);
        EXPECT_LE(ds, before->vel * 0.01 + 0.5 * 3.0 * 1e-4 + 1e-9);
        const double dy = o.lateral_position(3.5) - before->lateral_position(3.5);
        EXPECT_LE(std::fabs(dy), 0.05) << to_string(id) << " vehicle " << o.id.value;
      }
      prev = now;
    }
  }
}

TEST(World, SeedsJitterInitialConditionsButStayValid) {
  const auto lib = ScenarioLibrary::default_library();
  const auto a = lib.load(ScenarioId::a_cut_in, 1);
  const auto b = lib.load(ScenarioId::a_cut_in, 2);
  EXPECT_NO_THROW(a.validate());
  EXPECT_NO_THROW(b.validate());
  EXPECT_NE(scenario_to_json(a), scenario_to_json(b));
  EXPECT_EQ(scenario_to_json(lib.load(ScenarioId::a_cut_in, 7)),
            scenario_to_json(lib.load(ScenarioId::a_cut_in, 7)));
}

TEST(World, VehiclesLeavingTheRoadAreRetired) {
  auto script = simple_script({scripted(1, 2990, 2, 30, {hold(30)})});
  World w(script, 1);
  bool retired = false;
  for (int i = 0; i < 200 && !retired; ++i) {
    w.step({});
    for (const auto& e : w.drain_events()) retired |= e.kind == WorldEvent::Kind::retired;
  }
  EXPECT_TRUE(retired);
  EXPECT_EQ(w.scene().find(VehicleId{1}), nullptr);
}

TEST(ScenarioLibrary, ShipsAllFive) {
  const auto lib = ScenarioLibrary::default_library();
  for (ScenarioId id : kAllScenarios) {
    const auto s = lib.script(id);
    EXPECT_EQ(s.id, id);
    EXPECT_FALSE(s.vehicles.empty());
    EXPECT_GE(s.duration, 60.0);
    EXPECT_LE(s.duration, 120.0);
    // Round trip through the document format.
    EXPECT_EQ(scenario_to_json(parse_scenario(scenario_to_json(s))), scenario_to_json(s));
  }
}

TEST(ScenarioLibrary, MergeScenarioHasATaperedTerminatingLane) {
  const auto s = ScenarioLibrary::default_library().script(ScenarioId::c_merge_in);
  bool found = false;
  for (const auto& seg : s.road->segments()) {
    for (const auto& lane : seg.lanes) {
      if (lane.terminating) {
        found = true;
        EXPECT_GT(lane.taper, 0.0);
        EXPECT_TRUE(std::isfinite(lane.taper));
      }
    }
  }
  EXPECT_TRUE(found);
  EXPECT_EQ(s.road->segments().front().lane_count, 3);
  EXPECT_EQ(s.road->segments().back().lane_count, 2);
}

TEST(ScenarioLibrary, DivergingRoadStartsWithFourLanes) {
  const auto s = ScenarioLibrary::default_library().script(ScenarioId::d_double_lane_change);
  const auto& first = s.road->segments().front();
  EXPECT_EQ(first.lane_count, 4);
  ASSERT_TRUE(first.diverge.has_value());
}

TEST(ScenarioScript, ValidationCatchesBadScripts) {
  auto overlap = simple_script({scripted(1, 200, 2, 20, {}), scripted(2, 202, 2, 20, {})});
  EXPECT_THROW(overlap.validate(), ScenarioError);

  auto dup = simple_script({scripted(1, 200, 2, 20, {}), scripted(1, 300, 2, 20, {})});
  EXPECT_THROW(dup.validate(), ScenarioError);

  ProgramPhase swerve;
  swerve.kind = ProgramPhase::Kind::swerve;
  swerve.amplitude = 1.75;
  EXPECT_THROW(simple_script({scripted(1, 200, 2, 20, {swerve})}).validate(), ScenarioError);

  EXPECT_THROW(simple_script({scripted(1, 200, 5, 20, {})}).validate(), ScenarioError);

  ProgramPhase bad_trigger = hold(20);
  bad_trigger.trigger = Trigger{Trigger::Kind::ego_gap_below, 0.0, true};
  EXPECT_THROW(simple_script({scripted(1, 200, 2, 20, {bad_trigger})}).validate(), ScenarioError);
}

TEST(ScenarioScript, ParseErrorsAreReported) {
  EXPECT_THROW(parse_scenario("{"), ScenarioError);
  EXPECT_THROW(parse_scenario(R"({"version": 2, "id": "a"})"), ScenarioError);
  EXPECT_THROW(parse_scenario(R"({"version": 1, "id": "z"})"), ScenarioError);
  EXPECT_THROW(parse_scenario(R"({"version": 1, "id": "a"})"), ScenarioError);
  EXPECT_THROW(scenario_id_from_string("f-unknown"), ScenarioError);
}

TEST(Appearance, CosmeticOnly) {
  const std::vector<VehicleId> ids{VehicleId{1}, VehicleId{2}, VehicleId{3}, VehicleId{4}};
  const auto a = randomize_appearance(1, ids);
  const auto b = randomize_appearance(2, ids);
  EXPECT_NE(a, b);
  EXPECT_EQ(a, randomize_appearance(1, ids));
  EXPECT_EQ(style_for(a, VehicleId{99}), "default");

  // The world never sees the table, so trajectories cannot depend on it.
  const auto lib = ScenarioLibrary::default_library();
  World w1 = lib.load_world(ScenarioId::b_tailgating, 5);
  World w2 = lib.load_world(ScenarioId::b_tailgating, 5);
  for (int i = 0; i < 500; ++i) {
    w1.step({});
    w2.step({});
  }
  EXPECT_TRUE(same_scene(w1.scene(), w2.scene()));
}

TEST(SessionSpec, DefaultOrderingStartsWithDca) {
  const auto s = SessionSpec::default_session(SessionSpec::Phase::baseline1, 0);
  ASSERT_EQ(s.clips.size(), 3u);
  EXPECT_EQ(s.clips[0], (std::vector<ScenarioId>{ScenarioId::d_double_lane_change,
                                                 ScenarioId::c_merge_in, ScenarioId::a_cut_in}));
  std::set<ScenarioId> seen;
  for (const auto& clip : s.clips) seen.insert(clip.begin(), clip.end());
  EXPECT_EQ(seen.size(), 5u);
  SessionSpec two = s;
  two.clips.pop_back();
  EXPECT_THROW(two.validate(), ScenarioError);
}
