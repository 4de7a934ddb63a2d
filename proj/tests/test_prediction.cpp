#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "coopdrive/prediction.hpp"
#include "coopdrive/world.hpp"
#include "support.hpp"

using namespace coopdrive;
using coopdrive::testing::car;
using coopdrive::testing::scene_with;
using coopdrive::testing::straight_road;

namespace {

BehaviorPrediction injected(std::uint32_t vehicle, Hypothesis h, double now,
                            const PredictorConfig& c = {}) {
  return {VehicleId{vehicle}, h, c.inject_probability, PredictionSource::injected, now,
          now + c.inject_ttl};
}

}  // namespace

TEST(PredictBase, NoPredecessorNoLateralMotionStaysBelowDisplay) {
  const PredictorConfig c;
  const auto scene = scene_with(straight_road(3), car(0, 50, 1, 30), {car(1, 400, 2, 25)});
  const auto preds = predict_base(scene, c);
  EXPECT_LT(probability_of(VehicleId{1}, Hypothesis::change_left, preds), c.display_threshold);
  EXPECT_LT(probability_of(VehicleId{1}, Hypothesis::change_right, preds), c.display_threshold);
}

TEST(PredictBase, ProbabilitiesFormADistribution) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> s(0, 600), v(10, 40), lat(-1.5, 1.5), acc(-3, 3);
  std::uniform_int_distribution<int> lane(0, 2);
  const PredictorConfig c;
  for (int i = 0; i < 500; ++i) {
    std::vector<VehicleState> others;
    for (std::uint32_t id = 1; id <= 6; ++id) {
      auto o = car(id, s(rng), lane(rng), v(rng));
      o.lateral_vel = lat(rng);
      o.accel = acc(rng);
      others.push_back(o);
    }
    const auto scene = scene_with(straight_road(3), car(0, 300, 1, 30), others);
    const auto preds = predict_base(scene, c);
    for (const auto& o : others) {
      double total = 0.0;
      for (auto h : {Hypothesis::keep, Hypothesis::change_left, Hypothesis::change_right}) {
        const double p = probability_of(o.id, h, preds);
        EXPECT_GE(p, 0.0);
        EXPECT_LE(p, 1.0);
        total += p;
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
      if (o.lane == 0) {
        EXPECT_EQ(probability_of(o.id, Hypothesis::change_left, preds), 0.0);
      }
    }
  }
}

TEST(PredictBase, ChangeProbabilityRisesAsTtcFalls) {
  const PredictorConfig c;
  double previous = -1.0;
  for (double ttc = 20.0; ttc >= 2.0; ttc -= 0.25) {
    CutInFeatures f;
    f.has_predecessor = true;
    f.ttc = ttc;
    f.headway = 3.0;
    const double p = change_probabilities(f, true, c).left;
    EXPECT_GE(p, previous) << "ttc " << ttc;
    previous = p;
  }
  CutInFeatures close;
  close.has_predecessor = true;
  close.ttc = 2.0;
  close.headway = 0.8;
  EXPECT_GT(change_probabilities(close, true, c).left, c.plan_threshold);
}

TEST(PredictBase, IsPure) {
  const PredictorConfig c;
  const auto scene = scene_with(straight_road(3), car(0, 50, 1, 30),
                                {car(1, 200, 2, 27), car(2, 240, 2, 21)});
  EXPECT_EQ(predict_base(scene, c), predict_base(scene, c));
}

TEST(PredictBase, IgnoresTheMap) {
  const PredictorConfig c;
  auto cutter = car(1, 200, 2, 27);
  cutter.lateral_vel = -0.4;
  const std::vector<VehicleState> others{cutter, car(2, 240, 2, 21), car(3, 300, 0, 31)};
  const auto dashed = scene_with(straight_road(3), car(0, 50, 1, 30), others);
  const auto solid = scene_with(straight_road(3, 2000.0, Marking::solid), car(0, 50, 1, 30), others);

  LaneSegment a{0, 500, 3, {Marking::dashed, Marking::solid}, {{}, {}, {true, 100.0}}, {}};
  LaneSegment b{500, 2000, 2, {Marking::dashed}, {{}, {}}, {}};
  const auto merging = scene_with(std::make_shared<const RoadModel>(std::vector{a, b}, 3.5),
                                  car(0, 50, 1, 30), others);
  const auto base = predict_base(dashed, c);
  EXPECT_EQ(base, predict_base(solid, c));
  EXPECT_EQ(base, predict_base(merging, c));
}

TEST(PredictBase, TailgatingPlatoonStaysBelowPlanThreshold) {
  const PredictorConfig c;
  const auto lib = ScenarioLibrary::default_library();
  for (std::uint64_t seed : {1u, 7u, 42u}) {
    const World world = lib.load_world(ScenarioId::b_tailgating, seed);
    const auto& scene = world.scene();
    const auto preds = predict_base(scene, c);
    int platoon = 0;
    for (const auto& o : scene.others) {
      if (o.lane != 2) continue;
      ++platoon;
      EXPECT_LT(probability_of(o.id, Hypothesis::change_left, preds), c.plan_threshold);
      EXPECT_LT(probability_of(o.id, Hypothesis::change_right, preds), c.plan_threshold);
      const auto f = cut_in_features(o, scene, c);
      if (f.has_predecessor) {
        EXPECT_GT(f.ttc, c.ttc_min) << "vehicle " << o.id.value;
      }
    }
    EXPECT_GE(platoon, 4);
  }
}

TEST(Fuse, InjectionRaisesToInjectProbabilityAcrossDashed) {
  const PredictorConfig c;
  const auto scene = scene_with(straight_road(3), car(0, 50, 1, 30), {car(1, 120, 2, 25)});
  std::vector<BehaviorPrediction> base{
      {VehicleId{1}, Hypothesis::keep, 0.8, PredictionSource::system, 0, 0},
      {VehicleId{1}, Hypothesis::change_left, 0.2, PredictionSource::system, 0, 0}};
  const auto r = fuse(base, {injected(1, Hypothesis::change_left, 0.0)}, scene, *scene.road, c);
  EXPECT_DOUBLE_EQ(probability_of(VehicleId{1}, Hypothesis::change_left, r.predictions),
                   std::max(0.2, c.inject_probability));
  ASSERT_EQ(r.applied.size(), 1u);
  EXPECT_TRUE(r.suppressed.empty());
}

TEST(Fuse, SolidBoundarySuppressesInjection) {
  const PredictorConfig c;
  const auto road = straight_road(3, 2000.0, Marking::solid);
  const auto scene = scene_with(road, car(0, 50, 1, 30), {car(1, 120, 2, 25)});
  std::vector<BehaviorPrediction> base{
      {VehicleId{1}, Hypothesis::change_left, 0.2, PredictionSource::system, 0, 0}};
  const auto r = fuse(base, {injected(1, Hypothesis::change_left, 0.0)}, scene, *road, c);
  EXPECT_DOUBLE_EQ(probability_of(VehicleId{1}, Hypothesis::change_left, r.predictions), 0.2);
  ASSERT_EQ(r.suppressed.size(), 1u);
  EXPECT_EQ(r.suppressed[0].first, VehicleId{1});
}

TEST(Fuse, HazardPassesThroughAndMissingVehicleIsDropped) {
  const PredictorConfig c;
  const auto road = straight_road(2, 2000.0, Marking::solid);
  const auto scene = scene_with(road, car(0, 50, 1, 30), {car(1, 120, 1, 25)});
  const auto r = fuse({}, {injected(1, Hypothesis::hazard, 0.0), injected(9, Hypothesis::change_left, 0.0)},
                      scene, *road, c);
  EXPECT_TRUE(predicted_intent(VehicleId{1}, r.predictions, c.plan_threshold).hazard);
  ASSERT_EQ(r.dropped.size(), 1u);
  EXPECT_EQ(r.dropped[0], VehicleId{9});
}

TEST(Fuse, NeverLowersAndNeverLiftsAcrossSolid) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> p(0.0, 1.0), s(0, 1200);
  std::uniform_int_distribution<int> lane(0, 2), hyp(1, 2), mark(0, 1);
  const PredictorConfig c;
  for (int i = 0; i < 1000; ++i) {
    LaneSegment seg{0, 2000, 3,
                    {mark(rng) ? Marking::solid : Marking::dashed,
                     mark(rng) ? Marking::solid : Marking::dashed},
                    {{}, {}, {}}, {}};
    const auto road = std::make_shared<const RoadModel>(std::vector{seg}, 3.5);
    const auto v = car(1, s(rng), lane(rng), 25);
    const auto scene = scene_with(road, car(0, 10, 1, 30), {v});
    const auto h = static_cast<Hypothesis>(hyp(rng));
    const double base_p = p(rng);
    std::vector<BehaviorPrediction> base{{v.id, h, base_p, PredictionSource::system, 0, 0}};
    const auto r = fuse(base, {injected(1, h, 0.0)}, scene, *road, c);
    const double fused = probability_of(v.id, h, r.predictions);
    if (crosses_solid_boundary(v, h, *road)) {
      EXPECT_EQ(fused, base_p);
    } else {
      EXPECT_GE(fused, base_p);
    }
  }
}

TEST(InjectionStore, ExpiresAfterTtl) {
  const PredictorConfig c;
  InjectionStore store;
  store.add(injected(1, Hypothesis::change_left, 0.0, c));
  EXPECT_EQ(store.active(10.0).size(), 1u);
  EXPECT_TRUE(store.active(10.01).empty());
  EXPECT_EQ(store.expire(10.01).size(), 1u);
  EXPECT_EQ(store.size(), 0u);
}

TEST(InjectionStore, OneEntryPerVehicleAndHypothesis) {
  InjectionStore store;
  store.add(injected(1, Hypothesis::change_left, 0.0));
  store.add(injected(1, Hypothesis::change_left, 4.0));
  store.add(injected(1, Hypothesis::hazard, 4.0));
  ASSERT_EQ(store.size(), 2u);
  for (const auto& p : store.active(4.0)) {
    if (p.hypothesis == Hypothesis::change_left) {
      EXPECT_DOUBLE_EQ(p.created_at, 4.0);
    }
  }
}

TEST(PredictorConfig, ValidatesThresholdOrder) {
  PredictorConfig c;
  EXPECT_NO_THROW(c.validate());
  c.display_threshold = 0.7;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.inject_probability = 0.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.ttc_min = 12.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}
