#include <benchmark/benchmark.h>

#include <filesystem>
#include <random>

#include "coopdrive/intervention.hpp"
#include "coopdrive/planner.hpp"
#include "coopdrive/prediction.hpp"
#include "coopdrive/runner.hpp"
#include "coopdrive/world.hpp"

using namespace coopdrive;

namespace {

ScenarioLibrary library() {
  return ScenarioLibrary(std::filesystem::path(COOPDRIVE_BENCH_DATA_DIR) / "scenarios");
}

// A mid-run scene from the tailgating scenario: several vehicles in range.
World busy_world() {
  World w = library().load_world(ScenarioId::b_tailgating, 3);
  for (int i = 0; i < 1500; ++i) w.step({});
  return w;
}

}  // namespace

static void BM_WorldStep(benchmark::State& state) {
  World w = library().load_world(ScenarioId::e_drunk_driver, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(w.step({}));
  }
}
BENCHMARK(BM_WorldStep);

static void BM_PredictBase(benchmark::State& state) {
  const World w = busy_world();
  const PredictorConfig pc;
  for (auto _ : state) {
    benchmark::DoNotOptimize(predict_base(w.scene(), pc));
  }
}
BENCHMARK(BM_PredictBase);

static void BM_PlanningTick(benchmark::State& state) {
  const World w = busy_world();
  const PredictorConfig pc;
  const PlannerConfig plc;
  const auto preds = predict_base(w.scene(), pc);
  for (auto _ : state) {
    benchmark::DoNotOptimize(plan(w.scene(), preds, plc, pc.plan_threshold));
  }
}
BENCHMARK(BM_PlanningTick);

static void BM_SelectVehicle(benchmark::State& state) {
  const World w = busy_world();
  const auto& scene = w.scene();
  std::mt19937_64 rng(1);
  const auto gaze = perturb_gaze(gaze_toward(scene, scene.others.front().id), 2.0, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(select_vehicle(gaze, scene));
  }
}
BENCHMARK(BM_SelectVehicle);

static void BM_Session(benchmark::State& state) {
  RunConfig c = load_run_config(std::filesystem::path(COOPDRIVE_BENCH_DATA_DIR) / "config" /
                                "default.json");
  for (auto _ : state) {
    benchmark::DoNotOptimize(run_session(c));
  }
}
BENCHMARK(BM_Session)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
