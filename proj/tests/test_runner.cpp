#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "coopdrive/runner.hpp"

using namespace coopdrive;
namespace fs = std::filesystem;

namespace {

RunConfig default_config() {
  return load_run_config(fs::path(COOPDRIVE_TEST_DATA_DIR) / "config" / "default.json");
}

RunConfig with_phase(RunConfig c, SessionSpec::Phase p) {
  c.session.phase = p;
  return c;
}

struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("coopdrive-test-" + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_lines(const fs::path& p, const std::vector<std::string>& lines) {
  std::ofstream out(p, std::ios::binary);
  for (const auto& l : lines) out << l << '\n';
}

// One full session per phase, shared by the tests below.
const SessionResult& intervention_run() {
  static const SessionResult r = run_session(default_config());
  return r;
}

}  // namespace

TEST(RunConfig, DefaultFileLoadsAndValidates) {
  const auto c = default_config();
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.session.phase, SessionSpec::Phase::intervention);
  EXPECT_EQ(c.policy.kind, PolicySpec::Kind::scripted);
  EXPECT_EQ(c.planning_interval, 10);
  EXPECT_EQ(c.dt, 0.01);
  EXPECT_EQ(c.session.clips.size(), 3u);
  EXPECT_EQ(session_runs(c.session).size(), 9u);
}

TEST(RunConfig, JsonRoundTrip) {
  const auto c = default_config();
  const auto text = run_config_to_json(c);
  EXPECT_EQ(run_config_to_json(parse_run_config(text)), text);
}

TEST(RunConfig, EmptyObjectGivesDefaults) {
  const auto c = parse_run_config("{}");
  EXPECT_EQ(c.session.phase, SessionSpec::Phase::baseline1);
  EXPECT_EQ(c.policy.kind, PolicySpec::Kind::none);
  EXPECT_EQ(c.metrics.thw_threshold, 2.0);
  EXPECT_NO_THROW(c.validate());
}

TEST(RunConfig, RejectsBadInput) {
  EXPECT_THROW(parse_run_config("{"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"session": {"phase": "warmup"}})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"policy": {"kind": "random"}})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"session": {"clips": [["a"], ["q"], ["b"]]}})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"dt": 0})").validate(), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"policy": {"kind": "replay", "file": "/nonexistent/x"}})")
                   .validate(),
               ConfigError);
  EXPECT_THROW(load_run_config("/nonexistent/config.json"), ConfigError);
}

TEST(RunConfig, BaselinePhasesNeverIntervene) {
  const auto c = default_config();
  EXPECT_EQ(with_phase(c, SessionSpec::Phase::baseline1).effective_policy(),
            PolicySpec::Kind::none);
  EXPECT_EQ(with_phase(c, SessionSpec::Phase::baseline2).effective_policy(),
            PolicySpec::Kind::none);
  EXPECT_EQ(c.effective_policy(), PolicySpec::Kind::scripted);
}

TEST(Session, SameSeedGivesByteIdenticalLogs) {
  const auto again = run_session(default_config());
  ASSERT_EQ(again.log.size(), intervention_run().log.size());
  EXPECT_EQ(again.log, intervention_run().log);
}

TEST(Session, DifferentSeedsDiffer) {
  auto c = default_config();
  c.seed = c.session.seed = 8;
  EXPECT_NE(run_session(c).log, intervention_run().log);
}

TEST(Session, ReportCanBeRecomputedFromTheLog) {
  const auto& r = intervention_run();
  EXPECT_EQ(report_from_log(r.log).to_json(), r.report.to_json());
  EXPECT_EQ(config_from_log(r.log).seed, default_config().seed);
}

TEST(Session, ReplayReproducesTheReport) {
  TempDir tmp;
  const auto log = tmp.path / "recorded.ndjson";
  write_lines(log, intervention_run().log);
  auto c = default_config();
  c.policy.kind = PolicySpec::Kind::replay;
  c.policy.replay_file = log;
  const auto replayed = run_session(c);
  EXPECT_EQ(replayed.report.to_json(), intervention_run().report.to_json());
}

TEST(Session, ScriptedInterventionsProduceFeedback) {
  const auto& r = intervention_run();
  EXPECT_GT(r.report.usage.input_count, 0u);
  EXPECT_EQ(r.constraints.ego_overlaps, 0u);
  EXPECT_EQ(r.constraints.legality_violations, 0u);
  EXPECT_EQ(r.constraints.horizon_violations, 0u);
  EXPECT_EQ(r.report.scenarios.size(), 9u);
}

TEST(Session, BaselineRejectsInputs) {
  auto c = with_phase(default_config(), SessionSpec::Phase::baseline1);
  QueuedInputs queue;
  std::vector<std::string> log;
  SessionRunner runner(c, &queue, [&](const std::string& l) { log.push_back(l); });
  for (int i = 0; i < 50; ++i) runner.step();
  InputMessage m;
  m.kind = InputMessage::Kind::intervene;
  m.vehicle = VehicleId{1};
  m.time = runner.snapshot()->scene.time;
  queue.push(m);
  for (int i = 0; i < 50; ++i) runner.step();
  EXPECT_EQ(runner.constraints().rejected_inputs, 1u);
  EXPECT_TRUE(runner.feedback().empty());
  bool logged = false;
  for (const auto& l : log) logged |= nlohmann::json::parse(l).at("type") == "rejected";
  EXPECT_TRUE(logged);
}

TEST(Session, LiveInterventionGivesFeedback) {
  auto c = default_config();
  c.policy.kind = PolicySpec::Kind::none;
  QueuedInputs queue;
  SessionRunner runner(c, &queue, {});
  for (int i = 0; i < 100; ++i) runner.step();
  const auto snap = runner.capture();
  ASSERT_FALSE(snap->scene.others.empty());
  InputMessage m;
  m.kind = InputMessage::Kind::intervene;
  m.vehicle = snap->scene.others.front().id;
  m.time = snap->scene.time;
  queue.push(m);
  for (int i = 0; i < 20; ++i) runner.step();
  const auto fb = runner.take_new_feedback();
  ASSERT_FALSE(fb.empty());
  EXPECT_EQ(fb.front().kind, FeedbackEvent::Kind::success);
  EXPECT_TRUE(runner.take_new_feedback().empty());
}

TEST(Session, BaselinePhasesMatchEachOther) {
  auto c = default_config();
  const auto b1 = run_session(with_phase(c, SessionSpec::Phase::baseline1));
  const auto b2 = run_session(with_phase(c, SessionSpec::Phase::baseline2));
  auto strip = [](MetricsReport r) {
    r.phase.clear();
    return r.to_json();
  };
  EXPECT_EQ(strip(b1.report), strip(b2.report));
  EXPECT_EQ(b1.report.usage.input_count, 0u);
}

TEST(Session, WritesOutputs) {
  TempDir tmp;
  auto c = default_config();
  c.outputs.dir = tmp.path;
  c.outputs.csv = "trace.csv";
  write_outputs(c, intervention_run());
  EXPECT_TRUE(fs::exists(tmp.path / "run.ndjson"));
  EXPECT_TRUE(fs::exists(tmp.path / "report.json"));
  EXPECT_TRUE(fs::exists(tmp.path / "trace.csv"));
  const auto lines = read_log(tmp.path / "run.ndjson");
  EXPECT_EQ(lines, intervention_run().log);
  EXPECT_EQ(samples_from_log(lines).size(),
            static_cast<std::size_t>(intervention_run().report.ttp.samples));
}
