#pragma once

// Session orchestration: run configuration, the simulation loop shared by
// headless and live modes, scripted and replayed intervention policies, and
// the newline-delimited JSON run log.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "coopdrive/intervention.hpp"
#include "coopdrive/metrics.hpp"
#include "coopdrive/planner.hpp"
#include "coopdrive/prediction.hpp"
#include "coopdrive/world.hpp"

namespace coopdrive {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One scripted intervention: when `trigger` fires for the vehicle tagged
/// `target`, the policy looks at it and double-taps.
struct PolicyAction {
  Trigger trigger;
  std::string target;
};

struct PolicySpec {
  enum class Kind { none, scripted, replay };
  Kind kind = Kind::none;
  std::map<std::string, std::vector<PolicyAction>> scripted;  // keyed by scenario id
  std::filesystem::path replay_file;
};

std::string_view to_string(PolicySpec::Kind k);

struct OutputSpec {
  std::filesystem::path dir = "out";
  std::string log = "run.ndjson";
  std::string report = "report.json";
  std::string csv;  // empty: no trace export
};

struct RunConfig {
  SessionSpec session;
  PredictorConfig predictor;
  PlannerConfig planner;
  MetricsConfig metrics;
  InterventionConfig intervention;
  PolicySpec policy;
  std::uint64_t seed = 0;
  double dt = 0.01;
  int planning_interval = 10;  // sim steps per planning tick
  double broadcast_rate = 20.0;
  std::optional<std::filesystem::path> scenario_dir;
  OutputSpec outputs;

  /// Throws ConfigError. Replay files must exist.
  void validate() const;

  /// The policy actually in force: baseline phases never intervene.
  PolicySpec::Kind effective_policy() const;

  ScenarioLibrary library() const;
};

RunConfig parse_run_config(const std::string& json_text,
                           const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
std::string run_config_to_json(const RunConfig& config);

/// Client-side inputs. Times are simulation seconds.
struct InputMessage {
  enum class Kind { gaze, tap, intervene };
  Kind kind = Kind::tap;
  double time = 0.0;
  Vec3 origin{0.0, 0.0, 0.0};
  Vec3 direction{1.0, 0.0, 0.0};
  VehicleId vehicle;
};

std::string_view to_string(InputMessage::Kind k);

struct RunSlot {
  int run = 0;
  int clip = 0;
  ScenarioId scenario = ScenarioId::a_cut_in;
};

std::vector<RunSlot> session_runs(const SessionSpec& spec);

/// Supplies inputs at each planning tick.
class InputSource {
 public:
  virtual ~InputSource() = default;
  virtual std::vector<InputMessage> inputs(const RunSlot& slot, const World& world) = 0;
};

/// Gaze toward a tagged vehicle plus a double-tap whenever its trigger fires;
/// each action fires at most once per scenario run.
class ScriptedPolicy : public InputSource {
 public:
  ScriptedPolicy(std::map<std::string, std::vector<PolicyAction>> actions,
                 InterventionConfig gaze, std::uint64_t seed);
  std::vector<InputMessage> inputs(const RunSlot& slot, const World& world) override;

 private:
  std::map<std::string, std::vector<PolicyAction>> actions_;
  InterventionConfig gaze_;
  std::uint64_t seed_;
  int run_ = -1;
  std::vector<bool> fired_;
  std::mt19937_64 rng_;
};

/// Re-issues the input records of a run log at their original ticks.
class ReplayPolicy : public InputSource {
 public:
  explicit ReplayPolicy(const std::filesystem::path& log);
  std::vector<InputMessage> inputs(const RunSlot& slot, const World& world) override;

 private:
  std::map<std::pair<int, std::int64_t>, std::vector<InputMessage>> by_tick_;
};

/// Thread-safe queue for live clients; drained at planning ticks.
class QueuedInputs : public InputSource {
 public:
  void push(const InputMessage& m);
  void clear();
  std::vector<InputMessage> inputs(const RunSlot& slot, const World& world) override;

 private:
  std::mutex mutex_;
  std::vector<InputMessage> queue_;
};

/// Counters for properties that must hold in every run.
struct ConstraintCounters {
  std::size_t ego_overlaps = 0;
  std::size_t legality_violations = 0;   // fused change above base across solid
  std::size_t horizon_violations = 0;    // far injection changed the plan
  std::size_t horizon_checks = 0;
  std::size_t rejected_inputs = 0;       // inputs outside the intervention phase
};

/// Immutable per-tick state handed to observers.
struct SceneSnapshot {
  int run = 0;
  int clip = 0;
  std::string scenario;
  std::string phase;
  TrafficScene scene;
  std::vector<BehaviorPrediction> predictions;
  PlanTrace plan;
  std::vector<FeedbackEvent> pending_feedback;
  AppearanceTable appearance;
};

/// Receives one JSON object per log line.
using LogSink = std::function<void(const std::string& line)>;

/// Steps a whole session. Headless runs call run_to_end(); the live server
/// calls step() from its simulation thread.
class SessionRunner {
 public:
  SessionRunner(RunConfig config, InputSource* inputs, LogSink sink);

  const RunConfig& config() const { return config_; }
  bool finished() const { return finished_; }

  /// Advances one simulation step (moving to the next scenario run when the
  /// current one ends). Returns false once the session is over.
  bool step();
  void run_to_end();

  /// Latest planning-tick view of the world; null before the first step.
  std::shared_ptr<const SceneSnapshot> snapshot() const { return snapshot_; }
  /// Fresh view of the current step with the latest plan and predictions.
  std::shared_ptr<const SceneSnapshot> capture() const;
  const RunSlot* current_slot() const;

  const std::vector<TrafficSample>& samples() const { return samples_; }
  const std::vector<FeedbackRecord>& feedback() const { return feedback_; }
  const std::vector<ScenarioRunInfo>& runs() const { return run_infos_; }
  const ConstraintCounters& constraints() const { return constraints_; }
  MetricsReport report() const;

  /// Feedback emitted since the last call (for live clients).
  std::vector<FeedbackEvent> take_new_feedback();

 private:
  void start_run(std::size_t index);
  void finish_run();
  void planning_tick();
  void handle_inputs(const std::vector<InputMessage>& inputs);
  void emit_feedback(const std::vector<FeedbackEvent>& events);
  void record_sample();
  void check_overlap();
  void log(const std::string& line);

  RunConfig config_;
  InputSource* inputs_;
  LogSink sink_;
  ScenarioLibrary library_;
  std::vector<RunSlot> slots_;
  std::size_t slot_ = 0;
  std::unique_ptr<World> world_;
  std::int64_t steps_in_run_ = 0;
  std::int64_t run_steps_ = 0;
  int sample_interval_ = 10;
  bool finished_ = false;
  bool started_ = false;

  InjectionStore store_;
  InterventionGateway gateway_;
  std::optional<ManeuverCandidate> previous_;
  PlanTrace current_plan_;
  std::vector<BehaviorPrediction> predictions_;
  LongLatCommand command_;
  AppearanceTable appearance_;
  bool overlapping_ = false;

  std::shared_ptr<const SceneSnapshot> snapshot_;
  std::vector<TrafficSample> samples_;
  std::vector<FeedbackRecord> feedback_;
  std::vector<FeedbackEvent> new_feedback_;
  std::vector<ScenarioRunInfo> run_infos_;
  ConstraintCounters constraints_;
};

struct SessionResult {
  MetricsReport report;
  ConstraintCounters constraints;
  std::vector<std::string> log;
};

/// Headless run with the configured policy; the log is kept in memory.
SessionResult run_session(const RunConfig& config);

/// Writes log, report and optional CSV under config.outputs.dir.
void write_outputs(const RunConfig& config, const SessionResult& result);

/// Recomputes the metrics report from run-log lines alone.
MetricsReport report_from_log(const std::vector<std::string>& lines);
std::vector<std::string> read_log(const std::filesystem::path& path);
/// Samples recovered from run-log lines, for CSV export.
std::vector<TrafficSample> samples_from_log(const std::vector<std::string>& lines);

/// Header record of a run log.
RunConfig config_from_log(const std::vector<std::string>& lines);

}  // namespace coopdrive
