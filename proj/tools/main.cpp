#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "coopdrive/runner.hpp"
#include "coopdrive/server.hpp"

namespace fs = std::filesystem;
using namespace coopdrive;

namespace {

std::atomic<bool> g_interrupted{false};

extern "C" void on_signal(int) { g_interrupted = true; }

int serve_until_interrupted(std::unique_ptr<FrameSource> source, const ServeOptions& options) {
  Server server(std::move(source), options);
  const auto port = server.start();
  std::cout << "listening on ws://" << options.address << ':' << port << "  (Ctrl-C to stop)"
            << std::endl;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
  return 0;
}

void print_summary(const MetricsReport& r, const ConstraintCounters* c) {
  std::cout << "phase " << r.phase << "  seed " << r.seed << '\n';
  std::cout << "  mean TTP        ";
  if (r.ttp.mean) {
    std::cout << *r.ttp.mean << " s over " << r.ttp.finite_values << " values\n";
  } else {
    std::cout << "n/a (no closing vehicle)\n";
  }
  std::cout << "  THW<thr episodes " << r.episodes.count << ", " << r.episodes.total_duration
            << " s\n";
  std::cout << "  inputs          " << r.usage.input_count << " (changed behavior "
            << r.usage.behavior_change_count << ", suppressed " << r.usage.suppressed_count
            << ", no effect " << r.usage.no_effect_count << ", failed "
            << r.usage.failure_count << ")\n";
  if (c != nullptr) {
    std::cout << "  overlaps " << c->ego_overlaps << "  legality " << c->legality_violations
              << "  horizon " << c->horizon_violations << "/" << c->horizon_checks << '\n';
  }
}

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed,
            std::optional<std::string> phase, std::optional<std::string> out,
            std::optional<std::string> csv, bool quiet) {
  RunConfig config = load_run_config(config_path);
  if (seed) {
    config.seed = *seed;
    config.session.seed = *seed;
  }
  if (phase) config.session.phase = session_phase_from_string(*phase);
  if (out) config.outputs.dir = *out;
  if (csv) config.outputs.csv = *csv;
  config.validate();

  const SessionResult result = run_session(config);
  write_outputs(config, result);
  if (!quiet) {
    print_summary(result.report, &result.constraints);
    std::cout << "  wrote " << (config.outputs.dir / config.outputs.log).string() << '\n';
  }
  return 0;
}

int cmd_metrics(const std::string& log_path, const std::string& report_path,
                const std::string& csv_path) {
  const auto lines = read_log(log_path);
  const MetricsReport report = report_from_log(lines);
  if (report_path.empty() || report_path == "-") {
    std::cout << report.to_json() << '\n';
  } else {
    std::ofstream out(report_path, std::ios::binary);
    out << report.to_json() << '\n';
    if (!out) throw std::runtime_error("failed to write " + report_path);
    print_summary(report, nullptr);
  }
  if (!csv_path.empty()) {
    const RunConfig config = config_from_log(lines);
    std::ofstream out(csv_path, std::ios::binary);
    write_trace_csv(out, samples_from_log(lines), config.metrics);
  }
  return 0;
}

int cmd_serve(const std::string& config_path, const ServeOptions& options,
              std::optional<std::string> phase, std::optional<std::string> log) {
  RunConfig config = load_run_config(config_path);
  if (phase) config.session.phase = session_phase_from_string(*phase);
  std::optional<fs::path> log_path;
  if (log) log_path = *log;
  return serve_until_interrupted(make_live_source(config, options.time_scale, log_path), options);
}

int cmd_replay(const std::string& log_path, const ServeOptions& options) {
  return serve_until_interrupted(make_replay_source(read_log(log_path), options.time_scale),
                                 options);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cooperative driving simulator: headless sessions, metrics and live serving"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> phase;
  std::optional<std::string> out;
  std::optional<std::string> csv;
  bool quiet = false;
  auto* run = app.add_subcommand("run", "Run a full session headless at maximum speed");
  run->add_option("--config", config_path, "Run config JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Override the config seed");
  run->add_option("--phase", phase, "baseline1, intervention or baseline2")
      ->check(CLI::IsMember({"baseline1", "intervention", "baseline2"}));
  run->add_option("--out", out, "Output directory");
  run->add_option("--csv", csv, "Also write a per-sample TTP/THW trace with this file name");
  run->add_flag("-q,--quiet", quiet, "No summary on stdout");

  std::string log_path;
  std::string report_path;
  std::string csv_path;
  auto* metrics = app.add_subcommand("metrics", "Recompute the metrics report from a run log");
  metrics->add_option("runlog", log_path, "NDJSON run log")->required()->check(CLI::ExistingFile);
  metrics->add_option("--report", report_path, "Report JSON path ('-' for stdout)");
  metrics->add_option("--csv", csv_path, "Per-sample TTP/THW trace CSV path");

  ServeOptions serve_options;
  std::optional<std::string> serve_phase;
  std::optional<std::string> serve_log;
  auto* serve = app.add_subcommand("serve", "Run a live session for cockpit clients over WebSocket");
  serve->add_option("--config", config_path, "Run config JSON")->required()->check(CLI::ExistingFile);
  serve->add_option("--port", serve_options.port, "TCP port (0 picks a free one)")
      ->capture_default_str();
  serve->add_option("--address", serve_options.address, "Bind address")->capture_default_str();
  serve->add_option("--time-scale", serve_options.time_scale, "Simulated seconds per wall second")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  serve->add_option("--phase", serve_phase, "Start in this phase")
      ->check(CLI::IsMember({"baseline1", "intervention", "baseline2"}));
  serve->add_option("--log", serve_log, "Stream the run log to this file");

  std::string replay_log;
  auto* replay = app.add_subcommand("replay", "Serve a recorded run log to cockpit clients");
  replay->add_option("runlog", replay_log, "NDJSON run log")->required()->check(CLI::ExistingFile);
  replay->add_option("--port", serve_options.port, "TCP port")->capture_default_str();
  replay->add_option("--address", serve_options.address, "Bind address")->capture_default_str();
  replay->add_option("--time-scale", serve_options.time_scale, "Playback speed")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config_path, seed, phase, out, csv, quiet);
    if (*metrics) return cmd_metrics(log_path, report_path, csv_path);
    if (*serve) return cmd_serve(config_path, serve_options, serve_phase, serve_log);
    if (*replay) return cmd_replay(replay_log, serve_options);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
