#pragma once

// Driving-performance measures over sampled traffic: time to passing,
// time headway, sub-threshold headway episodes and intervention usage.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "coopdrive/intervention.hpp"
#include "coopdrive/scene.hpp"

namespace coopdrive {

struct MetricsConfig {
  double ttp_range = 150.0;
  double thw_threshold = 2.0;
  double sample_rate = 10.0;  // Hz

  double sample_period() const { return 1.0 / sample_rate; }
  void validate() const;
};

/// Time for `rear` to reach `lead` at constant speeds; infinity if it is not
/// closing. A negative gap yields 0.
double ttp(double rear_vel, double lead_vel, double gap);

/// gap / follower_vel; infinity for a stationary follower.
double headway(double follower_vel, double gap);

/// One metrics-rate sample of the traffic state.
struct TrafficSample {
  std::int64_t tick = 0;
  double time = 0.0;
  int run = 0;  // index of the scenario run within the session
  VehicleState ego;
  std::vector<VehicleState> others;
};

/// TTP values (ego as rear) toward front, front-left and front-right
/// vehicles within range at this sample. May contain infinities.
std::vector<double> ttp_values(const TrafficSample& sample, const MetricsConfig& config);

struct TtpStats {
  std::optional<double> mean;  // absent when no finite value was seen
  std::size_t finite_values = 0;
  std::size_t samples = 0;
};

TtpStats session_ttp(const std::vector<TrafficSample>& samples, const MetricsConfig& config);

struct EpisodeStats {
  std::size_t count = 0;
  double total_duration = 0.0;

  bool operator==(const EpisodeStats&) const = default;
};

/// Episodes of headway below threshold toward each same-lane front vehicle.
EpisodeStats thw_episodes(const std::vector<TrafficSample>& samples,
                          const MetricsConfig& config);

/// Episodes in a single headway trace sampled at a fixed period.
EpisodeStats thw_episodes(const std::vector<double>& thw_trace, double threshold,
                          double period);

struct FeedbackRecord {
  int run = 0;
  FeedbackEvent event;
};

struct UsageStats {
  std::size_t input_count = 0;
  std::size_t behavior_change_count = 0;
  std::size_t suppressed_count = 0;
  std::size_t no_effect_count = 0;
  std::size_t failure_count = 0;

  double behavior_change_rate() const {
    return input_count == 0 ? 0.0
                            : static_cast<double>(behavior_change_count) /
                                  static_cast<double>(input_count);
  }
};

UsageStats usage_stats(const std::vector<FeedbackEvent>& feedback);

struct ScenarioRunInfo {
  int run = 0;
  int clip = 0;
  std::string scenario;
};

struct ScenarioBreakdown {
  ScenarioRunInfo info;
  TtpStats ttp;
  EpisodeStats episodes;
  UsageStats usage;
};

struct MetricsReport {
  std::string phase;
  std::uint64_t seed = 0;
  TtpStats ttp;
  EpisodeStats episodes;
  UsageStats usage;
  std::vector<ScenarioBreakdown> scenarios;

  std::string to_json() const;
  static MetricsReport from_json(const std::string& text);
};

MetricsReport compute_report(const std::string& phase, std::uint64_t seed,
                             const std::vector<ScenarioRunInfo>& runs,
                             const std::vector<TrafficSample>& samples,
                             const std::vector<FeedbackRecord>& feedback,
                             const MetricsConfig& config);

/// Per-sample, per-front-vehicle TTP and THW rows for plotting.
void write_trace_csv(std::ostream& out, const std::vector<TrafficSample>& samples,
                     const MetricsConfig& config);

}  // namespace coopdrive
