#include "coopdrive/metrics.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace coopdrive {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using nlohmann::json;

json ttp_json(const TtpStats& t) {
  return {{"mean", t.mean ? json(*t.mean) : json(nullptr)},
          {"finite_values", t.finite_values},
          {"samples", t.samples}};
}

TtpStats ttp_from(const json& j) {
  TtpStats t;
  if (!j.at("mean").is_null()) t.mean = j.at("mean").get<double>();
  t.finite_values = j.at("finite_values").get<std::size_t>();
  t.samples = j.at("samples").get<std::size_t>();
  return t;
}

json episodes_json(const EpisodeStats& e) {
  return {{"count", e.count}, {"total_duration", e.total_duration}};
}

EpisodeStats episodes_from(const json& j) {
  return {j.at("count").get<std::size_t>(), j.at("total_duration").get<double>()};
}

json usage_json(const UsageStats& u) {
  return {{"input_count", u.input_count},
          {"behavior_change_count", u.behavior_change_count},
          {"behavior_change_rate", u.behavior_change_rate()},
          {"suppressed_count", u.suppressed_count},
          {"no_effect_count", u.no_effect_count},
          {"failure_count", u.failure_count}};
}

UsageStats usage_from(const json& j) {
  UsageStats u;
  u.input_count = j.at("input_count").get<std::size_t>();
  u.behavior_change_count = j.at("behavior_change_count").get<std::size_t>();
  u.suppressed_count = j.at("suppressed_count").get<std::size_t>();
  u.no_effect_count = j.at("no_effect_count").get<std::size_t>();
  u.failure_count = j.at("failure_count").get<std::size_t>();
  return u;
}

// Running mean over finite TTP values.
struct TtpAccumulator {
  double sum = 0.0;
  std::size_t finite = 0;
  std::size_t samples = 0;

  void add(const TrafficSample& s, const MetricsConfig& config) {
    ++samples;
    for (double v : ttp_values(s, config)) {
      if (std::isfinite(v)) {
        sum += v;
        ++finite;
      }
    }
  }
  TtpStats stats() const {
    TtpStats t;
    t.samples = samples;
    t.finite_values = finite;
    if (finite > 0) t.mean = sum / static_cast<double>(finite);
    return t;
  }
};

}  // namespace

void MetricsConfig::validate() const {
  if (!(ttp_range > 0.0 && thw_threshold > 0.0 && sample_rate > 0.0)) {
    throw std::invalid_argument("metrics config values must be positive");
  }
}

double ttp(double rear_vel, double lead_vel, double gap) {
  if (gap < 0.0) return 0.0;
  if (rear_vel > lead_vel) return gap / (rear_vel - lead_vel);
  return kInf;
}

double headway(double follower_vel, double gap) {
  if (follower_vel == 0.0) return kInf;
  return gap / follower_vel;
}

std::vector<double> ttp_values(const TrafficSample& sample, const MetricsConfig& config) {
  std::vector<double> out;
  for (const auto& o : sample.others) {
    const LaneRelation r = lane_relation(sample.ego, o);
    if (r != LaneRelation::front && r != LaneRelation::front_left &&
        r != LaneRelation::front_right) {
      continue;
    }
    const double g = gap(sample.ego, o);
    if (g > config.ttp_range) continue;
    out.push_back(ttp(sample.ego.vel, o.vel, g));
  }
  return out;
}

TtpStats session_ttp(const std::vector<TrafficSample>& samples, const MetricsConfig& config) {
  TtpAccumulator acc;
  for (const auto& s : samples) acc.add(s, config);
  return acc.stats();
}

EpisodeStats thw_episodes(const std::vector<TrafficSample>& samples,
                          const MetricsConfig& config) {
  EpisodeStats stats;
  const double period = config.sample_period();
  std::set<std::pair<int, std::uint32_t>> open;
  for (const auto& s : samples) {
    std::set<std::pair<int, std::uint32_t>> below;
    for (const auto& o : s.others) {
      if (lane_relation(s.ego, o) != LaneRelation::front) continue;
      if (headway(s.ego.vel, gap(s.ego, o)) < config.thw_threshold) {
        below.insert({s.run, o.id.value});
      }
    }
    for (const auto& key : below) {
      if (!open.count(key)) ++stats.count;
      stats.total_duration += period;
    }
    open = std::move(below);
  }
  return stats;
}

EpisodeStats thw_episodes(const std::vector<double>& thw_trace, double threshold,
                          double period) {
  EpisodeStats stats;
  bool in_episode = false;
  for (double v : thw_trace) {
    const bool below = v < threshold;
    if (below && !in_episode) ++stats.count;
    if (below) stats.total_duration += period;
    in_episode = below;
  }
  return stats;
}

UsageStats usage_stats(const std::vector<FeedbackEvent>& feedback) {
  UsageStats u;
  for (const auto& f : feedback) {
    switch (f.kind) {
      case FeedbackEvent::Kind::success: ++u.input_count; break;
      case FeedbackEvent::Kind::failure: ++u.failure_count; break;
      case FeedbackEvent::Kind::suppressed: ++u.suppressed_count; break;
      case FeedbackEvent::Kind::no_effect: ++u.no_effect_count; break;
    }
  }
  u.behavior_change_count =
      u.input_count >= u.no_effect_count ? u.input_count - u.no_effect_count : 0;
  return u;
}

MetricsReport compute_report(const std::string& phase, std::uint64_t seed,
                             const std::vector<ScenarioRunInfo>& runs,
                             const std::vector<TrafficSample>& samples,
                             const std::vector<FeedbackRecord>& feedback,
                             const MetricsConfig& config) {
  MetricsReport report;
  report.phase = phase;
  report.seed = seed;
  report.ttp = session_ttp(samples, config);
  report.episodes = thw_episodes(samples, config);

  std::vector<FeedbackEvent> all;
  std::map<int, std::vector<FeedbackEvent>> by_run;
  for (const auto& f : feedback) {
    all.push_back(f.event);
    by_run[f.run].push_back(f.event);
  }
  report.usage = usage_stats(all);

  std::map<int, std::vector<TrafficSample>> samples_by_run;
  for (const auto& s : samples) samples_by_run[s.run].push_back(s);
  for (const auto& info : runs) {
    ScenarioBreakdown b;
    b.info = info;
    const auto& rs = samples_by_run[info.run];
    b.ttp = session_ttp(rs, config);
    b.episodes = thw_episodes(rs, config);
    b.usage = usage_stats(by_run[info.run]);
    report.scenarios.push_back(std::move(b));
  }
  return report;
}

std::string MetricsReport::to_json() const {
  json scen = json::array();
  for (const auto& b : scenarios) {
    scen.push_back({{"run", b.info.run},
                    {"clip", b.info.clip},
                    {"scenario", b.info.scenario},
                    {"ttp", ttp_json(b.ttp)},
                    {"thw_episodes", episodes_json(b.episodes)},
                    {"usage", usage_json(b.usage)}});
  }
  json j{{"phase", phase},
         {"seed", seed},
         {"ttp", ttp_json(ttp)},
         {"thw_episodes", episodes_json(episodes)},
         {"usage", usage_json(usage)},
         {"scenarios", scen}};
  return j.dump(2);
}

MetricsReport MetricsReport::from_json(const std::string& text) {
  const json j = json::parse(text);
  MetricsReport r;
  r.phase = j.at("phase").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.ttp = ttp_from(j.at("ttp"));
  r.episodes = episodes_from(j.at("thw_episodes"));
  r.usage = usage_from(j.at("usage"));
  for (const auto& sj : j.at("scenarios")) {
    ScenarioBreakdown b;
    b.info.run = sj.at("run").get<int>();
    b.info.clip = sj.at("clip").get<int>();
    b.info.scenario = sj.at("scenario").get<std::string>();
    b.ttp = ttp_from(sj.at("ttp"));
    b.episodes = episodes_from(sj.at("thw_episodes"));
    b.usage = usage_from(sj.at("usage"));
    r.scenarios.push_back(std::move(b));
  }
  return r;
}

void write_trace_csv(std::ostream& out, const std::vector<TrafficSample>& samples,
                     const MetricsConfig& config) {
  out << "run,tick,time,vehicle,relation,gap,ttp,thw\n";
  const auto old_precision = out.precision(10);
  for (const auto& s : samples) {
    for (const auto& o : s.others) {
      const LaneRelation r = lane_relation(s.ego, o);
      if (!is_ahead(r)) continue;
      const double g = gap(s.ego, o);
      if (g > config.ttp_range) continue;
      out << s.run << ',' << s.tick << ',' << s.time << ',' << o.id.value << ','
          << to_string(r) << ',' << g << ',' << ttp(s.ego.vel, o.vel, g) << ','
          << headway(s.ego.vel, g) << '\n';
    }
  }
  out.precision(old_precision);
}

}  // namespace coopdrive
