#pragma once

// Live protocol messages (JSON text frames). Encoding and decoding only; the
// transport lives in server.hpp.
//
// Server to client: hello, snapshot, metrics_update, error.
// Client to server: gaze, tap, intervene, control.

#include <string>
#include <string_view>
#include <vector>

#include "coopdrive/runner.hpp"

namespace coopdrive::protocol {

inline constexpr int kVersion = 1;

struct ControlMessage {
  enum class Action { pause, resume, phase };
  Action action = Action::pause;
  SessionSpec::Phase phase = SessionSpec::Phase::baseline1;  // Action::phase only
};

struct ClientMessage {
  enum class Kind { input, control, invalid };
  Kind kind = Kind::invalid;
  InputMessage input;
  ControlMessage control;
  std::string error_code;  // Kind::invalid only
  std::string error_message;
};

/// Never throws. Unknown fields are ignored; unknown kinds and malformed
/// payloads come back as Kind::invalid with an error code.
ClientMessage parse_client_message(std::string_view text);

std::string hello_message(const RoadModel& road, const std::string& phase,
                          const std::string& scenario, int run);

/// `display_threshold` hides low-probability system predictions, as in the
/// cockpit overlay; injected predictions are always shown.
std::string snapshot_message(const SceneSnapshot& snap, const std::vector<FeedbackEvent>& feedback,
                             double display_threshold);

std::string metrics_message(const MetricsReport& report, const ConstraintCounters& counters,
                            bool final);

std::string error_message(std::string_view code, std::string_view message);

}  // namespace coopdrive::protocol
