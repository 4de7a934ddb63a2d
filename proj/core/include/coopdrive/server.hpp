#pragma once

// Live WebSocket endpoint. One simulation thread owns the authoritative
// session and pushes frames; one network thread fans them out to every
// connected client and feeds client messages back.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "coopdrive/protocol.hpp"
#include "coopdrive/runner.hpp"

namespace coopdrive {

struct ServeOptions {
  std::string address = "127.0.0.1";
  unsigned short port = 8765;  // 0 picks a free port
  double time_scale = 1.0;     // simulated seconds per wall second
};

/// Implemented by the server; safe to call from the simulation thread.
class FrameSink {
 public:
  virtual ~FrameSink() = default;
  /// Broadcast and remember as the greeting for clients that join later.
  virtual void hello(std::string message) = 0;
  /// Broadcast and remember as the latest full state for late joiners.
  virtual void state(std::string message) = 0;
  virtual void broadcast(std::string message) = 0;
};

class FrameSource {
 public:
  virtual ~FrameSource() = default;
  /// Simulation thread body. Returns once `stop` is set.
  virtual void run(FrameSink& sink, const std::atomic<bool>& stop) = 0;
  /// Called on the network thread. Returns an error reply for the sender.
  virtual std::optional<std::string> on_message(const protocol::ClientMessage& message) = 0;
};

/// Live session driven by client inputs. The config's scripted policy is not
/// used. When `log_path` is set the run log is streamed there.
std::unique_ptr<FrameSource> make_live_source(RunConfig config, double time_scale,
                                              std::optional<std::filesystem::path> log_path);

/// Plays back the snapshot records of a run log. Read-only: inputs are refused.
std::unique_ptr<FrameSource> make_replay_source(std::vector<std::string> log_lines,
                                                double time_scale);

class Server {
 public:
  Server(std::unique_ptr<FrameSource> source, ServeOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds, starts both threads and returns the bound port. Throws on bind failure.
  unsigned short start();
  void stop();
  std::size_t client_count() const;

 private:
  friend class ClientSession;
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace coopdrive
