#include "coopdrive/server.hpp"

#include <chrono>
#include <deque>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <nlohmann/json.hpp>

namespace coopdrive {

namespace beast = boost::beast;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

using Message = std::shared_ptr<const std::string>;

// Frames queued beyond this for one client are dropped for that client.
constexpr std::size_t kMaxQueuedFrames = 256;

// Sleeps until `next`, resynchronising if the loop fell more than a second behind.
void pace(Clock::time_point& next, Clock::duration period) {
  next += period;
  const auto now = Clock::now();
  if (next < now - std::chrono::seconds(1)) next = now;
  std::this_thread::sleep_until(next);
}

// ---- live session ---------------------------------------------------------

class LiveSource final : public FrameSource {
 public:
  LiveSource(RunConfig config, double time_scale, std::optional<std::filesystem::path> log_path)
      : config_(std::move(config)), time_scale_(time_scale), log_path_(std::move(log_path)) {
    if (!(time_scale_ > 0.0)) throw ConfigError("time scale must be positive");
    config_.policy.kind = PolicySpec::Kind::none;
    config_.validate();
    phase_ = config_.session.phase;
  }

  void run(FrameSink& sink, const std::atomic<bool>& stop) override {
    restart(config_.session.phase);
    const double frame_period = 1.0 / config_.broadcast_rate;
    const auto period = std::chrono::duration_cast<Clock::duration>(
        std::chrono::duration<double>(frame_period));
    const int metrics_every = std::max(1, static_cast<int>(config_.broadcast_rate));
    auto next = Clock::now();
    double budget = 0.0;
    int last_run = -1;
    std::int64_t last_tick = -1;
    long frame = 0;
    bool sent_final = false;

    while (!stop) {
      if (apply_controls()) {
        last_run = -1;
        budget = 0.0;
        sent_final = false;
      }
      if (!paused_ && !runner_->finished()) {
        budget += time_scale_ * frame_period / config_.dt;
        while (budget >= 1.0 && runner_->step()) budget -= 1.0;
        if (runner_->finished()) budget = 0.0;
      }

      if (const auto snap = runner_->capture()) {
        if (snap->run != last_run) {
          sink.hello(protocol::hello_message(*snap->scene.road, snap->phase, snap->scenario,
                                             snap->run));
          last_run = snap->run;
          last_tick = -1;
        }
        auto feedback = runner_->take_new_feedback();
        if (snap->scene.tick != last_tick || !feedback.empty()) {
          sink.state(protocol::snapshot_message(*snap, feedback,
                                                config_.predictor.display_threshold));
          last_tick = snap->scene.tick;
        }
      }
      const bool finished = runner_->finished();
      if ((++frame % metrics_every == 0 && !finished) || (finished && !sent_final)) {
        sink.broadcast(protocol::metrics_message(runner_->report(), runner_->constraints(),
                                                 finished));
        sent_final = finished;
      }
      pace(next, period);
    }
    if (log_) log_->flush();
  }

  std::optional<std::string> on_message(const protocol::ClientMessage& m) override {
    if (m.kind == protocol::ClientMessage::Kind::control) {
      std::lock_guard lock(control_mutex_);
      controls_.push_back(m.control);
      return std::nullopt;
    }
    if (phase_.load() != SessionSpec::Phase::intervention) {
      return protocol::error_message("inputs_disabled",
                                     "inputs are only accepted in the intervention phase");
    }
    inputs_.push(m.input);
    return std::nullopt;
  }

 private:
  // Returns true when the session was restarted.
  bool apply_controls() {
    std::vector<protocol::ControlMessage> pending;
    {
      std::lock_guard lock(control_mutex_);
      pending.swap(controls_);
    }
    bool restarted = false;
    for (const auto& c : pending) {
      switch (c.action) {
        case protocol::ControlMessage::Action::pause: paused_ = true; break;
        case protocol::ControlMessage::Action::resume: paused_ = false; break;
        case protocol::ControlMessage::Action::phase:
          restart(c.phase);
          restarted = true;
          break;
      }
    }
    return restarted;
  }

  void restart(SessionSpec::Phase phase) {
    RunConfig c = config_;
    c.session.phase = phase;
    phase_ = phase;
    inputs_.clear();
    LogSink sink;
    if (log_path_) {
      if (log_path_->has_parent_path()) std::filesystem::create_directories(log_path_->parent_path());
      log_ = std::make_unique<std::ofstream>(*log_path_, std::ios::binary | std::ios::trunc);
      sink = [out = log_.get()](const std::string& line) { *out << line << '\n'; };
    }
    runner_ = std::make_unique<SessionRunner>(std::move(c), &inputs_, std::move(sink));
    runner_->step();  // emit the header and load the first scenario
  }

  RunConfig config_;
  double time_scale_;
  std::optional<std::filesystem::path> log_path_;
  std::unique_ptr<std::ofstream> log_;
  QueuedInputs inputs_;
  std::unique_ptr<SessionRunner> runner_;
  std::atomic<SessionSpec::Phase> phase_;
  bool paused_ = false;
  std::mutex control_mutex_;
  std::vector<protocol::ControlMessage> controls_;
};

// ---- log playback ---------------------------------------------------------

class ReplaySource final : public FrameSource {
 public:
  ReplaySource(const std::vector<std::string>& lines, double time_scale)
      : time_scale_(time_scale) {
    if (!(time_scale_ > 0.0)) throw ConfigError("time scale must be positive");
    const RunConfig config = config_from_log(lines);
    period_ = config.metrics.sample_period();
    final_metrics_ = protocol::metrics_message(report_from_log(lines), {}, true);

    std::string phase;
    json appearance = json::object();
    json pending = json::array();
    json current;  // latest scenario start marker
    for (const auto& line : lines) {
      const json j = json::parse(line);
      const auto type = j.at("type").get<std::string>();
      if (type == "header") {
        phase = j.at("phase").get<std::string>();
      } else if (type == "scenario_marker" && j.at("event") == "start") {
        current = j;
        appearance = j.value("appearance", json::object());
        json hello{{"kind", "hello"},
                   {"protocol_version", protocol::kVersion},
                   {"road", j.at("road")},
                   {"phase", phase},
                   {"scenario", j.at("scenario")},
                   {"run", j.at("run")}};
        frames_.push_back({true, hello.dump()});
      } else if (type == "feedback") {
        pending.push_back({{"kind", j.at("kind")}, {"vehicle", j.at("vehicle")}, {"time", j.at("at")}});
      } else if (type == "snapshot") {
        json others = json::array();
        for (auto o : j.at("others")) {
          o["style"] = appearance.value(std::to_string(o.at("id").get<std::uint32_t>()), "");
          others.push_back(std::move(o));
        }
        json plan = j.value("plan", json{{"kind", "keep_lane_cruise"}, {"level", 0.0}, {"target_lane", 0}});
        plan["emergency"] = false;
        plan["trajectory"] = json::array();
        json snap{{"kind", "snapshot"},
                  {"run", j.at("run")},
                  {"clip", current.value("clip", 0)},
                  {"scenario", current.value("scenario", "")},
                  {"phase", phase},
                  {"tick", j.at("tick")},
                  {"time", j.at("time")},
                  {"ego", j.at("ego")},
                  {"others", std::move(others)},
                  {"predictions", j.at("predictions")},
                  {"plan", std::move(plan)},
                  {"feedback", std::exchange(pending, json::array())}};
        frames_.push_back({false, snap.dump()});
      }
    }
  }

  void run(FrameSink& sink, const std::atomic<bool>& stop) override {
    const auto period = std::chrono::duration_cast<Clock::duration>(
        std::chrono::duration<double>(period_ / time_scale_));
    auto next = Clock::now();
    std::size_t i = 0;
    bool sent_final = false;
    while (!stop) {
      if (!paused_) {
        // Hello frames go out together with the snapshot that follows them.
        while (i < frames_.size() && frames_[i].hello) sink.hello(frames_[i++].text);
        if (i < frames_.size()) sink.state(frames_[i++].text);
      }
      if (i >= frames_.size() && !sent_final) {
        sink.broadcast(final_metrics_);
        sent_final = true;
      }
      pace(next, period);
    }
  }

  std::optional<std::string> on_message(const protocol::ClientMessage& m) override {
    if (m.kind != protocol::ClientMessage::Kind::control) {
      return protocol::error_message("read_only", "replay sessions do not accept inputs");
    }
    switch (m.control.action) {
      case protocol::ControlMessage::Action::pause: paused_ = true; break;
      case protocol::ControlMessage::Action::resume: paused_ = false; break;
      case protocol::ControlMessage::Action::phase:
        return protocol::error_message("unsupported", "phase cannot change during replay");
    }
    return std::nullopt;
  }

 private:
  struct Frame {
    bool hello = false;
    std::string text;
  };
  double time_scale_;
  double period_ = 0.1;
  std::vector<Frame> frames_;
  std::string final_metrics_;
  std::atomic<bool> paused_{false};
};

}  // namespace

std::unique_ptr<FrameSource> make_live_source(RunConfig config, double time_scale,
                                              std::optional<std::filesystem::path> log_path) {
  return std::make_unique<LiveSource>(std::move(config), time_scale, std::move(log_path));
}

std::unique_ptr<FrameSource> make_replay_source(std::vector<std::string> log_lines,
                                                double time_scale) {
  return std::make_unique<ReplaySource>(log_lines, time_scale);
}

// ---- transport ------------------------------------------------------------

class ClientSession;

struct Server::Impl final : FrameSink {
  Impl(std::unique_ptr<FrameSource> src, ServeOptions opts)
      : source(std::move(src)), options(std::move(opts)) {}

  void hello(std::string message) override {
    auto m = std::make_shared<const std::string>(std::move(message));
    net::post(ioc, [this, m] {
      hello_frame = m;
      state_frame.reset();
      fanout(m);
    });
  }
  void state(std::string message) override {
    auto m = std::make_shared<const std::string>(std::move(message));
    net::post(ioc, [this, m] {
      state_frame = m;
      fanout(m);
    });
  }
  void broadcast(std::string message) override {
    auto m = std::make_shared<const std::string>(std::move(message));
    net::post(ioc, [this, m] { fanout(m); });
  }

  void fanout(const Message& m);
  void join(const std::shared_ptr<ClientSession>& s);
  void leave(const std::shared_ptr<ClientSession>& s);
  void on_text(const std::shared_ptr<ClientSession>& s, const std::string& text);
  void accept();

  net::io_context ioc{1};
  net::executor_work_guard<net::io_context::executor_type> work{ioc.get_executor()};
  tcp::acceptor acceptor{ioc};
  std::unique_ptr<FrameSource> source;
  ServeOptions options;
  std::set<std::shared_ptr<ClientSession>> sessions;
  Message hello_frame;
  Message state_frame;
  std::atomic<std::size_t> clients{0};
  std::atomic<bool> stopping{false};
  std::thread io_thread;
  std::thread sim_thread;
  bool running = false;
};

class ClientSession : public std::enable_shared_from_this<ClientSession> {
 public:
  ClientSession(tcp::socket socket, Server::Impl& hub) : ws_(std::move(socket)), hub_(hub) {}

  void start() {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(beast::bind_front_handler(&ClientSession::on_accept, shared_from_this()));
  }

  void send(const Message& m) {
    if (closed_) return;
    if (queue_.size() >= kMaxQueuedFrames) return;
    queue_.push_back(m);
    if (queue_.size() == 1) write_next();
  }

  void close() {
    closed_ = true;
    beast::error_code ec;
    beast::get_lowest_layer(ws_).socket().shutdown(tcp::socket::shutdown_both, ec);
    beast::get_lowest_layer(ws_).socket().close(ec);
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return;
    hub_.join(shared_from_this());
    read();
  }

  void read() {
    ws_.async_read(buffer_, beast::bind_front_handler(&ClientSession::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      fail();
      return;
    }
    const std::string text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    hub_.on_text(shared_from_this(), text);
    read();
  }

  void write_next() {
    ws_.text(true);
    ws_.async_write(net::buffer(*queue_.front()),
                    beast::bind_front_handler(&ClientSession::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    if (ec) {
      fail();
      return;
    }
    queue_.pop_front();
    if (!queue_.empty()) write_next();
  }

  void fail() {
    if (closed_) return;
    closed_ = true;
    hub_.leave(shared_from_this());
  }

  websocket::stream<beast::tcp_stream> ws_;
  Server::Impl& hub_;
  beast::flat_buffer buffer_;
  std::deque<Message> queue_;
  bool closed_ = false;
};

void Server::Impl::fanout(const Message& m) {
  for (const auto& s : sessions) s->send(m);
}

void Server::Impl::join(const std::shared_ptr<ClientSession>& s) {
  if (stopping) {
    s->close();
    return;
  }
  sessions.insert(s);
  clients = sessions.size();
  if (hello_frame) s->send(hello_frame);
  if (state_frame) s->send(state_frame);
}

void Server::Impl::leave(const std::shared_ptr<ClientSession>& s) {
  sessions.erase(s);
  clients = sessions.size();
}

void Server::Impl::on_text(const std::shared_ptr<ClientSession>& s, const std::string& text) {
  const auto m = protocol::parse_client_message(text);
  if (m.kind == protocol::ClientMessage::Kind::invalid) {
    s->send(std::make_shared<const std::string>(protocol::error_message(m.error_code, m.error_message)));
    return;
  }
  if (auto reply = source->on_message(m)) {
    s->send(std::make_shared<const std::string>(std::move(*reply)));
  }
}

void Server::Impl::accept() {
  acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
    if (ec) return;  // acceptor closed
    std::make_shared<ClientSession>(std::move(socket), *this)->start();
    accept();
  });
}

Server::Server(std::unique_ptr<FrameSource> source, ServeOptions options)
    : impl_(std::make_unique<Impl>(std::move(source), std::move(options))) {}

Server::~Server() { stop(); }

unsigned short Server::start() {
  Impl& d = *impl_;
  if (d.running) return d.acceptor.local_endpoint().port();
  const tcp::endpoint endpoint(net::ip::make_address(d.options.address), d.options.port);
  d.acceptor.open(endpoint.protocol());
  d.acceptor.set_option(net::socket_base::reuse_address(true));
  d.acceptor.bind(endpoint);
  d.acceptor.listen(net::socket_base::max_listen_connections);
  d.accept();
  d.running = true;
  d.io_thread = std::thread([&d] { d.ioc.run(); });
  d.sim_thread = std::thread([&d] { d.source->run(d, d.stopping); });
  return d.acceptor.local_endpoint().port();
}

void Server::stop() {
  Impl& d = *impl_;
  if (!d.running) return;
  d.running = false;
  d.stopping = true;
  if (d.sim_thread.joinable()) d.sim_thread.join();
  net::post(d.ioc, [&d] {
    beast::error_code ec;
    d.acceptor.close(ec);
    for (const auto& s : d.sessions) s->close();
    d.sessions.clear();
    d.clients = 0;
    d.work.reset();
  });
  if (d.io_thread.joinable()) d.io_thread.join();
}

std::size_t Server::client_count() const { return impl_->clients; }

}  // namespace coopdrive
