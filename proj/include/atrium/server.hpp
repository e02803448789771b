#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "atrium/render.hpp"
#include "atrium/service.hpp"
#include "atrium/storage.hpp"

// After Eigen: <resolv.h>, pulled in by httplib, defines a `_res` macro.
#include <httplib.h>

namespace atrium {

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::optional<std::filesystem::path> ui_dir;    // static files mounted at /
  std::optional<std::filesystem::path> data_dir;  // day session snapshots
  double snapshot_period = 60.0;                  // s of engine time
  std::chrono::milliseconds event_poll{1000};     // SSE keep-alive interval
};

/// HTTP front end of a LiveEngine.
///
///   GET  /state                 published snapshot (503 until the first tick)
///   GET  /render.png            current frame, ?width=&height=
///   POST /live/open             {"canvas_width", "canvas_height"}
///   POST /live/{id}/samples     {"samples": [{"t", "x", "y"}, ...]}
///   GET  /live/{id}/events      server-sent events, one JSON object each
///   POST /live/{id}/close
class LiveServer {
 public:
  using Json = nlohmann::json;

  LiveServer(LiveEngine& engine, ServerOptions opts) : engine_(engine), opts_(std::move(opts)) { install_routes(); }
  ~LiveServer() { stop(); }

  LiveServer(const LiveServer&) = delete;
  LiveServer& operator=(const LiveServer&) = delete;

  httplib::Server& http() { return server_; }

  /// Starts the engine clock thread (frame_rate ticks per second).
  void start_engine() {
    if (engine_thread_.joinable()) return;
    running_ = true;
    engine_thread_ = std::thread([this] { engine_loop(); });
  }

  /// Binds and serves; blocks until stop().
  bool listen() {
    if (opts_.port == 0) {
      bound_port_ = server_.bind_to_any_port(opts_.host);
      if (bound_port_ <= 0) return false;
      return server_.listen_after_bind();
    }
    bound_port_ = opts_.port;
    return server_.listen(opts_.host, opts_.port);
  }

  /// Binds to a free port without serving yet; returns the port.
  int bind_any_port() {
    bound_port_ = server_.bind_to_any_port(opts_.host);
    return bound_port_;
  }
  bool listen_after_bind() { return server_.listen_after_bind(); }
  int port() const { return bound_port_; }

  void stop() {
    server_.stop();
    if (engine_thread_.joinable()) {
      running_ = false;
      engine_thread_.join();
      engine_.finish();
      persist();
    }
  }

 private:
  static void send_json(httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, status, {{"schema_version", kWireSchemaVersion}, {"error", message}});
  }

  static std::optional<Json> parse_body(const httplib::Request& req, httplib::Response& res) {
    try {
      return Json::parse(req.body);
    } catch (const Json::exception& e) {
      send_error(res, 400, std::string("malformed JSON: ") + e.what());
      return std::nullopt;
    }
  }

  void install_routes() {
    server_.Get("/state", [this](const httplib::Request&, httplib::Response& res) {
      const auto snap = engine_.snapshot();
      if (!snap) return send_error(res, 503, "engine not ready");
      res.set_content(*snap, "application/json");
    });

    server_.Get("/render.png", [this](const httplib::Request& req, httplib::Response& res) {
      int w = 960, h = 540;
      try {
        if (req.has_param("width")) w = std::stoi(req.get_param_value("width"));
        if (req.has_param("height")) h = std::stoi(req.get_param_value("height"));
      } catch (const std::exception&) {
        return send_error(res, 400, "width and height must be integers");
      }
      if (w <= 0 || h <= 0 || w > 4096 || h > 4096) return send_error(res, 400, "canvas size out of range");
      RenderOptions ro;
      ro.bounds = engine_.config().pipeline.tracker.bounds;
      ro.atypical = engine_.atypical_flags();
      const auto session = engine_.session();
      const auto live = engine_.live_session_tracks();
      const auto img = render_frame(session, live, engine_.now() + engine_.config().day_offset, w, h, ro);
      const auto bytes = encode_png(img);
      res.set_content(std::string(bytes.begin(), bytes.end()), "image/png");
    });

    server_.Post("/live/open", [this](const httplib::Request& req, httplib::Response& res) {
      const auto body = parse_body(req, res);
      if (!body) return;
      try {
        const double w = body->at("canvas_width").get<double>();
        const double h = body->at("canvas_height").get<double>();
        const auto opened = engine_.open(w, h);
        send_json(res, 201, {{"schema_version", kWireSchemaVersion},
                             {"session_id", opened.id},
                             {"mapping", opened.mapping.to_json()},
                             {"frame_rate", engine_.frame_rate()}});
      } catch (const Json::exception& e) {
        send_error(res, 400, std::string("canvas_width and canvas_height are required numbers: ") + e.what());
      } catch (const Error& e) {
        send_error(res, 400, e.what());
      }
    });

    server_.Post(R"(/live/([A-Za-z0-9]+)/samples)", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      if (!engine_.is_open(id)) return send_error(res, 404, "unknown or closed live session");
      const auto body = parse_body(req, res);
      if (!body) return;
      std::vector<PointerSample> samples;
      try {
        for (const auto& s : body->at("samples"))
          samples.push_back({s.value("t", 0.0), s.at("x").get<double>(), s.at("y").get<double>()});
      } catch (const Json::exception& e) {
        // A malformed batch is a protocol violation: the session ends.
        try {
          engine_.close(id);
        } catch (const Error&) {
        }
        return send_error(res, 400, std::string("malformed samples: ") + e.what());
      }
      try {
        const auto n = engine_.submit(id, samples);
        send_json(res, 202, {{"schema_version", kWireSchemaVersion}, {"accepted", n}});
      } catch (const Error& e) {
        send_error(res, 400, e.what());
      }
    });

    server_.Get(R"(/live/([A-Za-z0-9]+)/events)", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      if (!engine_.is_open(id)) return send_error(res, 404, "unknown or closed live session");
      res.set_header("Cache-Control", "no-cache");
      res.set_chunked_content_provider("text/event-stream", [this, id](std::size_t, httplib::DataSink& sink) {
        bool closed = false;
        std::vector<std::string> events;
        try {
          events = engine_.poll(id, opts_.event_poll, closed);
        } catch (const Error&) {
          sink.done();
          return true;
        }
        if (events.empty() && !closed) {
          const std::string ping = ": keep-alive\n\n";
          return sink.write(ping.data(), ping.size());
        }
        for (const auto& e : events) {
          const std::string frame = "data: " + e + "\n\n";
          if (!sink.write(frame.data(), frame.size())) return false;
        }
        if (closed) sink.done();
        return true;
      });
    });

    server_.Post(R"(/live/([A-Za-z0-9]+)/close)", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      try {
        engine_.close(id);
        send_json(res, 200, {{"schema_version", kWireSchemaVersion}, {"closed", id}});
      } catch (const Error& e) {
        send_error(res, 404, e.what());
      }
    });

    if (opts_.ui_dir) server_.set_mount_point("/", opts_.ui_dir->string());
  }

  void engine_loop() {
    using clock = std::chrono::steady_clock;
    const auto start = clock::now();
    const double period = 1.0 / engine_.frame_rate();
    double last_persist = 0.0;
    for (long k = 0; running_; ++k) {
      std::this_thread::sleep_until(start + std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(k * period)));
      const double t = k * period;
      engine_.tick(t);
      if (opts_.data_dir && t - last_persist >= opts_.snapshot_period) {
        persist();
        last_persist = t;
      }
    }
  }

  void persist() {
    if (!opts_.data_dir) return;
    const auto session = engine_.session();
    std::filesystem::create_directories(*opts_.data_dir);
    SessionStore store(*opts_.data_dir);
    save_session(store.path_for(session.date), session);
  }

  LiveEngine& engine_;
  ServerOptions opts_;
  httplib::Server server_;
  std::thread engine_thread_;
  std::atomic<bool> running_{false};
  int bound_port_ = 0;
};

}  // namespace atrium
