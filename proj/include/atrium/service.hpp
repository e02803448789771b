#pragma once

#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "atrium/error.hpp"
#include "atrium/pipeline.hpp"
#include "atrium/storage.hpp"

namespace atrium {

inline constexpr int kWireSchemaVersion = 1;

/// Fixed affine fit of a canvas rectangle (pixels, y down) onto the scene
/// bounds (meters, y up).
struct CanvasMapping {
  double canvas_width = 1.0;
  double canvas_height = 1.0;
  Bounds bounds;

  GroundPoint to_ground(double xc, double yc) const {
    return {bounds.x_min + xc / canvas_width * bounds.width(), bounds.y_max - yc / canvas_height * bounds.height()};
  }
  std::array<double, 2> to_canvas(const GroundPoint& p) const {
    return {(p.x - bounds.x_min) / bounds.width() * canvas_width, (bounds.y_max - p.y) / bounds.height() * canvas_height};
  }

  nlohmann::json to_json() const {
    // ground = [ax, 0, bx; 0, ay, by] * [xc, yc, 1]
    return {{"canvas_width", canvas_width},
            {"canvas_height", canvas_height},
            {"bounds", {bounds.x_min, bounds.y_min, bounds.x_max, bounds.y_max}},
            {"affine",
             {{bounds.width() / canvas_width, 0.0, bounds.x_min},
              {0.0, -bounds.height() / canvas_height, bounds.y_max}}}};
  }
};

struct PointerSample {
  double t = 0.0;  // client clock, informational only
  double x_canvas = 0.0;
  double y_canvas = 0.0;
};

struct LiveConfig {
  PipelineConfig pipeline;
  double frame_rate = 15.0;
  /// Fixed classification threshold; without it the threshold is detected
  /// from the trajectories finished so far (once there are ten).
  std::optional<double> threshold;
  std::size_t max_day_tracks = 500;  // finished tracks kept for /state
  /// Seconds since local midnight at engine time 0; finished tracks are
  /// appended to the day session on that clock.
  double day_offset = 0.0;
};

/// Live engine behind the HTTP service.
///
/// Clients push pointer samples at any rate; every tick turns the latest
/// pending sample of each open client into one detection, steps the
/// pipeline and fans the resulting events out to per-client queues. All
/// public members are thread-safe; tick() is the single mutator of the
/// pipeline, and readers only ever see a fully published snapshot.
class LiveEngine {
 public:
  using Json = nlohmann::json;

  LiveEngine(LiveConfig cfg, NormalityModel model, DaySession session)
      : cfg_(std::move(cfg)), pipeline_(cfg_.pipeline, std::move(model)), session_(std::move(session)) {
    if (!(cfg_.frame_rate > 0.0)) throw Error(ErrorCode::ConfigError, "frame_rate must be positive");
  }

  struct Opened {
    std::string id;
    CanvasMapping mapping;
  };

  Opened open(double canvas_width, double canvas_height) {
    if (!(canvas_width > 0.0) || !(canvas_height > 0.0) || !std::isfinite(canvas_width) || !std::isfinite(canvas_height))
      throw Error(ErrorCode::InvalidArgument, "canvas size must be positive");
    std::lock_guard lock(mu_);
    const std::string id = "c" + std::to_string(next_client_++);
    auto client = std::make_shared<Client>();
    client->mapping = {canvas_width, canvas_height, cfg_.pipeline.tracker.bounds};
    clients_[id] = client;
    return {id, client->mapping};
  }

  /// Queues samples; throws InvalidArgument on a protocol violation, after
  /// closing the session with a diagnostic event.
  std::size_t submit(const std::string& id, const std::vector<PointerSample>& samples) {
    std::lock_guard lock(mu_);
    auto client = find_locked(id);
    for (const auto& s : samples) {
      if (!std::isfinite(s.x_canvas) || !std::isfinite(s.y_canvas) || !std::isfinite(s.t)) {
        push_locked(*client, {{"type", "error"}, {"message", "sample coordinates must be finite numbers"}});
        close_locked(*client);
        throw Error(ErrorCode::InvalidArgument, "protocol violation: non-finite sample");
      }
    }
    if (!samples.empty()) client->pending = samples.back();
    return samples.size();
  }

  void close(const std::string& id) {
    std::lock_guard lock(mu_);
    close_locked(*find_locked(id));
  }

  bool is_open(const std::string& id) const {
    std::lock_guard lock(mu_);
    const auto it = clients_.find(id);
    return it != clients_.end() && !it->second->closed;
  }

  /// Waits up to `timeout` for events; returns them as serialized JSON.
  /// `closed` reports that the session ended and the queue is drained.
  std::vector<std::string> poll(const std::string& id, std::chrono::milliseconds timeout, bool& closed) {
    std::unique_lock lock(mu_);
    auto client = find_locked(id);
    cv_.wait_for(lock, timeout, [&] { return !client->queue.empty() || client->closed; });
    std::vector<std::string> out(client->queue.begin(), client->queue.end());
    client->queue.clear();
    closed = client->closed;
    return out;
  }

  /// One engine frame at engine time t (seconds, strictly increasing).
  void tick(double t) {
    std::lock_guard lock(mu_);
    std::vector<Detection> dets;
    std::vector<std::shared_ptr<Client>> source;
    for (auto& [id, c] : clients_) {
      if (c->closed || !c->pending) continue;
      Detection d;
      d.t = t;
      d.pos = c->mapping.to_ground(c->pending->x_canvas, c->pending->y_canvas);
      dets.push_back(d);
      source.push_back(c);
      c->pending.reset();
    }
    const FrameResult result = pipeline_.process_frame(t, dets);
    now_ = t;
    dispatch_locked(result, source);
    publish_locked();
  }

  /// Ends every track (engine shutdown) and publishes the final state.
  void finish() {
    std::lock_guard lock(mu_);
    dispatch_locked(pipeline_.finish(), {});
    publish_locked();
  }

  /// Last published /state document, or null before the first tick.
  std::shared_ptr<const std::string> snapshot() const {
    std::lock_guard lock(mu_);
    return snapshot_;
  }

  std::optional<double> threshold() const {
    std::lock_guard lock(mu_);
    return threshold_locked();
  }

  /// Copy of the model (for cross-checks and persistence).
  NormalityModel model() const {
    std::lock_guard lock(mu_);
    return pipeline_.model();
  }

  DaySession session() const {
    std::lock_guard lock(mu_);
    return session_;
  }

  std::vector<TrajectoryRecord> records() const {
    std::lock_guard lock(mu_);
    return pipeline_.records();
  }

  /// Live tracks on the day-session clock, for rendering.
  std::vector<SessionTrack> live_session_tracks() const {
    std::lock_guard lock(mu_);
    std::vector<SessionTrack> out;
    for (const auto& t : pipeline_.tracker().live()) {
      SessionTrack st{t.id, {}};
      for (const auto& p : t.points) st.points.push_back({p.t + cfg_.day_offset, p.p});
      out.push_back(std::move(st));
    }
    return out;
  }

  /// Atypical flags of the finished tracks, for the render overlay.
  std::map<int, bool> atypical_flags() const {
    std::lock_guard lock(mu_);
    std::map<int, bool> out;
    const auto theta = threshold_locked();
    if (!theta) return out;
    for (const auto& r : pipeline_.records())
      if (r.normality) out[r.track_id] = is_atypical(*r.normality, *theta);
    return out;
  }

  double now() const {
    std::lock_guard lock(mu_);
    return now_;
  }

  double frame_rate() const { return cfg_.frame_rate; }
  const LiveConfig& config() const { return cfg_; }

 private:
  struct Client {
    CanvasMapping mapping;
    std::optional<PointerSample> pending;
    std::deque<std::string> queue;
    bool closed = false;
  };

  std::shared_ptr<Client> find_locked(const std::string& id) const {
    const auto it = clients_.find(id);
    if (it == clients_.end()) throw Error(ErrorCode::InvalidArgument, "unknown live session '" + id + "'");
    return it->second;
  }

  void push_locked(Client& c, Json event) {
    event["schema_version"] = kWireSchemaVersion;
    c.queue.push_back(event.dump());
    cv_.notify_all();
  }

  void close_locked(Client& c) {
    if (c.closed) return;
    push_locked(c, {{"type", "closed"}});
    c.closed = true;
    c.pending.reset();
    cv_.notify_all();
  }

  std::optional<double> threshold_locked() const {
    if (cfg_.threshold) return cfg_.threshold;
    const auto values = pipeline_.scored_values();
    if (values.size() < 10) return std::nullopt;
    return detect_threshold(values, cfg_.pipeline.target_fraction);
  }

  static Json nullable(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

  void dispatch_locked(const FrameResult& result, const std::vector<std::shared_ptr<Client>>& source) {
    for (const auto& ev : result.events) {
      if (ev.detection && *ev.detection < source.size()) owner_[ev.track_id] = source[*ev.detection];
      const auto it = owner_.find(ev.track_id);
      if (it == owner_.end()) continue;
      auto client = it->second.lock();
      if (!client || client->closed) continue;
      switch (ev.kind) {
        case TrackEventKind::Created:
        case TrackEventKind::Updated:
        case TrackEventKind::Reconnected: {
          const Track* track = find_live(ev.track_id);
          if (!track) break;
          const auto& p = track->points.back();
          const auto c = client->mapping.to_canvas(p.p);
          push_locked(*client, {{"type", "point"},
                                {"track_id", ev.track_id},
                                {"t", p.t},
                                {"x", p.p.x},
                                {"y", p.p.y},
                                {"x_canvas", c[0]},
                                {"y_canvas", c[1]},
                                {"status", to_string(track->status)}});
          break;
        }
        case TrackEventKind::Terminated:
          push_locked(*client, {{"type", "terminated"}, {"track_id", ev.track_id}, {"t", ev.t}});
          break;
        case TrackEventKind::Dropped:  // never confirmed, no final event follows
          owner_.erase(it);
          break;
        default:
          break;
      }
    }
    const auto theta = threshold_locked();
    for (const auto& ps : result.provisional) {
      provisional_[ps.track_id] = ps.normality;
      const auto it = owner_.find(ps.track_id);
      if (it == owner_.end()) continue;
      auto client = it->second.lock();
      if (!client || client->closed) continue;
      Json ev{{"type", "provisional"}, {"track_id", ps.track_id}, {"t", ps.t}, {"normality", ps.normality},
              {"steps", ps.steps}, {"provisional", true}, {"threshold", nullable(theta)}};
      ev["atypical"] = theta ? Json(is_atypical(ps.normality, *theta)) : Json(nullptr);
      push_locked(*client, std::move(ev));
    }
    for (std::size_t idx : result.finished) {
      const auto& rec = pipeline_.records()[idx];
      provisional_.erase(rec.track_id);
      day_tracks_.push_back(idx);
      if (day_tracks_.size() > cfg_.max_day_tracks) day_tracks_.pop_front();
      append_to_session_locked(rec);
      const auto it = owner_.find(rec.track_id);
      if (it == owner_.end()) continue;
      auto client = it->second.lock();
      owner_.erase(it);
      if (!client || client->closed) continue;
      Json pts = Json::array();
      for (const auto& p : rec.points) pts.push_back({p.t, p.p.x, p.p.y});
      Json ev{{"type", "final"}, {"track_id", rec.track_id}, {"normality", nullable(rec.normality)},
              {"steps", rec.steps}, {"threshold", nullable(theta)}, {"points", std::move(pts)}};
      ev["atypical"] = theta && rec.normality ? Json(is_atypical(*rec.normality, *theta)) : Json(nullptr);
      push_locked(*client, std::move(ev));
    }
  }

  void append_to_session_locked(const TrajectoryRecord& rec) {
    SessionTrack st;
    st.id = rec.track_id;
    for (const auto& p : rec.points) {
      const double tod = p.t + cfg_.day_offset;
      if (tod >= 0.0 && tod < kSecondsPerDay) st.points.push_back({tod, p.p});
    }
    if (!st.points.empty()) session_.tracks.push_back(std::move(st));
  }

  const Track* find_live(int id) const {
    for (const auto& t : pipeline_.tracker().live())
      if (t.id == id) return &t;
    return nullptr;
  }

  void publish_locked() {
    const auto theta = threshold_locked();
    Json tracks = Json::array();
    for (const auto& t : pipeline_.tracker().live()) {
      Json pts = Json::array();
      for (const auto& p : t.points) pts.push_back({p.t, p.p.x, p.p.y});
      const auto prov = provisional_.find(t.id);
      tracks.push_back({{"id", t.id},
                        {"status", to_string(t.status)},
                        {"points", std::move(pts)},
                        {"provisional_normality",
                         prov != provisional_.end() ? Json(prov->second) : Json(nullptr)}});
    }
    Json finished = Json::array();
    for (std::size_t idx : day_tracks_) {
      const auto& rec = pipeline_.records()[idx];
      Json pts = Json::array();
      for (const auto& p : rec.points) pts.push_back({p.t, p.p.x, p.p.y});
      Json item{{"id", rec.track_id}, {"normality", nullable(rec.normality)}, {"points", std::move(pts)}};
      item["atypical"] = theta && rec.normality ? Json(is_atypical(*rec.normality, *theta)) : Json(nullptr);
      finished.push_back(std::move(item));
    }
    const auto& b = cfg_.pipeline.tracker.bounds;
    Json doc{{"schema_version", kWireSchemaVersion},
             {"t", now_},
             {"session",
              {{"date", to_string(session_.date)},
               {"foreground", to_hex(session_.foreground)},
               {"background", to_hex(session_.background)},
               {"line_width", session_.line_width}}},
             {"bounds", {b.x_min, b.y_min, b.x_max, b.y_max}},
             {"fade_tau", 1800.0},
             {"threshold", nullable(theta)},
             {"tracks", std::move(tracks)},
             {"finished", std::move(finished)}};
    snapshot_ = std::make_shared<const std::string>(doc.dump());
  }

  LiveConfig cfg_;
  Pipeline pipeline_;
  DaySession session_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::string, std::shared_ptr<Client>> clients_;
  std::map<int, std::weak_ptr<Client>> owner_;
  std::map<int, double> provisional_;
  std::deque<std::size_t> day_tracks_;
  std::shared_ptr<const std::string> snapshot_;
  double now_ = 0.0;
  std::uint64_t next_client_ = 1;
};

}  // namespace atrium
