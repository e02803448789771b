#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "atrium/assignment.hpp"
#include "atrium/error.hpp"
#include "atrium/geometry.hpp"
#include "atrium/kalman.hpp"

namespace atrium {

/// One blob barycentre projected to the ground plane.
struct Detection {
  double t = 0.0;
  GroundPoint pos;
  double size = 0.25;  // blob extent, m^2
};

struct TimedPoint {
  double t = 0.0;
  GroundPoint p;
};

using Trajectory = std::vector<TimedPoint>;

struct Bounds {
  double x_min = 0.0, x_max = 20.0;
  double y_min = 0.0, y_max = 20.0;

  bool contains(const GroundPoint& p) const {
    return p.x >= x_min && p.x <= x_max && p.y >= y_min && p.y <= y_max;
  }
  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
};

/// Simple polygon (implicitly closed); even-odd rule.
struct Polygon {
  std::vector<GroundPoint> vertices;

  bool contains(const GroundPoint& p) const {
    bool inside = false;
    const std::size_t n = vertices.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
      const auto& a = vertices[i];
      const auto& b = vertices[j];
      if ((a.y > p.y) != (b.y > p.y)) {
        const double x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
        if (p.x < x_cross) inside = !inside;
      }
    }
    return inside;
  }
};

struct TrackerConfig {
  int init_hits = 4;
  int max_misses = 15;
  double v_max = 5.0;
  double gate_radius = 1.5;
  double reconnect_radius = 1.0;
  double reconnect_window = 2.0;
  // An active track missed while its last point lies this close to the
  // bounds has left the scene: it terminates at once and is never
  // reconnected.
  double exit_margin = 1.0;
  std::vector<Polygon> mask;
  Bounds bounds;
  double min_size = 0.0;
  double max_size = 2.0;
  // Kalman tuning
  double process_noise = 2.0;       // (m/s^2)^2
  double measurement_noise = 0.05;  // m^2
  double initial_speed_sigma = 2.0; // m/s, before the second fix

  void validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::ConfigError, what); };
    if (init_hits < 1) fail("init_hits must be >= 1");
    if (max_misses < 1) fail("max_misses must be >= 1");
    if (!(v_max > 0) || !(gate_radius > 0) || !(reconnect_radius > 0) || !(reconnect_window > 0))
      fail("tracker radii, windows and v_max must be positive");
    if (!(exit_margin >= 0)) fail("exit_margin must be >= 0");
    if (!(bounds.x_max > bounds.x_min) || !(bounds.y_max > bounds.y_min)) fail("empty scene bounds");
    if (min_size < 0 || max_size < min_size) fail("size bounds must satisfy 0 <= min_size <= max_size");
    if (!(process_noise > 0) || !(measurement_noise > 0) || !(initial_speed_sigma > 0))
      fail("Kalman noise parameters must be positive");
  }
};

enum class TrackStatus { Tentative, Active, Terminated };

inline const char* to_string(TrackStatus s) {
  switch (s) {
    case TrackStatus::Tentative: return "tentative";
    case TrackStatus::Active: return "active";
    case TrackStatus::Terminated: return "terminated";
  }
  return "?";
}

struct Track {
  int id = 0;
  Trajectory points;  // filtered positions, strictly increasing t
  KalmanState kalman;
  TrackStatus status = TrackStatus::Tentative;
  int hits = 0;    // consecutive matched frames
  int misses = 0;  // consecutive unmatched frames
  double terminated_at = 0.0;
  // Last two raw detections feeding the kinematic predictor.
  std::vector<TimedPoint> raw_tail;

  double last_t() const { return points.back().t; }
  const GroundPoint& last_position() const { return points.back().p; }
};

/// True when a detection survives the mask, bounds and blob-size filters.
inline bool passes_filter(const Detection& d, const TrackerConfig& cfg) {
  if (!std::isfinite(d.pos.x) || !std::isfinite(d.pos.y)) return false;
  if (!cfg.bounds.contains(d.pos)) return false;
  if (d.size < cfg.min_size || d.size > cfg.max_size) return false;
  return std::none_of(cfg.mask.begin(), cfg.mask.end(), [&](const Polygon& poly) { return poly.contains(d.pos); });
}

inline std::vector<Detection> filter_detections(std::span<const Detection> dets, const TrackerConfig& cfg) {
  std::vector<Detection> out;
  std::copy_if(dets.begin(), dets.end(), std::back_inserter(out),
               [&](const Detection& d) { return passes_filter(d, cfg); });
  return out;
}

struct Predictions {
  GroundPoint kalman;
  GroundPoint kinematic;
};

/// Kalman and two-point kinematic extrapolation `dt` seconds past the
/// track's last fix.
inline Predictions predict(const Track& track, double dt) {
  if (!(dt > 0.0)) throw Error(ErrorCode::InvalidArgument, "predict needs dt > 0");
  Predictions out;
  out.kalman = track.kalman.predicted_position(dt);
  out.kinematic = track.last_position();
  if (track.raw_tail.size() < 2) return out;
  const auto& a = track.raw_tail[track.raw_tail.size() - 2];
  const auto& b = track.raw_tail.back();
  const double span = b.t - a.t;
  out.kinematic.x += dt * (b.p.x - a.p.x) / span;
  out.kinematic.y += dt * (b.p.y - a.p.y) / span;
  return out;
}

/// Assignment cost: distance to the nearer of the two predictions.
inline double association_cost(const Track& track, const Detection& det) {
  const auto pred = predict(track, det.t - track.last_t());
  return std::min(distance(det.pos, pred.kalman), distance(det.pos, pred.kinematic));
}

struct TrackAssociation {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (track index, detection index)
  std::vector<std::size_t> unmatched_tracks;
  std::vector<std::size_t> unmatched_dets;
  double total_cost = 0.0;
};

/// Globally optimal gated matching of tracks to detections.
inline TrackAssociation associate(std::span<const Track> tracks, std::span<const Detection> dets,
                                  const TrackerConfig& cfg) {
  CostMatrix<double> costs(tracks.size(), dets.size());
  for (std::size_t i = 0; i < tracks.size(); ++i)
    for (std::size_t j = 0; j < dets.size(); ++j) {
      if (!(dets[j].t > tracks[i].last_t())) continue;
      const double c = association_cost(tracks[i], dets[j]);
      if (c <= cfg.gate_radius) costs.at(i, j) = c;
    }
  auto solved = solve_assignment(costs);
  return {std::move(solved.pairs), std::move(solved.unmatched_rows), std::move(solved.unmatched_cols), solved.total};
}

enum class TrackEventKind { Created, Updated, Confirmed, Reconnected, Terminated, Dropped, Retired };

inline const char* to_string(TrackEventKind k) {
  switch (k) {
    case TrackEventKind::Created: return "created";
    case TrackEventKind::Updated: return "updated";
    case TrackEventKind::Confirmed: return "confirmed";
    case TrackEventKind::Reconnected: return "reconnected";
    case TrackEventKind::Terminated: return "terminated";
    case TrackEventKind::Dropped: return "dropped";
    case TrackEventKind::Retired: return "retired";
  }
  return "?";
}

struct TrackEvent {
  TrackEventKind kind;
  int track_id;
  double t;
  std::optional<std::size_t> detection;  // index into the frame's input detections
};

/// Frame-by-frame multi-target tracker.
///
/// Lifecycle: an unmatched detection seeds a Tentative track, which becomes
/// Active after `init_hits` consecutive matches and is dropped on its first
/// miss. Active tracks terminate after `max_misses` consecutive misses and
/// stay reconnectable for `reconnect_window` seconds; after that they are
/// retired and can be collected with take_retired(). A track missed within
/// `exit_margin` of the bounds is terminated and retired in the same frame.
class Tracker {
 public:
  explicit Tracker(TrackerConfig cfg = {}) : cfg_(std::move(cfg)) { cfg_.validate(); }

  const TrackerConfig& config() const { return cfg_; }
  const std::vector<Track>& live() const { return live_; }
  const std::deque<Track>& terminated() const { return terminated_; }
  std::optional<double> last_time() const { return last_t_; }

  std::vector<Track> take_retired() { return std::exchange(retired_, {}); }

  std::vector<TrackEvent> step(std::span<const Detection> input, double t) {
    if (!std::isfinite(t)) throw Error(ErrorCode::NonMonotonicTime, "frame time is not finite");
    if (last_t_ && !(t > *last_t_)) {
      throw Error(ErrorCode::NonMonotonicTime,
                  "frame time " + std::to_string(t) + " does not follow " + std::to_string(*last_t_));
    }
    last_t_ = t;
    std::vector<TrackEvent> events;

    std::vector<Detection> dets;
    std::vector<std::size_t> origin;
    for (std::size_t i = 0; i < input.size(); ++i) {
      if (!passes_filter(input[i], cfg_)) continue;
      dets.push_back(input[i]);
      dets.back().t = t;
      origin.push_back(i);
    }

    retire_expired(t, events);

    const auto assoc = associate(live_, dets, cfg_);
    std::vector<char> track_matched(live_.size(), 0);
    std::vector<char> det_used(dets.size(), 0);
    for (const auto& [ti, di] : assoc.pairs) {
      Track& track = live_[ti];
      if (!try_extend(track, dets[di])) continue;
      track_matched[ti] = 1;
      det_used[di] = 1;
      track.misses = 0;
      ++track.hits;
      events.push_back({TrackEventKind::Updated, track.id, t, origin[di]});
      if (track.status == TrackStatus::Tentative && track.hits >= cfg_.init_hits) {
        track.status = TrackStatus::Active;
        events.push_back({TrackEventKind::Confirmed, track.id, t, origin[di]});
      }
    }

    std::vector<Track> still_live;
    for (std::size_t i = 0; i < live_.size(); ++i) {
      Track& track = live_[i];
      if (track_matched[i]) {
        still_live.push_back(std::move(track));
        continue;
      }
      ++track.misses;
      track.hits = 0;
      if (track.status == TrackStatus::Tentative) {
        events.push_back({TrackEventKind::Dropped, track.id, t, std::nullopt});
      } else if (near_edge(track.last_position())) {
        // Missed at the border: the object left the scene.
        track.status = TrackStatus::Terminated;
        track.terminated_at = t;
        events.push_back({TrackEventKind::Terminated, track.id, t, std::nullopt});
        events.push_back({TrackEventKind::Retired, track.id, t, std::nullopt});
        retired_.push_back(std::move(track));
      } else if (track.misses >= cfg_.max_misses) {
        track.status = TrackStatus::Terminated;
        track.terminated_at = t;
        events.push_back({TrackEventKind::Terminated, track.id, t, std::nullopt});
        terminated_.push_front(std::move(track));
      } else {
        still_live.push_back(std::move(track));
      }
    }
    live_ = std::move(still_live);

    for (std::size_t di = 0; di < dets.size(); ++di) {
      if (det_used[di]) continue;
      if (auto id = try_reconnect(dets[di])) {
        events.push_back({TrackEventKind::Reconnected, *id, t, origin[di]});
        continue;
      }
      Track track;
      track.id = next_id_++;
      track.points.push_back({t, dets[di].pos});
      track.raw_tail.push_back({t, dets[di].pos});
      track.kalman = KalmanState(dets[di].pos, cfg_.process_noise, cfg_.measurement_noise, cfg_.initial_speed_sigma);
      track.hits = 1;
      track.status = cfg_.init_hits <= 1 ? TrackStatus::Active : TrackStatus::Tentative;
      events.push_back({TrackEventKind::Created, track.id, t, origin[di]});
      if (track.status == TrackStatus::Active) events.push_back({TrackEventKind::Confirmed, track.id, t, origin[di]});
      live_.push_back(std::move(track));
    }
    std::sort(live_.begin(), live_.end(), [](const Track& a, const Track& b) { return a.id < b.id; });
    return events;
  }

  /// End of stream: terminates every live track and retires everything.
  std::vector<TrackEvent> flush() {
    std::vector<TrackEvent> events;
    const double t = last_t_.value_or(0.0);
    for (auto& track : live_) {
      if (track.status == TrackStatus::Tentative) {
        events.push_back({TrackEventKind::Dropped, track.id, t, std::nullopt});
        continue;
      }
      track.status = TrackStatus::Terminated;
      track.terminated_at = t;
      events.push_back({TrackEventKind::Terminated, track.id, t, std::nullopt});
      terminated_.push_front(std::move(track));
    }
    live_.clear();
    // Oldest first so retirement order matches termination order.
    while (!terminated_.empty()) {
      events.push_back({TrackEventKind::Retired, terminated_.back().id, t, std::nullopt});
      retired_.push_back(std::move(terminated_.back()));
      terminated_.pop_back();
    }
    return events;
  }

 private:
  // Applies the Kalman update unless the resulting point would imply a
  // speed above v_max relative to the previous point.
  bool try_extend(Track& track, const Detection& det) {
    const double dt = det.t - track.last_t();
    KalmanState next = track.kalman;
    next.update(det.pos, dt);
    const GroundPoint p = next.position();
    if (distance(p, track.last_position()) > cfg_.v_max * dt) return false;
    track.kalman = next;
    track.points.push_back({det.t, p});
    track.raw_tail.push_back({det.t, det.pos});
    if (track.raw_tail.size() > 2) track.raw_tail.erase(track.raw_tail.begin());
    return true;
  }

  std::optional<int> try_reconnect(const Detection& det) {
    // Newest termination first; first acceptable track wins.
    for (auto it = terminated_.begin(); it != terminated_.end(); ++it) {
      Track& track = *it;
      if (det.t - track.terminated_at > cfg_.reconnect_window) continue;
      if (near_edge(track.last_position())) continue;
      const double dt = det.t - track.last_t();
      const double d = std::min(distance(det.pos, track.last_position()),
                                distance(det.pos, track.kalman.predicted_position(dt)));
      if (d > cfg_.reconnect_radius) continue;
      if (!try_extend(track, det)) continue;
      track.status = TrackStatus::Active;
      track.misses = 0;
      track.hits = 1;
      const int id = track.id;
      live_.push_back(std::move(track));
      terminated_.erase(it);
      return id;
    }
    return std::nullopt;
  }

  bool near_edge(const GroundPoint& p) const {
    const Bounds& b = cfg_.bounds;
    return p.x - b.x_min < cfg_.exit_margin || b.x_max - p.x < cfg_.exit_margin || p.y - b.y_min < cfg_.exit_margin ||
           b.y_max - p.y < cfg_.exit_margin;
  }

  void retire_expired(double t, std::vector<TrackEvent>& events) {
    while (!terminated_.empty() && t - terminated_.back().terminated_at > cfg_.reconnect_window) {
      events.push_back({TrackEventKind::Retired, terminated_.back().id, t, std::nullopt});
      retired_.push_back(std::move(terminated_.back()));
      terminated_.pop_back();
    }
  }

  TrackerConfig cfg_;
  std::vector<Track> live_;
  std::deque<Track> terminated_;  // newest first
  std::vector<Track> retired_;
  std::optional<double> last_t_;
  int next_id_ = 1;
};

}  // namespace atrium
