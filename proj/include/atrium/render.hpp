#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "atrium/error.hpp"
#include "atrium/png.hpp"
#include "atrium/storage.hpp"
#include "atrium/tracking.hpp"

namespace atrium {

inline constexpr double kFadeTau = 1800.0;  // s
inline constexpr double kReferenceRows = 1080.0;

struct RenderOptions {
  Bounds bounds;  // ground area mapped onto the full canvas, y up
  double fade_tau = kFadeTau;
  /// Anomaly overlay: tracks listed as true are drawn in `alert_color`.
  std::map<int, bool> atypical;
  Rgb alert_color{220, 30, 30};
};

/// Track opacity after `age` seconds.
inline double fade_alpha(double age, double tau = kFadeTau) { return std::exp(-std::max(age, 0.0) / tau); }

/// Canvas pixel coordinates (pixel centers at integer + 0.5) of a ground point.
inline std::array<double, 2> ground_to_canvas(const GroundPoint& p, const Bounds& b, int width, int height) {
  return {(p.x - b.x_min) / b.width() * width, (b.y_max - p.y) / b.height() * height};
}

namespace detail {

inline double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(px - (ax + t * dx), py - (ay + t * dy));
}

// Marks pixels whose center lies within `radius` of the polyline: a union of
// capsules, which rounds every joint and end.
inline void stamp_polyline(std::vector<std::uint8_t>& mask, int w, int h, std::span<const std::array<double, 2>> pts,
                           double radius) {
  auto stamp_segment = [&](const std::array<double, 2>& a, const std::array<double, 2>& b) {
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a[0], b[0]) - radius)));
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(std::max(a[0], b[0]) + radius)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a[1], b[1]) - radius)));
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(std::max(a[1], b[1]) + radius)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x)
        if (segment_distance(x + 0.5, y + 0.5, a[0], a[1], b[0], b[1]) <= radius) mask[static_cast<std::size_t>(y) * w + x] = 1;
  };
  if (pts.size() == 1) stamp_segment(pts[0], pts[0]);
  for (std::size_t i = 1; i < pts.size(); ++i) stamp_segment(pts[i - 1], pts[i]);
}

}  // namespace detail

/// Draws the day's finished tracks plus the live ones over the session
/// background. Each track is one coverage stamp blended with
/// alpha = exp(-age / tau), age measured from its last point; tracks are
/// composited in order of their first timestamp. Line width scales with
/// canvas height relative to 1080 rows.
inline Image render_frame(const DaySession& session, std::span<const SessionTrack> live_tracks, double now, int width,
                          int height, const RenderOptions& opts = {}) {
  if (width <= 0 || height <= 0) throw Error(ErrorCode::InvalidArgument, "canvas size must be positive");
  if (!(opts.bounds.x_max > opts.bounds.x_min) || !(opts.bounds.y_max > opts.bounds.y_min))
    throw Error(ErrorCode::InvalidArgument, "render bounds are empty");
  if (!(opts.fade_tau > 0.0)) throw Error(ErrorCode::InvalidArgument, "fade tau must be positive");

  std::vector<const SessionTrack*> order;
  for (const auto& t : session.tracks)
    if (!t.points.empty()) order.push_back(&t);
  for (const auto& t : live_tracks)
    if (!t.points.empty()) order.push_back(&t);
  std::stable_sort(order.begin(), order.end(), [](const SessionTrack* a, const SessionTrack* b) {
    if (a->points.front().t != b->points.front().t) return a->points.front().t < b->points.front().t;
    return a->id < b->id;
  });

  const std::size_t n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  std::vector<double> acc(n * 3);
  for (std::size_t i = 0; i < n; ++i) {
    acc[i * 3] = session.background.r;
    acc[i * 3 + 1] = session.background.g;
    acc[i * 3 + 2] = session.background.b;
  }

  const double radius = 0.5 * session.line_width * height / kReferenceRows;
  std::vector<std::uint8_t> mask(n);
  std::vector<std::array<double, 2>> pts;
  for (const SessionTrack* tr : order) {
    const double alpha = fade_alpha(now - tr->points.back().t, opts.fade_tau);
    const auto flag = opts.atypical.find(tr->id);
    const Rgb color = flag != opts.atypical.end() && flag->second ? opts.alert_color : session.foreground;
    pts.clear();
    for (const auto& p : tr->points) pts.push_back(ground_to_canvas(p.p, opts.bounds, width, height));
    double lo_x = pts[0][0], hi_x = lo_x, lo_y = pts[0][1], hi_y = lo_y;
    for (const auto& q : pts) {
      lo_x = std::min(lo_x, q[0]);
      hi_x = std::max(hi_x, q[0]);
      lo_y = std::min(lo_y, q[1]);
      hi_y = std::max(hi_y, q[1]);
    }
    const int x0 = std::max(0, static_cast<int>(std::floor(lo_x - radius)));
    const int x1 = std::min(width - 1, static_cast<int>(std::ceil(hi_x + radius)));
    const int y0 = std::max(0, static_cast<int>(std::floor(lo_y - radius)));
    const int y1 = std::min(height - 1, static_cast<int>(std::ceil(hi_y + radius)));
    if (x0 > x1 || y0 > y1) continue;
    for (int y = y0; y <= y1; ++y)
      std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(y) * width + x0, x1 - x0 + 1, std::uint8_t{0});
    detail::stamp_polyline(mask, width, height, pts, radius);
    const double c[3] = {static_cast<double>(color.r), static_cast<double>(color.g), static_cast<double>(color.b)};
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * width + x;
        if (!mask[i]) continue;
        for (int k = 0; k < 3; ++k) acc[i * 3 + k] = (1.0 - alpha) * acc[i * 3 + k] + alpha * c[k];
      }
  }

  Image img(width, height);
  for (std::size_t i = 0; i < n * 3; ++i)
    img.rgb[i] = static_cast<std::uint8_t>(std::lround(std::clamp(acc[i], 0.0, 255.0)));
  return img;
}

}  // namespace atrium
