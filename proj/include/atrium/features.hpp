#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "atrium/error.hpp"
#include "atrium/tracking.hpp"

namespace atrium {

/// Shape descriptors of one trajectory, in meters.
///
/// cRect and cMain are interpretations: cRect is the perimeter of the
/// axis-aligned bounding box, cMain the extent of the trajectory across its
/// principal axis (the width of the oriented bounding box).
struct FeatureVector {
  std::size_t n_points = 0;
  double d_fit = 0.0;   // RMS residual of the line (or polynomial) fit
  double dist = 0.0;    // path length
  double c_rect = 0.0;  // axis-aligned bounding box perimeter
  double c_main = 0.0;  // oriented bounding box width
  double chord = 0.0;   // straight-line distance between the end points
};

struct FeatureOptions {
  /// 1 = orthogonal line fit; k > 1 fits a degree-k polynomial in the
  /// principal-axis frame and reports its RMS residual as d_fit.
  int fit_degree = 1;
};

namespace detail {

struct PrincipalFrame {
  Eigen::Vector2d centroid;
  Eigen::Vector2d major;
  Eigen::Vector2d minor;
};

inline PrincipalFrame principal_frame(std::span<const TimedPoint> pts) {
  Eigen::Vector2d c = Eigen::Vector2d::Zero();
  for (const auto& p : pts) c += Eigen::Vector2d(p.p.x, p.p.y);
  c /= static_cast<double>(pts.size());
  double sxx = 0, syy = 0, sxy = 0;
  for (const auto& p : pts) {
    const double dx = p.p.x - c.x(), dy = p.p.y - c.y();
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  // Major-axis angle of the 2x2 scatter matrix.
  const double theta = 0.5 * std::atan2(2.0 * sxy, sxx - syy);
  PrincipalFrame f;
  f.centroid = c;
  f.major = Eigen::Vector2d(std::cos(theta), std::sin(theta));
  f.minor = Eigen::Vector2d(-std::sin(theta), std::cos(theta));
  return f;
}

// Exact test: every point lies on the line through the first point and the
// point farthest from it.
inline bool exactly_collinear(std::span<const TimedPoint> pts) {
  const auto& a = pts.front().p;
  std::size_t far = 0;
  double best = -1.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double d = distance(a, pts[i].p);
    if (d > best) {
      best = d;
      far = i;
    }
  }
  const auto& b = pts[far].p;
  for (const auto& p : pts) {
    if ((b.x - a.x) * (p.p.y - a.y) - (b.y - a.y) * (p.p.x - a.x) != 0.0) return false;
  }
  return true;
}

inline double polynomial_residual_rms(std::span<const TimedPoint> pts, const PrincipalFrame& f, int degree) {
  const auto n = static_cast<Eigen::Index>(pts.size());
  Eigen::VectorXd s(n), w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector2d d = Eigen::Vector2d(pts[i].p.x, pts[i].p.y) - f.centroid;
    s(i) = d.dot(f.major);
    w(i) = d.dot(f.minor);
  }
  const double scale = std::max(s.cwiseAbs().maxCoeff(), 1e-12);
  const int cols = std::min<int>(degree + 1, static_cast<int>(n));
  Eigen::MatrixXd v(n, cols);
  for (Eigen::Index i = 0; i < n; ++i) {
    double term = 1.0;
    for (int k = 0; k < cols; ++k) {
      v(i, k) = term;
      term *= s(i) / scale;
    }
  }
  const Eigen::VectorXd coef = v.colPivHouseholderQr().solve(w);
  const Eigen::VectorXd r = w - v * coef;
  return std::sqrt(r.squaredNorm() / static_cast<double>(n));
}

}  // namespace detail

inline FeatureVector compute_features(std::span<const TimedPoint> traj, const FeatureOptions& opts = {}) {
  if (traj.size() < 2) throw Error(ErrorCode::TooFewPoints, "features need at least 2 points");
  if (opts.fit_degree < 1) throw Error(ErrorCode::InvalidArgument, "fit degree must be >= 1");

  FeatureVector f;
  f.n_points = traj.size();
  double x_min = traj[0].p.x, x_max = x_min, y_min = traj[0].p.y, y_max = y_min;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const auto& p = traj[i].p;
    if (i > 0) f.dist += distance(traj[i - 1].p, p);
    x_min = std::min(x_min, p.x);
    x_max = std::max(x_max, p.x);
    y_min = std::min(y_min, p.y);
    y_max = std::max(y_max, p.y);
  }
  f.c_rect = 2.0 * ((x_max - x_min) + (y_max - y_min));
  f.chord = distance(traj.front().p, traj.back().p);

  if (detail::exactly_collinear(traj)) return f;  // d_fit = c_main = 0

  const auto frame = detail::principal_frame(traj);
  double w_min = std::numeric_limits<double>::infinity();
  double w_max = -w_min;
  double sse = 0.0;
  for (const auto& p : traj) {
    const double w = (Eigen::Vector2d(p.p.x, p.p.y) - frame.centroid).dot(frame.minor);
    w_min = std::min(w_min, w);
    w_max = std::max(w_max, w);
    sse += w * w;
  }
  f.c_main = w_max - w_min;
  f.d_fit = opts.fit_degree == 1 ? std::sqrt(sse / static_cast<double>(traj.size()))
                                 : detail::polynomial_residual_rms(traj, frame, opts.fit_degree);
  return f;
}

enum class Label { Normal, Atypical };

inline const char* to_string(Label l) { return l == Label::Normal ? "normal" : "atypical"; }

struct RuleThresholds {
  double d_fit = 0.5;       // m
  double tortuosity = 3.0;  // path length / chord
  double c_main = 2.0;      // m
};

inline double tortuosity(const FeatureVector& f) {
  if (f.chord > 0.0) return f.dist / f.chord;
  return f.dist > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
}

inline Label classify_rules(const FeatureVector& f, const RuleThresholds& th = {}) {
  const bool atypical = f.d_fit > th.d_fit || tortuosity(f) > th.tortuosity || f.c_main > th.c_main;
  return atypical ? Label::Atypical : Label::Normal;
}

}  // namespace atrium
