#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "atrium/error.hpp"

namespace atrium {

/// Pixel coordinates on the sensor.
struct ImagePoint {
  double u = 0.0;
  double v = 0.0;
};

/// Position on the ground plane in meters.
struct GroundPoint {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const GroundPoint&, const GroundPoint&) = default;
};

inline double distance(const GroundPoint& a, const GroundPoint& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

/// Brown-Conrady lens model with three radial and two tangential terms.
/// Distortion coefficients act on normalized coordinates ((u - cx) / fx),
/// so a profile stays valid when the image is rescaled together with f and c.
struct BrownModel {
  double fx = 1.0, fy = 1.0;
  double cx = 0.0, cy = 0.0;
  double k1 = 0.0, k2 = 0.0, k3 = 0.0;
  double p1 = 0.0, p2 = 0.0;

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) {
      throw Error(ErrorCode::InvalidArgument, "Brown model focal lengths must be positive");
    }
    for (double c : {cx, cy, k1, k2, k3, p1, p2}) {
      if (!std::isfinite(c)) {
        throw Error(ErrorCode::InvalidArgument, "Brown model coefficients must be finite");
      }
    }
  }
};

namespace detail {

struct NormalizedDistortion {
  double u, v;
  // Jacobian d(u_d, v_d) / d(u, v)
  double duu, duv, dvu, dvv;
};

inline NormalizedDistortion distort_normalized(const BrownModel& m, double u, double v) {
  const double r2 = u * u + v * v;
  const double radial = 1.0 + r2 * (m.k1 + r2 * (m.k2 + r2 * m.k3));
  const double dradial = m.k1 + r2 * (2.0 * m.k2 + 3.0 * m.k3 * r2);  // d radial / d r2
  NormalizedDistortion d{};
  d.u = u * radial + 2.0 * m.p1 * u * v + m.p2 * (r2 + 2.0 * u * u);
  d.v = v * radial + m.p1 * (r2 + 2.0 * v * v) + 2.0 * m.p2 * u * v;
  d.duu = radial + 2.0 * u * u * dradial + 2.0 * m.p1 * v + 6.0 * m.p2 * u;
  d.duv = 2.0 * u * v * dradial + 2.0 * m.p1 * u + 2.0 * m.p2 * v;
  d.dvu = 2.0 * u * v * dradial + 2.0 * m.p1 * u + 2.0 * m.p2 * v;
  d.dvv = radial + 2.0 * v * v * dradial + 6.0 * m.p1 * v + 2.0 * m.p2 * u;
  return d;
}

}  // namespace detail

/// Forward Brown model: ideal (undistorted) pixel -> observed pixel.
inline ImagePoint distort(const BrownModel& m, const ImagePoint& ideal) {
  const double u = (ideal.u - m.cx) / m.fx;
  const double v = (ideal.v - m.cy) / m.fy;
  const auto d = detail::distort_normalized(m, u, v);
  return {d.u * m.fx + m.cx, d.v * m.fy + m.cy};
}

/// Inverts `distort` by Newton iteration starting from the observed point.
/// Throws NonConvergence when 50 iterations do not reach a 1e-10 step.
inline ImagePoint undistort(const BrownModel& m, const ImagePoint& observed) {
  constexpr int kMaxIterations = 50;
  constexpr double kStepTolerance = 1e-10;

  const double target_u = (observed.u - m.cx) / m.fx;
  const double target_v = (observed.v - m.cy) / m.fy;
  double u = target_u;
  double v = target_v;
  for (int i = 0; i < kMaxIterations; ++i) {
    const auto d = detail::distort_normalized(m, u, v);
    const double ru = d.u - target_u;
    const double rv = d.v - target_v;
    const double det = d.duu * d.dvv - d.duv * d.dvu;
    if (!std::isfinite(det) || std::abs(det) < 1e-14) break;
    const double step_u = (d.dvv * ru - d.duv * rv) / det;
    const double step_v = (-d.dvu * ru + d.duu * rv) / det;
    u -= step_u;
    v -= step_v;
    if (!std::isfinite(u) || !std::isfinite(v)) break;
    if (std::hypot(step_u, step_v) < kStepTolerance) {
      return {u * m.fx + m.cx, v * m.fy + m.cy};
    }
  }
  throw Error(ErrorCode::NonConvergence,
              "undistort did not converge for (" + std::to_string(observed.u) + ", " +
                  std::to_string(observed.v) + ")");
}

/// Planar projective map from undistorted image pixels to ground meters.
class Homography {
 public:
  Homography() : m_(Eigen::Matrix3d::Identity()) {}

  explicit Homography(const Eigen::Matrix3d& m) : m_(m) {
    if (!m_.allFinite()) {
      throw Error(ErrorCode::InvalidArgument, "homography entries must be finite");
    }
    if (std::abs(m_(2, 2)) > 1e-12) m_ /= m_(2, 2);
    if (std::abs(m_.determinant()) <= 1e-12) {
      throw Error(ErrorCode::DegenerateConfiguration, "homography is singular");
    }
  }

  const Eigen::Matrix3d& matrix() const { return m_; }
  double operator()(int r, int c) const { return m_(r, c); }

  Homography inverse() const { return Homography(m_.inverse()); }

 private:
  Eigen::Matrix3d m_;
};

inline GroundPoint project(const Homography& h, const ImagePoint& p) {
  const Eigen::Vector3d q = h.matrix() * Eigen::Vector3d(p.u, p.v, 1.0);
  if (std::abs(q.z()) <= 1e-12) {
    throw Error(ErrorCode::PointAtInfinity, "point maps to the line at infinity");
  }
  return {q.x() / q.z(), q.y() / q.z()};
}

/// Inverse of `project`: ground meters back to undistorted pixels.
inline ImagePoint back_project(const Homography& h, const GroundPoint& g) {
  const Eigen::Vector3d q = h.matrix().inverse() * Eigen::Vector3d(g.x, g.y, 1.0);
  if (std::abs(q.z()) <= 1e-12) {
    throw Error(ErrorCode::PointAtInfinity, "ground point maps to the line at infinity");
  }
  return {q.x() / q.z(), q.y() / q.z()};
}

struct Correspondence {
  ImagePoint image;
  GroundPoint ground;
};

struct HomographyFit {
  Homography h;
  double rms = 0.0;  // reprojection error on the ground plane (m)
};

namespace detail {

// Hartley conditioning: centroid to origin, mean distance sqrt(2).
inline Eigen::Matrix3d conditioning(const std::vector<Eigen::Vector2d>& pts) {
  Eigen::Vector2d c = Eigen::Vector2d::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  double mean = 0.0;
  for (const auto& p : pts) mean += (p - c).norm();
  mean /= static_cast<double>(pts.size());
  if (mean <= 0.0) {
    throw Error(ErrorCode::DegenerateConfiguration, "all correspondence points coincide");
  }
  const double s = std::sqrt(2.0) / mean;
  Eigen::Matrix3d t;
  t << s, 0, -s * c.x(), 0, s, -s * c.y(), 0, 0, 1;
  return t;
}

inline bool has_collinear_triple(const std::vector<Eigen::Vector2d>& pts) {
  double scale = 0.0;
  for (const auto& p : pts) scale = std::max(scale, p.cwiseAbs().maxCoeff());
  scale = std::max(scale, 1.0);
  const std::size_t n = pts.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      for (std::size_t k = j + 1; k < n; ++k) {
        const Eigen::Vector2d a = pts[j] - pts[i];
        const Eigen::Vector2d b = pts[k] - pts[i];
        if (std::abs(a.x() * b.y() - a.y() * b.x()) <= 1e-9 * scale * scale) return true;
      }
  return false;
}

}  // namespace detail

/// Direct linear transform over >= 4 correspondences with Hartley
/// normalization; least squares when more than four are given.
inline HomographyFit estimate_homography(std::span<const Correspondence> pairs) {
  if (pairs.size() < 4) {
    throw Error(ErrorCode::DegenerateConfiguration, "homography needs at least 4 correspondences");
  }
  std::vector<Eigen::Vector2d> src, dst;
  for (const auto& c : pairs) {
    src.emplace_back(c.image.u, c.image.v);
    dst.emplace_back(c.ground.x, c.ground.y);
  }
  // With exactly four pairs any collinear triple leaves the system rank deficient.
  if (pairs.size() == 4 && (detail::has_collinear_triple(src) || detail::has_collinear_triple(dst))) {
    throw Error(ErrorCode::DegenerateConfiguration, "three collinear points among four");
  }
  const Eigen::Matrix3d ts = detail::conditioning(src);
  const Eigen::Matrix3d td = detail::conditioning(dst);

  const auto n = static_cast<Eigen::Index>(pairs.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 * n, 9);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector3d s = ts * src[i].homogeneous();
    const Eigen::Vector3d d = td * dst[i].homogeneous();
    const double x = s.x() / s.z(), y = s.y() / s.z();
    const double X = d.x() / d.z(), Y = d.y() / d.z();
    a.row(2 * i) << -x, -y, -1, 0, 0, 0, X * x, X * y, X;
    a.row(2 * i + 1) << 0, 0, 0, -x, -y, -1, Y * x, Y * y, Y;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  // A unique solution needs a one-dimensional null space.
  if (sv.size() >= 8 && sv(7) <= 1e-10 * sv(0)) {
    throw Error(ErrorCode::DegenerateConfiguration, "correspondences do not determine a homography");
  }
  const Eigen::VectorXd hv = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << hv(0), hv(1), hv(2), hv(3), hv(4), hv(5), hv(6), hv(7), hv(8);
  const Eigen::Matrix3d hm = td.inverse() * hn * ts;
  if (std::abs(hm.determinant()) <= 1e-12 * std::pow(hm.norm(), 3)) {
    throw Error(ErrorCode::DegenerateConfiguration, "estimated homography is singular");
  }

  HomographyFit fit{Homography(hm), 0.0};
  double sse = 0.0;
  for (const auto& c : pairs) {
    const GroundPoint g = project(fit.h, c.image);
    sse += (g.x - c.ground.x) * (g.x - c.ground.x) + (g.y - c.ground.y) * (g.y - c.ground.y);
  }
  fit.rms = std::sqrt(sse / static_cast<double>(pairs.size()));
  return fit;
}

/// Camera profile: lens model plus image-to-ground homography.
struct Calibration {
  BrownModel lens;
  Homography h;

  GroundPoint to_ground(const ImagePoint& observed) const {
    return project(h, undistort(lens, observed));
  }
};

/// Parses `key = value` lines (fx, fy, cx, cy, k1..k3, p1, p2, h00..h22).
/// '#' starts a comment. Missing lens keys keep their defaults; a missing
/// homography entry falls back to the identity entry.
inline Calibration parse_calibration(std::istream& in) {
  std::map<std::string, double> kv;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    if (trim(line).empty()) continue;
    if (eq == std::string::npos) {
      throw Error(ErrorCode::MalformedFile, "calibration line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      std::size_t used = 0;
      kv[key] = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
    } catch (const std::exception&) {
      throw Error(ErrorCode::MalformedFile,
                  "calibration line " + std::to_string(line_no) + ": bad number for " + key);
    }
  }
  static const std::array<std::string, 9> lens_keys{"fx", "fy", "cx", "cy", "k1", "k2", "k3", "p1", "p2"};
  for (const auto& [key, value] : kv) {
    const bool lens = std::find(lens_keys.begin(), lens_keys.end(), key) != lens_keys.end();
    const bool hom = key.size() == 3 && key[0] == 'h' && key[1] >= '0' && key[1] <= '2' && key[2] >= '0' && key[2] <= '2';
    if (!lens && !hom) throw Error(ErrorCode::MalformedFile, "unknown calibration key '" + key + "'");
  }
  auto get = [&](const std::string& k, double fallback) {
    auto it = kv.find(k);
    return it == kv.end() ? fallback : it->second;
  };
  Calibration cal;
  cal.lens.fx = get("fx", 1.0);
  cal.lens.fy = get("fy", 1.0);
  cal.lens.cx = get("cx", 0.0);
  cal.lens.cy = get("cy", 0.0);
  cal.lens.k1 = get("k1", 0.0);
  cal.lens.k2 = get("k2", 0.0);
  cal.lens.k3 = get("k3", 0.0);
  cal.lens.p1 = get("p1", 0.0);
  cal.lens.p2 = get("p2", 0.0);
  cal.lens.validate();
  Eigen::Matrix3d m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      m(r, c) = get("h" + std::to_string(r) + std::to_string(c), r == c ? 1.0 : 0.0);
  cal.h = Homography(m);
  return cal;
}

inline Calibration load_calibration(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MalformedFile, "cannot open calibration file " + path);
  return parse_calibration(in);
}

}  // namespace atrium
