#pragma once

#include <Eigen/Dense>

#include "atrium/error.hpp"
#include "atrium/geometry.hpp"

namespace atrium {

/// Constant-velocity Kalman filter on the ground plane.
/// State (x, y, vx, vy); process noise is white acceleration with spectral
/// density `q` ((m/s^2)^2), measurement noise is isotropic `r` (m^2).
class KalmanState {
 public:
  using Vector4 = Eigen::Matrix<double, 4, 1>;
  using Matrix4 = Eigen::Matrix<double, 4, 4>;

  KalmanState() = default;

  KalmanState(const GroundPoint& first, double q, double r, double initial_speed_sigma)
      : q_(q), r_(r) {
    x_ << first.x, first.y, 0.0, 0.0;
    p_ = Matrix4::Zero();
    p_(0, 0) = p_(1, 1) = r;
    p_(2, 2) = p_(3, 3) = initial_speed_sigma * initial_speed_sigma;
  }

  const Vector4& state() const { return x_; }
  const Matrix4& covariance() const { return p_; }
  GroundPoint position() const { return {x_(0), x_(1)}; }
  GroundPoint velocity() const { return {x_(2), x_(3)}; }
  int updates() const { return updates_; }

  /// Time update by dt seconds, in place.
  void predict(double dt) {
    const Matrix4 f = transition(dt);
    x_ = f * x_;
    p_ = f * p_ * f.transpose() + process_noise(dt);
    symmetrize();
  }

  /// Position after a time update by dt without touching the filter.
  GroundPoint predicted_position(double dt) const {
    return {x_(0) + dt * x_(2), x_(1) + dt * x_(3)};
  }

  /// Measurement update with a position fix taken `dt` after the previous one.
  ///
  /// The second fix initializes the velocity by two-point differencing (the
  /// state and covariance are replaced by the differencing estimate); from the
  /// third fix on this is the ordinary predict + Joseph-form correction.
  void update(const GroundPoint& z, double dt) {
    if (!(dt > 0.0)) throw Error(ErrorCode::InvalidArgument, "Kalman update needs dt > 0");
    if (updates_ == 0) {
      const GroundPoint prev = position();
      x_ << z.x, z.y, (z.x - prev.x) / dt, (z.y - prev.y) / dt;
      p_ = Matrix4::Zero();
      p_(0, 0) = p_(1, 1) = r_;
      p_(0, 2) = p_(2, 0) = p_(1, 3) = p_(3, 1) = r_ / dt;
      p_(2, 2) = p_(3, 3) = 2.0 * r_ / (dt * dt);
      ++updates_;
      return;
    }
    predict(dt);
    Eigen::Matrix<double, 2, 4> h = Eigen::Matrix<double, 2, 4>::Zero();
    h(0, 0) = h(1, 1) = 1.0;
    const Eigen::Matrix2d s = h * p_ * h.transpose() + r_ * Eigen::Matrix2d::Identity();
    const Eigen::Matrix<double, 4, 2> k = p_ * h.transpose() * s.inverse();
    const Eigen::Vector2d innovation(z.x - x_(0), z.y - x_(1));
    x_ += k * innovation;
    const Matrix4 i_kh = Matrix4::Identity() - k * h;
    p_ = i_kh * p_ * i_kh.transpose() + r_ * k * k.transpose();
    symmetrize();
    ++updates_;
  }

 private:
  static Matrix4 transition(double dt) {
    Matrix4 f = Matrix4::Identity();
    f(0, 2) = f(1, 3) = dt;
    return f;
  }

  Matrix4 process_noise(double dt) const {
    const double dt2 = dt * dt, dt3 = dt2 * dt, dt4 = dt3 * dt;
    Matrix4 qm = Matrix4::Zero();
    qm(0, 0) = qm(1, 1) = q_ * dt4 / 4.0;
    qm(0, 2) = qm(2, 0) = qm(1, 3) = qm(3, 1) = q_ * dt3 / 2.0;
    qm(2, 2) = qm(3, 3) = q_ * dt2;
    return qm;
  }

  void symmetrize() { p_ = 0.5 * (p_ + p_.transpose()).eval(); }

  Vector4 x_ = Vector4::Zero();
  Matrix4 p_ = Matrix4::Identity();
  double q_ = 2.0;
  double r_ = 0.05;
  int updates_ = 0;
};

}  // namespace atrium
