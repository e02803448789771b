#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "atrium/geometry.hpp"

using namespace atrium;

namespace {

BrownModel synthetic_lens() {
  BrownModel m;
  m.fx = 900;
  m.fy = 880;
  m.cx = 640;
  m.cy = 480;
  m.k1 = -0.12;
  m.k2 = 0.03;
  m.k3 = -0.002;
  m.p1 = 0.0005;
  m.p2 = -0.0003;
  return m;
}

// Hand evaluation of the forward polynomial.
ImagePoint distort_oracle(const BrownModel& m, ImagePoint p) {
  const double u = (p.u - m.cx) / m.fx, v = (p.v - m.cy) / m.fy;
  const double r2 = u * u + v * v, r4 = r2 * r2, r6 = r4 * r2;
  const double radial = 1 + m.k1 * r2 + m.k2 * r4 + m.k3 * r6;
  const double ud = u * radial + 2 * m.p1 * u * v + m.p2 * (r2 + 2 * u * u);
  const double vd = v * radial + m.p1 * (r2 + 2 * v * v) + 2 * m.p2 * u * v;
  return {ud * m.fx + m.cx, vd * m.fy + m.cy};
}

}  // namespace

TEST(Distort, IdentityWithoutCoefficients) {
  BrownModel m;
  m.fx = m.fy = 1000;
  m.cx = 320;
  m.cy = 240;
  const auto p = distort(m, {100, 50});
  EXPECT_EQ(p.u, 100);
  EXPECT_EQ(p.v, 50);
}

TEST(Distort, PrincipalPointIsFixed) {
  const auto m = synthetic_lens();
  const auto p = distort(m, {m.cx, m.cy});
  EXPECT_EQ(p.u, m.cx);
  EXPECT_EQ(p.v, m.cy);
  const auto q = undistort(m, {m.cx, m.cy});
  EXPECT_NEAR(q.u, m.cx, 1e-12);
  EXPECT_NEAR(q.v, m.cy, 1e-12);
}

TEST(Distort, RadialOnlyMatchesHandEvaluation) {
  BrownModel m;
  m.fx = m.fy = 1000;
  m.k1 = 0.1;
  // u = 0.1, r^2 = 0.01, factor 1.001 -> 100.1 px
  const auto p = distort(m, {100, 0});
  EXPECT_NEAR(p.u, 100.1, 1e-12);
  EXPECT_EQ(p.v, 0.0);
}

TEST(Distort, MatchesPolynomialOracle) {
  const auto m = synthetic_lens();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> du(0, 1280), dv(0, 960);
  for (int i = 0; i < 200; ++i) {
    const ImagePoint p{du(rng), dv(rng)};
    const auto a = distort(m, p), b = distort_oracle(m, p);
    EXPECT_NEAR(a.u, b.u, 1e-9);
    EXPECT_NEAR(a.v, b.v, 1e-9);
  }
}

TEST(Undistort, RoundTripOnRandomPoints) {
  const auto m = synthetic_lens();
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> du(0, 1280), dv(0, 960);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const ImagePoint p{du(rng), dv(rng)};
    const auto back = distort(m, undistort(m, p));
    worst = std::max(worst, std::hypot(back.u - p.u, back.v - p.v));
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(Undistort, IdentityWithoutCoefficients) {
  BrownModel m;
  m.fx = m.fy = 500;
  const auto p = undistort(m, {123.25, -40.5});
  EXPECT_NEAR(p.u, 123.25, 1e-12);
  EXPECT_NEAR(p.v, -40.5, 1e-12);
}

TEST(Undistort, NonConvergenceOutsideInvertibleRegion) {
  BrownModel m;
  m.fx = m.fy = 100;
  m.k1 = -1.0;  // forward map folds back beyond r^2 = 1/3
  // Newton from the distorted radius cannot climb past the fold
  EXPECT_THROW(
      {
        try {
          undistort(m, {100, 0});
        } catch (const Error& e) {
          EXPECT_EQ(e.code(), ErrorCode::NonConvergence);
          throw;
        }
      },
      Error);
  // whatever does come back is a genuine preimage
  for (double u = 0; u <= 1000; u += 7.5) {
    try {
      const auto p = undistort(m, {u, 0});
      EXPECT_NEAR(distort(m, p).u, u, 1e-6);
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::NonConvergence);
    }
  }
}

TEST(Project, IdentityAndScale) {
  const auto p = project(Homography{}, {3, 4});
  EXPECT_EQ(p.x, 3);
  EXPECT_EQ(p.y, 4);
  Eigen::Matrix3d s = Eigen::Matrix3d::Identity();
  s(0, 0) = s(1, 1) = 2;
  const auto q = project(Homography(s), {3, 4});
  EXPECT_EQ(q.x, 6);
  EXPECT_EQ(q.y, 8);
}

TEST(Project, PointAtInfinity) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(2, 0) = 1.0;
  m(2, 2) = 1.0;
  // w = u + 1 vanishes at u = -1
  EXPECT_THROW(project(Homography(m), {-1, 0}), Error);
}

TEST(Project, InverseMatrixRoundTrip) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> d(-1, 1);
  for (int k = 0; k < 50; ++k) {
    Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) m(r, c) += 0.2 * d(rng);
    const Homography h(m);
    // independent inverse: Eigen's explicit inverse of the raw matrix
    const Eigen::Matrix3d inv = h.matrix().inverse();
    for (int i = 0; i < 10; ++i) {
      const ImagePoint p{d(rng) * 2, d(rng) * 2};
      const auto g = project(h, p);
      const Eigen::Vector3d q = inv * Eigen::Vector3d(g.x, g.y, 1);
      EXPECT_NEAR(q.x() / q.z(), p.u, 1e-9);
      EXPECT_NEAR(q.y() / q.z(), p.v, 1e-9);
      const auto b = back_project(h, g);
      EXPECT_NEAR(b.u, p.u, 1e-9);
      EXPECT_NEAR(b.v, p.v, 1e-9);
    }
  }
}

TEST(Project, PreservesCollinearity) {
  Eigen::Matrix3d m;
  m << 1.1, 0.2, 3, -0.1, 0.9, 1, 0.001, 0.002, 1;
  const Homography h(m);
  for (double s : {0.0, 0.3, 1.7, 5.0}) {
    const auto a = project(h, {10, 20});
    const auto b = project(h, {10 + 4 * s, 20 - 3 * s});
    const auto c = project(h, {10 + 8 * s + 1, 20 - 6 * s - 0.75});
    const double cross = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    EXPECT_LT(std::abs(cross), 1e-9);
  }
}

TEST(EstimateHomography, UnitSquareGivesIdentity) {
  std::vector<Correspondence> pairs{{{0, 0}, {0, 0}}, {{1, 0}, {1, 0}}, {{1, 1}, {1, 1}}, {{0, 1}, {0, 1}}};
  const auto fit = estimate_homography(pairs);
  EXPECT_LT((fit.h.matrix() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT(fit.rms, 1e-9);
}

TEST(EstimateHomography, RecoversKnownMatrix) {
  Eigen::Matrix3d m;
  m << 0.02, 0.001, -4, -0.0005, -0.021, 20, 0.00001, 0.00002, 1;
  const Homography truth(m);
  std::vector<Correspondence> pairs;
  for (const ImagePoint p : {ImagePoint{100, 100}, ImagePoint{1200, 90}, ImagePoint{1180, 900}, ImagePoint{80, 880}})
    pairs.push_back({p, project(truth, p)});
  const auto fit = estimate_homography(pairs);
  const Eigen::Matrix3d diff = fit.h.matrix() - truth.matrix();
  EXPECT_LT(diff.cwiseAbs().maxCoeff(), 1e-9);
}

TEST(EstimateHomography, CollinearTripleIsDegenerate) {
  std::vector<Correspondence> pairs{{{0, 0}, {0, 0}}, {{1, 1}, {1, 0}}, {{2, 2}, {1, 1}}, {{0, 1}, {0, 1}}};
  try {
    estimate_homography(pairs);
    FAIL() << "expected DegenerateConfiguration";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateConfiguration);
  }
}

TEST(Calibration, ParsesKeyValueProfile) {
  std::istringstream in("# comment\nfx = 900\nfy=880\ncx = 640\ncy = 480\nk1 = -0.1\nh00 = 2\nh11 = 2\n");
  const auto cal = parse_calibration(in);
  EXPECT_EQ(cal.lens.fx, 900);
  EXPECT_EQ(cal.lens.k1, -0.1);
  const auto g = cal.to_ground({640, 480});
  EXPECT_NEAR(g.x, 1280, 1e-9);
  EXPECT_NEAR(g.y, 960, 1e-9);
}

TEST(Calibration, RejectsUnknownKeysAndBadNumbers) {
  std::istringstream a("fx = 1\nzz = 2\n");
  EXPECT_THROW(parse_calibration(a), Error);
  std::istringstream b("fx = one\n");
  EXPECT_THROW(parse_calibration(b), Error);
  std::istringstream c("fx = -1\n");
  EXPECT_THROW(parse_calibration(c), Error);
}
