#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "atrium/features.hpp"

using namespace atrium;

namespace {

Trajectory random_walk(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> step(0.0, 0.3);
  Trajectory t;
  double x = 5, y = 5;
  for (int i = 0; i < n; ++i) {
    x += 0.4 + step(rng);
    y += 0.1 + step(rng);
    t.push_back({i * 0.1, {x, y}});
  }
  return t;
}

Trajectory transform(const Trajectory& in, double angle, double scale, double tx, double ty) {
  Trajectory out;
  const double c = std::cos(angle), s = std::sin(angle);
  for (const auto& p : in) out.push_back({p.t, {scale * (c * p.p.x - s * p.p.y) + tx, scale * (s * p.p.x + c * p.p.y) + ty}});
  return out;
}

struct LineFit {
  double rms;
  double width;
};

// Orthogonal line fit by brute-force search over directions through the
// centroid (coarse grid, then golden-section refinement).
LineFit line_fit_oracle(const Trajectory& t) {
  double cx = 0, cy = 0;
  for (const auto& p : t) {
    cx += p.p.x;
    cy += p.p.y;
  }
  cx /= t.size();
  cy /= t.size();
  auto rms = [&](double th) {
    double s = 0;
    for (const auto& p : t) {
      const double w = -(p.p.x - cx) * std::sin(th) + (p.p.y - cy) * std::cos(th);
      s += w * w;
    }
    return std::sqrt(s / t.size());
  };
  double best = 0, best_v = rms(0);
  for (int i = 1; i < 3600; ++i) {
    const double th = M_PI * i / 3600;
    if (const double v = rms(th); v < best_v) {
      best_v = v;
      best = th;
    }
  }
  double a = best - M_PI / 3600, b = best + M_PI / 3600;
  const double g = (std::sqrt(5.0) - 1) / 2;
  for (int i = 0; i < 100; ++i) {
    const double c = b - g * (b - a), d = a + g * (b - a);
    if (rms(c) < rms(d)) b = d;
    else a = c;
  }
  const double th = 0.5 * (a + b);
  double lo = 1e300, hi = -1e300;
  for (const auto& p : t) {
    const double w = -(p.p.x - cx) * std::sin(th) + (p.p.y - cy) * std::cos(th);
    lo = std::min(lo, w);
    hi = std::max(hi, w);
  }
  return {rms(th), hi - lo};
}

}  // namespace

TEST(Features, StraightLineHasZeroFitAndWidth) {
  Trajectory t;
  for (int i = 0; i < 20; ++i) t.push_back({i * 0.1, {1.0 + 0.5 * i, 2.0 + 0.25 * i}});
  const auto f = compute_features(t);
  EXPECT_EQ(f.d_fit, 0.0);
  EXPECT_EQ(f.c_main, 0.0);
  EXPECT_EQ(f.n_points, 20u);
  EXPECT_NEAR(f.dist, std::hypot(9.5, 4.75), 1e-12);
  EXPECT_NEAR(f.chord, f.dist, 1e-12);
  EXPECT_NEAR(f.c_rect, 2 * (9.5 + 4.75), 1e-12);
}

TEST(Features, AxisAlignedRectangleByHand) {
  // three sides of a 4 x 2 rectangle; the corners are symmetric about
  // the centroid so the principal axis is x
  Trajectory t{{0, {0, 0}}, {1, {4, 0}}, {2, {4, 2}}, {3, {0, 2}}};
  const auto f = compute_features(t);
  EXPECT_NEAR(f.dist, 10.0, 1e-12);
  EXPECT_NEAR(f.c_rect, 12.0, 1e-12);
  EXPECT_NEAR(f.c_main, 2.0, 1e-12);
  EXPECT_NEAR(f.chord, 2.0, 1e-12);
  EXPECT_EQ(classify_rules(f), Label::Atypical);
}

TEST(Features, DFitMatchesBruteForceLineSearch) {
  std::mt19937_64 rng(41);
  for (int k = 0; k < 30; ++k) {
    const auto t = random_walk(rng, 40);
    const auto f = compute_features(t);
    const auto o = line_fit_oracle(t);
    EXPECT_NEAR(f.d_fit, o.rms, 1e-9);
    EXPECT_NEAR(f.c_main, o.width, 1e-6);
  }
}

TEST(Features, RigidMotionInvariance) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> ang(0, 2 * M_PI), off(-50, 50);
  for (int k = 0; k < 50; ++k) {
    const auto t = random_walk(rng, 30);
    const auto f = compute_features(t);
    const auto g = compute_features(transform(t, ang(rng), 1.0, off(rng), off(rng)));
    EXPECT_NEAR(f.d_fit, g.d_fit, 1e-9);
    EXPECT_NEAR(f.dist, g.dist, 1e-9);
    EXPECT_NEAR(f.c_main, g.c_main, 1e-9);
    EXPECT_NEAR(f.chord, g.chord, 1e-9);
  }
}

TEST(Features, UniformScalingIsLinear) {
  std::mt19937_64 rng(8);
  for (double s : {0.1, 2.0, 37.5}) {
    const auto t = random_walk(rng, 30);
    const auto f = compute_features(t);
    const auto g = compute_features(transform(t, 0.0, s, 0.0, 0.0));
    EXPECT_NEAR(g.d_fit, s * f.d_fit, 1e-9 * s * 100);
    EXPECT_NEAR(g.dist, s * f.dist, 1e-9 * s * 100);
    EXPECT_NEAR(g.c_rect, s * f.c_rect, 1e-9 * s * 100);
    EXPECT_NEAR(g.c_main, s * f.c_main, 1e-9 * s * 100);
  }
}

TEST(Features, PolynomialFitRemovesCurvature) {
  Trajectory t;
  for (int i = 0; i < 30; ++i) {
    const double x = i * 0.2;
    t.push_back({i * 0.1, {x, 0.3 * x * x}});
  }
  FeatureOptions quad;
  quad.fit_degree = 2;
  EXPECT_GT(compute_features(t).d_fit, 0.1);
  // a parabola in a rotated frame is not exactly quadratic, but much closer
  EXPECT_LT(compute_features(t, quad).d_fit, compute_features(t).d_fit);
}

TEST(Features, ErrorsOnTooFewPoints) {
  Trajectory t{{0, {1, 1}}};
  EXPECT_THROW(compute_features(t), Error);
}

TEST(Rules, TortuousPathIsAtypical) {
  Trajectory zigzag;
  for (int i = 0; i < 40; ++i) zigzag.push_back({i * 0.1, {i * 0.05, (i % 2) ? 0.6 : -0.6}});
  EXPECT_EQ(classify_rules(compute_features(zigzag)), Label::Atypical);
  Trajectory straight;
  for (int i = 0; i < 40; ++i) straight.push_back({i * 0.1, {i * 0.1, 0.01 * (i % 2)}});
  EXPECT_EQ(classify_rules(compute_features(straight)), Label::Normal);
}
