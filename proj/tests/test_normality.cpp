#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "atrium/model.hpp"
#include "atrium/normality.hpp"

using namespace atrium;

namespace {

TrajectoryStep step(double x, double y, double vx, double vy) {
  TrajectoryStep s;
  s.x = x;
  s.y = y;
  s.vx = vx;
  s.vy = vy;
  return s;
}

TrajectoryStep random_step(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pos(0.0, 20.0), vel(-1.6, 1.6);
  return step(pos(rng), pos(rng), vel(rng), vel(rng));
}

// Literal evaluation of the normality formula: the 16 corners of the
// enclosing cell, those outside the grid removed, N(p) / max(|t - p|, 1e-6)
// averaged over the remaining count.
double literal_normality(const NormalityArray& a, const GridPoint& t) {
  const auto dims = a.transform().dims.as_array();
  int base[4];
  for (int d = 0; d < 4; ++d) base[d] = static_cast<int>(std::floor(t[d]));
  double sum = 0;
  int n = 0;
  for (int mask = 0; mask < 16; ++mask) {
    GridIndex p;
    bool inside = true;
    for (int d = 0; d < 4; ++d) {
      p[d] = base[d] + ((mask >> d) & 1);
      inside = inside && p[d] >= 0 && p[d] < dims[d];
    }
    if (!inside) continue;
    double d2 = 0;
    for (int d = 0; d < 4; ++d) d2 += (t[d] - p[d]) * (t[d] - p[d]);
    sum += a.at(p) / std::max(std::sqrt(d2), 1e-6);
    ++n;
  }
  return n ? sum / n : 0.0;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST(Kernel, UnitAtCenterAndInverseEAtUnitOffset) {
  const GridPoint t{3.25, 4.5, 1.75, 2.0};
  EXPECT_EQ(kernel({3, 4, 2, 2}, {3, 4, 2, 2}), 1.0);
  EXPECT_NEAR(kernel({4, 4, 2, 2}, {3, 4, 2, 2}), std::exp(-1.0), 1e-12);
  EXPECT_NEAR(kernel({3, 4, 2.5, 2}, {3, 4, 2, 2}), std::exp(-1.0), 1e-12);
  const double k = kernel(t, {3, 4, 2, 2});
  EXPECT_GT(k, 0.0);
  EXPECT_LT(k, 1.0);
}

TEST(Grid, DefaultHas2500Cells) {
  NormalityArray a;
  EXPECT_EQ(a.size(), 2500u);
  EXPECT_EQ(GridDims{}.cells(), 2500u);
}

TEST(Grid, BoundaryAndMidpointMapping) {
  GridTransform g;
  const auto lo = g.to_grid(step(0, 0, 0, 0));
  const auto hi = g.to_grid(step(20, 20, 0, 0));
  EXPECT_EQ(lo[0], -0.5);
  EXPECT_EQ(hi[0], 9.5);
  EXPECT_EQ(lo[2], 2.0);
  EXPECT_EQ(lo[3], 2.0);
  const auto fast = g.to_grid(step(5, 5, 10, -10));
  EXPECT_EQ(fast[2], 4.0);
  EXPECT_EQ(fast[3], 0.0);
}

TEST(Grid, InverseAffineRoundTrip) {
  GridTransform g;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> pos(0.0, 20.0), vel(-1.5, 1.5);
  for (int i = 0; i < 1000; ++i) {
    const auto s = step(pos(rng), pos(rng), vel(rng), vel(rng));
    const auto b = g.from_grid(g.to_grid(s));
    EXPECT_NEAR(b.x, s.x, 1e-12);
    EXPECT_NEAR(b.y, s.y, 1e-12);
    EXPECT_NEAR(b.vx, s.vx, 1e-12);
    EXPECT_NEAR(b.vy, s.vy, 1e-12);
  }
}

TEST(Resample, ExactHalfSecondGridAndLinearVelocity) {
  Trajectory t;
  for (int k = 0; k <= 75; ++k) t.push_back({k / 15.0, {2.0 + 1.0 * k / 15.0, 3.0}});
  const auto steps = resample(t);
  ASSERT_EQ(steps.size(), 11u);  // bins [0,0.5) ... [5,5.5)
  for (std::size_t i = 0; i < steps.size(); ++i) {
    EXPECT_EQ(steps[i].t, 0.25 + 0.5 * static_cast<double>(i));
    EXPECT_NEAR(steps[i].vx, 1.0, 1e-6);
    EXPECT_NEAR(steps[i].vy, 0.0, 1e-6);
  }
}

TEST(Resample, DiagonalMotionAtTwelveFps) {
  Trajectory t;
  const double vx = 0.7, vy = -1.2;
  for (int k = 0; k < 120; ++k) t.push_back({0.013 + k / 12.0, {5 + vx * k / 12.0, 9 + vy * k / 12.0}});
  for (const auto& s : resample(t)) {
    EXPECT_NEAR(std::fmod(s.t - 0.25, 0.5), 0.0, 1e-12);
    EXPECT_NEAR(s.vx, vx, 1e-6);
    EXPECT_NEAR(s.vy, vy, 1e-6);
  }
}

TEST(Resample, StationaryAndBoundarySamples) {
  Trajectory still{{0.0, {4, 4}}, {0.5, {4, 4}}, {1.0, {4, 4}}};
  for (const auto& s : resample(still)) {
    EXPECT_EQ(s.vx, 0.0);
    EXPECT_EQ(s.vy, 0.0);
    EXPECT_EQ(s.x, 4.0);
  }
  Trajectory boundary{{0.0, {1, 1}}, {0.5, {2, 1}}, {1.0, {3, 1}}};
  const auto b = resample(boundary);
  ASSERT_EQ(b.size(), 3u);
  EXPECT_EQ(b[1].x, 2.0);
}

TEST(Resample, ErrorsAndGapSplitting) {
  Trajectory one{{0.0, {1, 1}}};
  EXPECT_THROW(resample(one), Error);
  Trajectory gap{{0.0, {1, 1}}, {0.1, {1.1, 1}}, {3.0, {2, 1}}, {3.1, {2.1, 1}}};
  EXPECT_THROW(resample(gap), Error);
  EXPECT_EQ(split_on_gaps(gap).size(), 2u);
  EXPECT_EQ(trajectory_steps(gap).size(), 2u);
}

TEST(Deposit, ZeroVelocityLeavesArrayUnchanged) {
  NormalityArray a;
  const auto rec = a.deposit(step(10, 10, 0, 0));
  EXPECT_EQ(rec.weight, 0.0);
  EXPECT_EQ(a.total(), 0.0);
  a.withdraw(rec);
  EXPECT_EQ(a.total(), 0.0);
}

TEST(Deposit, FastStepAtCellCenterAddsExactlyOne) {
  NormalityArray a;
  GridTransform g;
  // cell center (3, 4); vx above v_max lands on the top velocity cell with weight 1
  auto s = g.from_grid({3, 4, 4, 2});
  s.vx = 3.0;
  const auto rec = a.deposit(s);
  EXPECT_EQ(rec.weight, 1.0);
  EXPECT_EQ(a.at({3, 4, 4, 2}), 1.0);
}

TEST(Deposit, MatchesFullGridSummation) {
  std::mt19937_64 rng(5);
  for (int k = 0; k < 50; ++k) {
    NormalityArray a;
    const auto s = random_step(rng);
    const auto rec = a.deposit(s);
    const auto dims = a.transform().dims.as_array();
    double windowed = 0, full = 0;
    for (int i = 0; i < dims[0]; ++i)
      for (int j = 0; j < dims[1]; ++j)
        for (int c = 0; c < dims[2]; ++c)
          for (int e = 0; e < dims[3]; ++e) {
            const GridIndex p{i, j, c, e};
            const double kv = rec.weight * kernel(rec.grid, p);
            full += kv;
            bool inside = true;
            for (int d = 0; d < 4; ++d) {
              const int base = static_cast<int>(std::floor(rec.grid[d]));
              inside = inside && p[d] >= base - 3 && p[d] <= base + 4;
            }
            if (inside) {
              windowed += kv;
              EXPECT_NEAR(a.at(p), kv, 1e-15);
            } else {
              EXPECT_EQ(a.at(p), 0.0);
            }
          }
    EXPECT_NEAR(a.total(), windowed, 1e-12);
    if (full > 0) { EXPECT_LT(std::abs(a.total() - full) / full, 1e-4); }
  }
}

TEST(Deposit, WithdrawIsExactInverse) {
  NormalityArray a;
  const auto rec = a.deposit(step(7.3, 2.2, 0.8, -0.4));
  a.withdraw(rec);
  for (double v : a.values()) EXPECT_LT(std::abs(v), 1e-12);
  EXPECT_THROW(a.withdraw(rec), Error);
}

TEST(Deposit, InterleavedLoadUnloadMatchesRebuild) {
  std::mt19937_64 rng(1234);
  NormalityArray a;
  std::vector<DepositRecord> live;
  std::bernoulli_distribution add(0.6);
  const auto start = std::chrono::steady_clock::now();
  for (int op = 0; op < 1000; ++op) {
    if (live.empty() || add(rng)) {
      live.push_back(a.deposit(random_step(rng)));
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, live.size() - 1);
      const std::size_t i = pick(rng);
      a.withdraw(live[i]);
      live.erase(live.begin() + static_cast<std::ptrdiff_t>(i));
    }
  }
  NormalityArray fresh;
  for (const auto& r : live) fresh.redeposit(r);
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(max_abs_diff(a.values(), fresh.values()), 1e-9);
  EXPECT_LT(elapsed, 5.0);
}

TEST(StepNormality, EmptyArrayIsZero) {
  NormalityArray a;
  std::mt19937_64 rng(2);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(a.step_normality(random_step(rng)), 0.0);
}

TEST(StepNormality, SingleMassHalfCellOffset) {
  NormalityArray a;
  std::vector<double> v(a.size(), 0.0);
  v[a.flat_index({4, 4, 2, 2})] = 1.0;
  a.restore(v, 1, {});
  // offset 0.5 along x only: the cell is [4,5] x {4,5} x {2,3} x {2,3}
  const GridPoint t{4.5, 4, 2, 2};
  EXPECT_DOUBLE_EQ(a.grid_normality(t), (1.0 / 0.5) / 16.0);
  EXPECT_DOUBLE_EQ(a.grid_normality(t), literal_normality(a, t));
}

TEST(StepNormality, OnLatticePointUsesCappedDistance) {
  NormalityArray a;
  std::vector<double> v(a.size(), 0.0);
  const double m = 0.75;
  v[a.flat_index({4, 4, 2, 2})] = m;
  a.restore(v, 1, {});
  EXPECT_DOUBLE_EQ(a.grid_normality({4, 4, 2, 2}), m / 1e-6 / 16.0);
}

TEST(StepNormality, EdgeClippedCornersMatchLiteralOracle) {
  std::mt19937_64 rng(3);
  NormalityArray a;
  for (int i = 0; i < 200; ++i) a.deposit(random_step(rng));
  const GridPoint edge_cases[] = {
      {-0.5, -0.5, 0, 0}, {9.5, 9.5, 4, 4}, {9.2, 0.1, 4, 2.5}, {-0.3, 5.5, 3.7, 0.0}, {0, 0, 0, 0}, {9, 9, 4, 4}};
  for (const auto& t : edge_cases) EXPECT_DOUBLE_EQ(a.grid_normality(t), literal_normality(a, t));
  for (int i = 0; i < 500; ++i) {
    const auto s = random_step(rng);
    const auto t = a.transform().to_grid(s);
    EXPECT_NEAR(a.step_normality(s), literal_normality(a, t), 1e-12 * std::max(1.0, literal_normality(a, t)));
  }
}

TEST(StepNormality, MonotoneUnderExtraDeposits) {
  std::mt19937_64 rng(4);
  NormalityArray a;
  std::vector<TrajectoryStep> probes;
  for (int i = 0; i < 50; ++i) probes.push_back(random_step(rng));
  for (int round = 0; round < 20; ++round) {
    std::vector<double> before;
    for (const auto& p : probes) before.push_back(a.step_normality(p));
    a.deposit(random_step(rng));
    for (std::size_t i = 0; i < probes.size(); ++i) EXPECT_GE(a.step_normality(probes[i]), before[i]);
  }
}

TEST(StepNormality, NormalizedModeIsAWeightedAverage) {
  NormalityOptions opts;
  opts.normalized = true;
  NormalityArray a(GridTransform{}, opts);
  std::vector<double> v(a.size(), 2.0);
  a.restore(v, 1, {});
  // constant field: any weighted average returns the constant
  EXPECT_NEAR(a.grid_normality({3.3, 7.1, 1.2, 2.9}), 2.0, 1e-12);
}

TEST(TrajectoryNormality, MeanOfSteps) {
  std::mt19937_64 rng(6);
  NormalityArray a;
  for (int i = 0; i < 100; ++i) a.deposit(random_step(rng));
  std::vector<TrajectoryStep> A, B;
  for (int i = 0; i < 7; ++i) A.push_back(random_step(rng));
  for (int i = 0; i < 3; ++i) B.push_back(random_step(rng));
  std::vector<TrajectoryStep> AB = A;
  AB.insert(AB.end(), B.begin(), B.end());
  const double m = (7 * a.trajectory_normality(A) + 3 * a.trajectory_normality(B)) / 10;
  EXPECT_NEAR(a.trajectory_normality(AB), m, 1e-12 * std::max(1.0, m));
  std::vector<TrajectoryStep> same(5, A[0]);
  EXPECT_NEAR(a.trajectory_normality(same), a.step_normality(A[0]), 1e-12 * std::max(1.0, m));
  EXPECT_THROW(a.trajectory_normality({}), Error);
}

TEST(Ring, CapacityOneKeepsOnlyLatest) {
  NormalityArray a;
  TrainingRing ring(1);
  std::vector<TrajectoryStep> A{step(3, 3, 1, 0), step(3.5, 3, 1, 0)};
  std::vector<TrajectoryStep> B{step(12, 15, 0, -1), step(12, 14.5, 0, -1)};
  ring_update(ring, a, A);
  ring_update(ring, a, B);
  NormalityArray only_b;
  for (const auto& s : B) only_b.deposit(s);
  EXPECT_LT(max_abs_diff(a.values(), only_b.values()), 1e-9);
}

TEST(Ring, NoEvictionBelowCapacity) {
  NormalityArray a;
  TrainingRing ring(4);
  std::mt19937_64 rng(9);
  for (int i = 0; i < 4; ++i) ring_update(ring, a, std::vector<TrajectoryStep>{random_step(rng)});
  EXPECT_EQ(ring.size(), 4u);
  EXPECT_EQ(a.live_records(), 4u);
}

TEST(Ring, RandomInsertsMatchRebuild) {
  std::mt19937_64 rng(10);
  NormalityArray a;
  TrainingRing ring(8);
  std::uniform_int_distribution<int> len(1, 12);
  for (int i = 0; i < 60; ++i) {
    std::vector<TrajectoryStep> steps;
    for (int k = len(rng); k > 0; --k) steps.push_back(random_step(rng));
    ring_update(ring, a, steps);
    EXPECT_LT(max_abs_diff(a.values(), rebuild_from_ring(a, ring).values()), 1e-9);
  }
  EXPECT_EQ(ring.size(), 8u);
}

TEST(Ring, TrainedCorridorScoresAboveUntrainedOne) {
  NormalityArray a;
  TrainingRing ring(100);
  auto corridor = [](double x0, double y0, double vx, double vy, double offset) {
    std::vector<TrajectoryStep> s;
    for (int k = 0; k < 20; ++k) s.push_back(step(x0 + vx * 0.5 * k + offset, y0 + vy * 0.5 * k + offset, vx, vy));
    return s;
  };
  for (int i = 0; i < 30; ++i) ring_update(ring, a, corridor(2, 10, 1.2, 0, 0.02 * (i % 5)));
  const double along_a = a.trajectory_normality(corridor(2, 10, 1.2, 0, 0.05));
  const double along_b = a.trajectory_normality(corridor(10, 2, 0, 1.2, 0.05));
  EXPECT_GT(along_a, along_b);
}

TEST(Threshold, SingleObviousGap) {
  std::vector<double> v(10, 0.05);
  v.insert(v.end(), 90, 0.5);
  const auto r = detect_threshold_detailed(v);
  EXPECT_TRUE(r.from_gap);
  EXPECT_GT(r.threshold, 0.05);
  EXPECT_LT(r.threshold, 0.5);
  const auto below = std::count_if(v.begin(), v.end(), [&](double x) { return x < r.threshold; });
  EXPECT_EQ(below, 10);
}

TEST(Threshold, GaplessUniformFallsBackToQuantile) {
  std::vector<double> v;
  for (int i = 1; i <= 100; ++i) v.push_back(i / 100.0);
  std::shuffle(v.begin(), v.end(), std::mt19937_64(1));
  const auto r = detect_threshold_detailed(v);
  EXPECT_FALSE(r.from_gap);
  EXPECT_DOUBLE_EQ(r.threshold, 0.10);
}

TEST(Threshold, BimodalSampleWithGapAtPointFourteen) {
  // atypical tail below the gap, broad normal mode above it
  std::mt19937_64 rng(14);
  std::vector<double> v;
  for (int i = 0; i < 12; ++i) v.push_back(0.02 + 0.0091 * i);
  std::normal_distribution<double> mode(0.45, 0.15);
  while (v.size() < 120) {
    const double x = mode(rng);
    if (x >= 0.16 && x <= 0.9) v.push_back(x);
  }
  const auto r = detect_threshold_detailed(v);
  EXPECT_TRUE(r.from_gap);
  EXPECT_GE(r.threshold, 0.12);
  EXPECT_LE(r.threshold, 0.16);
}

TEST(Threshold, LeadingEmptyRunIsNotAGap) {
  // all values far from zero, no interior gap: quantile fallback
  std::vector<double> v;
  for (int i = 0; i < 50; ++i) v.push_back(10.0 + 0.1 * i);
  const auto r = detect_threshold_detailed(v);
  EXPECT_FALSE(r.from_gap);
  EXPECT_DOUBLE_EQ(r.threshold, 10.4);
}

TEST(Threshold, GapFarFromTargetIsIgnored) {
  // the only gap separates the top 40%: not an atypical fraction near 10%
  std::vector<double> v;
  for (int i = 0; i < 60; ++i) v.push_back(0.1 + 0.005 * i);
  for (int i = 0; i < 40; ++i) v.push_back(0.8 + 0.005 * i);
  const auto r = detect_threshold_detailed(v);
  EXPECT_FALSE(r.from_gap);
  EXPECT_DOUBLE_EQ(r.threshold, 0.1 + 0.005 * 9);
}

TEST(Threshold, TooFewValues) {
  std::vector<double> v(9, 1.0);
  EXPECT_THROW(detect_threshold(v), Error);
  EXPECT_TRUE(is_atypical(0.1, 0.1));
  EXPECT_FALSE(is_atypical(0.11, 0.1));
}

TEST(Model, SnapshotRoundTripPreservesScores) {
  std::mt19937_64 rng(21);
  NormalityModel m(GridTransform{}, NormalityOptions{}, 16);
  for (int i = 0; i < 40; ++i) {
    Trajectory t;
    const auto s = random_step(rng);
    for (int k = 0; k < 20; ++k) t.push_back({k * 0.1, {std::clamp(s.x + s.vx * k * 0.1, 0.0, 20.0), s.y}});
    m.train(t);
  }
  std::stringstream buf;
  write_model(buf, m);
  const auto back = read_model(buf);
  EXPECT_EQ(max_abs_diff(m.array.values(), back.array.values()), 0.0);
  EXPECT_EQ(back.ring.size(), m.ring.size());
  EXPECT_EQ(back.ring.capacity(), 16u);
  for (int i = 0; i < 50; ++i) {
    const auto s = random_step(rng);
    EXPECT_EQ(m.array.step_normality(s), back.array.step_normality(s));
  }
  // the restored ring can keep evicting exactly
  NormalityModel copy = back;
  Trajectory t;
  for (int k = 0; k < 20; ++k) t.push_back({k * 0.1, {5 + 0.1 * k, 5}});
  copy.train(t);
  EXPECT_LT(max_abs_diff(copy.array.values(), rebuild_from_ring(copy.array, copy.ring).values()), 1e-9);
}

TEST(Model, RejectsBadMagicAndTruncation) {
  NormalityModel m;
  std::stringstream buf;
  write_model(buf, m);
  const std::string bytes = buf.str();
  std::stringstream truncated(bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW(read_model(truncated), Error);
  std::string bad = bytes;
  bad[0] = 'X';
  std::stringstream wrong(bad);
  EXPECT_THROW(read_model(wrong), Error);
}
