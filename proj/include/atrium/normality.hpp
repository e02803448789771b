#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "atrium/error.hpp"
#include "atrium/tracking.hpp"

namespace atrium {

/// A 0.5 s aggregate of a trajectory: mean position and velocity.
struct TrajectoryStep {
  double t = 0.0;  // bin midpoint (s)
  double x = 0.0, y = 0.0;
  double vx = 0.0, vy = 0.0;

  double speed() const { return std::hypot(vx, vy); }
};

inline constexpr double kStepSeconds = 0.5;
inline constexpr double kMaxResampleGap = 2.0;

/// Splits a trajectory wherever consecutive samples are more than
/// `max_gap` seconds apart.
inline std::vector<Trajectory> split_on_gaps(std::span<const TimedPoint> traj, double max_gap = kMaxResampleGap) {
  std::vector<Trajectory> out;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    if (i == 0 || traj[i].t - traj[i - 1].t > max_gap) out.emplace_back();
    out.back().push_back(traj[i]);
  }
  return out;
}

/// Aggregates samples into bins [k * 0.5, (k + 1) * 0.5) of absolute time.
/// Each occupied bin yields one step at the bin midpoint carrying the sample
/// centroid. Velocity is the centroid displacement from the previous
/// occupied bin divided by the centroid time difference (0.5 s for uniform
/// sampling); the first step copies the second's velocity.
inline std::vector<TrajectoryStep> resample(std::span<const TimedPoint> traj) {
  if (traj.size() < 2) throw Error(ErrorCode::TooFewPoints, "resampling needs at least 2 points");
  for (std::size_t i = 1; i < traj.size(); ++i) {
    const double dt = traj[i].t - traj[i - 1].t;
    if (!(dt > 0.0)) throw Error(ErrorCode::InvalidArgument, "trajectory times must be strictly increasing");
    if (dt > kMaxResampleGap) {
      throw Error(ErrorCode::EmptyBins, "gap of " + std::to_string(dt) + " s exceeds " +
                                            std::to_string(kMaxResampleGap) + " s; split the trajectory first");
    }
  }

  struct Bin {
    long long index;
    double sx = 0, sy = 0, st = 0;
    std::size_t n = 0;
  };
  std::vector<Bin> bins;
  for (const auto& s : traj) {
    const auto k = static_cast<long long>(std::floor(s.t / kStepSeconds));
    if (bins.empty() || bins.back().index != k) bins.push_back(Bin{k});
    auto& b = bins.back();
    b.sx += s.p.x;
    b.sy += s.p.y;
    b.st += s.t;
    ++b.n;
  }

  std::vector<TrajectoryStep> steps;
  steps.reserve(bins.size());
  std::vector<double> centroid_t;
  for (const auto& b : bins) {
    const double n = static_cast<double>(b.n);
    TrajectoryStep s;
    s.t = static_cast<double>(b.index) * kStepSeconds + 0.5 * kStepSeconds;
    s.x = b.sx / n;
    s.y = b.sy / n;
    steps.push_back(s);
    centroid_t.push_back(b.st / n);
  }
  if (steps.size() == 1) {
    const double dt = traj.back().t - traj.front().t;
    steps[0].vx = (traj.back().p.x - traj.front().p.x) / dt;
    steps[0].vy = (traj.back().p.y - traj.front().p.y) / dt;
    return steps;
  }
  for (std::size_t i = 1; i < steps.size(); ++i) {
    const double dt = centroid_t[i] - centroid_t[i - 1];
    steps[i].vx = (steps[i].x - steps[i - 1].x) / dt;
    steps[i].vy = (steps[i].y - steps[i - 1].y) / dt;
  }
  steps[0].vx = steps[1].vx;
  steps[0].vy = steps[1].vy;
  return steps;
}

/// Steps of every gap-free segment (segments with fewer than two samples
/// are skipped), concatenated in time order.
inline std::vector<TrajectoryStep> trajectory_steps(std::span<const TimedPoint> traj) {
  std::vector<TrajectoryStep> out;
  for (const auto& segment : split_on_gaps(traj)) {
    if (segment.size() < 2) continue;
    const auto steps = resample(segment);
    out.insert(out.end(), steps.begin(), steps.end());
  }
  return out;
}

using GridPoint = std::array<double, 4>;
using GridIndex = std::array<int, 4>;

struct GridDims {
  int nx = 10, ny = 10, nvx = 5, nvy = 5;

  std::array<int, 4> as_array() const { return {nx, ny, nvx, nvy}; }
  std::size_t cells() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) * static_cast<std::size_t>(nvx) *
           static_cast<std::size_t>(nvy);
  }
  friend bool operator==(const GridDims&, const GridDims&) = default;
};

/// Affine map from trajectory space (m, m/s) into array index space, where
/// integer coordinates are cell centers.
struct GridTransform {
  double x_min = 0.0, x_max = 20.0;
  double y_min = 0.0, y_max = 20.0;
  double v_max = 1.5;  // upper end of ordinary walking speed
  GridDims dims;

  void validate() const {
    if (!(x_max > x_min) || !(y_max > y_min)) throw Error(ErrorCode::ConfigError, "grid position box is empty");
    if (!(v_max > 0.0)) throw Error(ErrorCode::ConfigError, "grid v_max must be positive");
    for (int n : dims.as_array())
      if (n < 2) throw Error(ErrorCode::ConfigError, "every grid dimension needs at least 2 cells");
  }

  GridPoint to_grid(const TrajectoryStep& s) const {
    const double x = std::clamp(s.x, x_min, x_max);
    const double y = std::clamp(s.y, y_min, y_max);
    return {(x - x_min) / (x_max - x_min) * dims.nx - 0.5, (y - y_min) / (y_max - y_min) * dims.ny - 0.5,
            velocity_to_grid(s.vx, dims.nvx), velocity_to_grid(s.vy, dims.nvy)};
  }

  /// Inverse of to_grid for unclamped inputs (t is not represented).
  TrajectoryStep from_grid(const GridPoint& g) const {
    TrajectoryStep s;
    s.x = (g[0] + 0.5) / dims.nx * (x_max - x_min) + x_min;
    s.y = (g[1] + 0.5) / dims.ny * (y_max - y_min) + y_min;
    s.vx = g[2] / (dims.nvx - 1) * (2.0 * v_max) - v_max;
    s.vy = g[3] / (dims.nvy - 1) * (2.0 * v_max) - v_max;
    return s;
  }

  friend bool operator==(const GridTransform&, const GridTransform&) = default;

 private:
  double velocity_to_grid(double v, int n) const {
    const double c = std::clamp(v, -v_max, v_max);
    return (c + v_max) / (2.0 * v_max) * (n - 1);
  }
};

using Sigma = std::array<double, 4>;
inline constexpr Sigma kDefaultSigma{1.0, 1.0, 0.5, 0.5};

/// Radial basis function kernel in grid space, exp(-sum((t - p)^2 / sigma^2)).
inline double kernel(const GridPoint& t, const GridIndex& p, const Sigma& sigma = kDefaultSigma) {
  double e = 0.0;
  for (int d = 0; d < 4; ++d) {
    const double diff = t[d] - p[d];
    e += diff * diff / (sigma[d] * sigma[d]);
  }
  return std::exp(-e);
}

/// Deposit weight from the step displacement: min(|v| * 0.5 s / l_ref, 1).
inline double velocity_weight(const TrajectoryStep& s, double reference_step_length = 1.0) {
  return std::min(s.speed() * kStepSeconds / reference_step_length, 1.0);
}

/// Everything needed to withdraw a deposit exactly.
struct DepositRecord {
  std::uint64_t id = 0;
  GridPoint grid{};
  double weight = 0.0;
};

struct NormalityOptions {
  Sigma sigma = kDefaultSigma;
  int truncation_radius = 3;  // cells beyond the enclosing cell, per axis
  double reference_step_length = 1.0;  // m
  bool normalized = false;  // inverse-distance weights summing to one instead of the literal mean
};

/// Dense 4-D accumulator of kernel deposits.
class NormalityArray {
 public:
  NormalityArray() : NormalityArray(GridTransform{}) {}

  explicit NormalityArray(GridTransform transform, NormalityOptions opts = {})
      : transform_(transform), opts_(opts) {
    transform_.validate();
    for (double s : opts_.sigma)
      if (!(s > 0.0)) throw Error(ErrorCode::ConfigError, "kernel sigma must be positive");
    if (opts_.truncation_radius < 0) throw Error(ErrorCode::ConfigError, "truncation radius must be >= 0");
    if (!(opts_.reference_step_length > 0.0)) throw Error(ErrorCode::ConfigError, "reference step length must be positive");
    dims_ = transform_.dims.as_array();
    values_.assign(transform_.dims.cells(), 0.0);
  }

  const GridTransform& transform() const { return transform_; }
  const NormalityOptions& options() const { return opts_; }
  std::size_t size() const { return values_.size(); }
  std::span<const double> values() const { return values_; }
  std::uint64_t next_record_id() const { return next_id_; }
  bool has_record(std::uint64_t id) const { return live_ids_.contains(id); }
  std::size_t live_records() const { return live_ids_.size(); }

  std::size_t flat_index(const GridIndex& p) const {
    return ((static_cast<std::size_t>(p[0]) * dims_[1] + p[1]) * dims_[2] + p[2]) * dims_[3] + p[3];
  }
  double at(const GridIndex& p) const { return values_[flat_index(p)]; }

  double total() const {
    double s = 0.0;
    for (double v : values_) s += v;
    return s;
  }

  /// Adds w * K_t(p) for every grid point p in the truncation window.
  DepositRecord deposit(const TrajectoryStep& s) {
    DepositRecord rec{next_id_++, transform_.to_grid(s), velocity_weight(s, opts_.reference_step_length)};
    apply(rec, +1.0);
    live_ids_.insert(rec.id);
    return rec;
  }

  /// Re-applies an existing record (rebuilds, replays).
  void redeposit(const DepositRecord& rec) {
    if (!live_ids_.insert(rec.id).second) {
      throw Error(ErrorCode::InvalidArgument, "deposit record " + std::to_string(rec.id) + " is already live");
    }
    apply(rec, +1.0);
    next_id_ = std::max(next_id_, rec.id + 1);
  }

  void withdraw(const DepositRecord& rec) {
    if (live_ids_.erase(rec.id) == 0) {
      throw Error(ErrorCode::UnknownRecord, "deposit record " + std::to_string(rec.id) + " is not live in this array");
    }
    apply(rec, -1.0);
  }

  /// Normality of one step: mean over the enclosing cell's corners (those
  /// inside the grid) of N(p) / |t - p|, distances in grid units and capped
  /// below at 1e-6.
  double step_normality(const TrajectoryStep& s) const { return grid_normality(transform_.to_grid(s)); }

  double grid_normality(const GridPoint& t) const {
    std::array<std::array<int, 2>, 4> corner{};
    std::array<int, 4> count{};
    for (int d = 0; d < 4; ++d) {
      const int lo = static_cast<int>(std::floor(t[d]));
      for (int c : {lo, lo + 1})
        if (c >= 0 && c < dims_[d]) corner[d][count[d]++] = c;
    }
    double sum = 0.0;
    double weight_sum = 0.0;
    int n = 0;
    for (int a = 0; a < count[0]; ++a)
      for (int b = 0; b < count[1]; ++b)
        for (int c = 0; c < count[2]; ++c)
          for (int e = 0; e < count[3]; ++e) {
            const GridIndex p{corner[0][a], corner[1][b], corner[2][c], corner[3][e]};
            double d2 = 0.0;
            for (int k = 0; k < 4; ++k) d2 += (t[k] - p[k]) * (t[k] - p[k]);
            const double dist = std::max(std::sqrt(d2), 1e-6);
            sum += at(p) / dist;
            weight_sum += 1.0 / dist;
            ++n;
          }
    if (n == 0) return 0.0;
    return opts_.normalized ? sum / weight_sum : sum / n;
  }

  /// Mean step normality.
  double trajectory_normality(std::span<const TrajectoryStep> steps) const {
    if (steps.empty()) throw Error(ErrorCode::EmptySteps, "trajectory has no steps");
    double sum = 0.0;
    for (const auto& s : steps) sum += step_normality(s);
    return sum / static_cast<double>(steps.size());
  }

  /// Snapshot restore hook; values are taken verbatim.
  void restore(std::vector<double> values, std::uint64_t next_id, std::vector<std::uint64_t> live_ids) {
    if (values.size() != values_.size()) throw Error(ErrorCode::MalformedFile, "array size does not match dims");
    values_ = std::move(values);
    next_id_ = next_id;
    live_ids_ = {live_ids.begin(), live_ids.end()};
  }

 private:
  void apply(const DepositRecord& rec, double sign) {
    if (rec.weight == 0.0) return;
    const int r = opts_.truncation_radius;
    std::array<int, 4> lo{}, hi{};
    std::array<std::vector<double>, 4> factor;
    for (int d = 0; d < 4; ++d) {
      const int base = static_cast<int>(std::floor(rec.grid[d]));
      lo[d] = std::max(0, base - r);
      hi[d] = std::min(dims_[d] - 1, base + 1 + r);
      const double s2 = opts_.sigma[d] * opts_.sigma[d];
      for (int p = lo[d]; p <= hi[d]; ++p) {
        const double diff = rec.grid[d] - p;
        factor[d].push_back(diff * diff / s2);
      }
    }
    const double w = sign * rec.weight;
    for (int a = lo[0]; a <= hi[0]; ++a)
      for (int b = lo[1]; b <= hi[1]; ++b)
        for (int c = lo[2]; c <= hi[2]; ++c)
          for (int e = lo[3]; e <= hi[3]; ++e) {
            const double ex = factor[0][a - lo[0]] + factor[1][b - lo[1]] + factor[2][c - lo[2]] + factor[3][e - lo[3]];
            double& cell = values_[flat_index({a, b, c, e})];
            cell += w * std::exp(-ex);
            if (sign < 0 && cell < -1e-9) cell = 0.0;
          }
  }

  GridTransform transform_;
  NormalityOptions opts_;
  std::array<int, 4> dims_{};
  std::vector<double> values_;
  std::uint64_t next_id_ = 1;
  std::unordered_set<std::uint64_t> live_ids_;
};

/// Fixed-capacity FIFO of per-trajectory deposit records.
class TrainingRing {
 public:
  explicit TrainingRing(std::size_t capacity = 500) : capacity_(capacity) {
    if (capacity_ == 0) throw Error(ErrorCode::ConfigError, "ring capacity must be >= 1");
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return slots_.size(); }
  const std::deque<std::vector<DepositRecord>>& slots() const { return slots_; }

  /// Evicts the oldest trajectory when full, then deposits the new one.
  void insert(NormalityArray& array, std::span<const TrajectoryStep> steps) {
    if (slots_.size() >= capacity_) {
      for (const auto& rec : slots_.front()) array.withdraw(rec);
      slots_.pop_front();
    }
    std::vector<DepositRecord> records;
    records.reserve(steps.size());
    for (const auto& s : steps) records.push_back(array.deposit(s));
    slots_.push_back(std::move(records));
  }

  void restore(std::deque<std::vector<DepositRecord>> slots) {
    if (slots.size() > capacity_) throw Error(ErrorCode::MalformedFile, "ring holds more slots than its capacity");
    slots_ = std::move(slots);
  }

 private:
  std::size_t capacity_;
  std::deque<std::vector<DepositRecord>> slots_;
};

inline void ring_update(TrainingRing& ring, NormalityArray& array, std::span<const TrajectoryStep> steps) {
  ring.insert(array, steps);
}

/// Rebuilds an array from scratch out of the ring's records.
inline NormalityArray rebuild_from_ring(const NormalityArray& like, const TrainingRing& ring) {
  NormalityArray fresh(like.transform(), like.options());
  for (const auto& slot : ring.slots())
    for (const auto& rec : slot) fresh.redeposit(rec);
  return fresh;
}

struct ThresholdResult {
  double threshold = 0.0;
  bool from_gap = false;  // false: target-fraction quantile fallback
};

/// Histogram-gap threshold selection.
///
/// Builds a 50-bin histogram over [0, max]; every maximal run of empty bins
/// lying between two occupied bins proposes its center as threshold, scored
/// by gap width times a Gaussian (sd 0.05) in the fraction of values below
/// the candidate around `target_fraction`. Gaps more than three sd away from
/// the target are ignored. Without an eligible gap the threshold is the
/// largest value of the lowest `target_fraction` of the sample. Values at or
/// below the threshold are atypical.
inline ThresholdResult detect_threshold_detailed(std::span<const double> values, double target_fraction = 0.10) {
  constexpr int kBins = 50;
  constexpr double kPeakWidth = 0.05;
  if (values.size() < 10) throw Error(ErrorCode::TooFewValues, "threshold detection needs at least 10 values");
  if (!(target_fraction > 0.0 && target_fraction < 1.0))
    throw Error(ErrorCode::InvalidArgument, "target fraction must lie in (0, 1)");

  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double max = sorted.back();
  const auto n = static_cast<double>(sorted.size());

  ThresholdResult best{};
  double best_score = -1.0;
  if (max > 0.0) {
    const double width = max / kBins;
    std::array<int, kBins> hist{};
    for (double v : sorted) {
      const int b = std::clamp(static_cast<int>(std::floor(std::max(v, 0.0) / width)), 0, kBins - 1);
      ++hist[b];
    }
    for (int b = 0; b < kBins;) {
      if (hist[b] != 0) {
        ++b;
        continue;
      }
      int e = b;
      while (e < kBins && hist[e] == 0) ++e;
      if (b == 0) {  // the empty run below the smallest value separates nothing
        b = e;
        continue;
      }
      const double theta = 0.5 * (b + e) * width;
      const double gap = (e - b) * width;
      const double q = static_cast<double>(std::lower_bound(sorted.begin(), sorted.end(), theta) - sorted.begin()) / n;
      if (std::abs(q - target_fraction) > 3.0 * kPeakWidth) {
        b = e;
        continue;
      }
      const double score = gap * std::exp(-(q - target_fraction) * (q - target_fraction) / (2.0 * kPeakWidth * kPeakWidth));
      if (score > best_score) {
        best_score = score;
        best = {theta, true};
      }
      b = e;
    }
  }
  if (best_score < 0.0) {
    const auto k = static_cast<std::size_t>(std::max(0.0, std::ceil(target_fraction * n - 1e-9) - 1.0));
    best = {sorted[std::min(k, sorted.size() - 1)], false};
  }
  return best;
}

inline double detect_threshold(std::span<const double> values, double target_fraction = 0.10) {
  return detect_threshold_detailed(values, target_fraction).threshold;
}

inline bool is_atypical(double normality, double threshold) { return normality <= threshold; }

}  // namespace atrium
