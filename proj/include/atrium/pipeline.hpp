#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "atrium/error.hpp"
#include "atrium/features.hpp"
#include "atrium/model.hpp"
#include "atrium/normality.hpp"
#include "atrium/simulator.hpp"
#include "atrium/tracking.hpp"

namespace atrium {

struct PipelineConfig {
  TrackerConfig tracker;
  GridTransform grid;
  NormalityOptions normality;
  std::size_t ring_capacity = 500;
  FeatureOptions features;
  RuleThresholds rules;
  double target_fraction = 0.10;
  /// Trajectories with fewer resampled steps are reported but neither
  /// scored nor trained.
  std::size_t min_steps = 4;
  /// Live tracks get a provisional score this often (frame time, s).
  double provisional_period = 5.0;

  void validate() const {
    tracker.validate();
    grid.validate();
    if (ring_capacity == 0) throw Error(ErrorCode::ConfigError, "ring_capacity must be >= 1");
    if (features.fit_degree < 1) throw Error(ErrorCode::ConfigError, "fit_degree must be >= 1");
    if (!(target_fraction > 0.0 && target_fraction < 1.0))
      throw Error(ErrorCode::ConfigError, "target_fraction must lie in (0, 1)");
    if (min_steps == 0) throw Error(ErrorCode::ConfigError, "min_steps must be >= 1");
    if (!(provisional_period > 0.0)) throw Error(ErrorCode::ConfigError, "provisional_period must be positive");
  }

  NormalityModel make_model() const { return NormalityModel(grid, normality, ring_capacity); }
};

/// One finished trajectory.
struct TrajectoryRecord {
  int track_id = 0;
  Trajectory points;
  std::optional<FeatureVector> features;  // absent below two points
  Label rule_label = Label::Normal;
  std::size_t steps = 0;
  std::optional<double> normality;  // scored against the model before training on it
  // Filled by evaluation.
  std::optional<Label> label;
  std::optional<int> agent_id;
  std::optional<Label> truth;
};

struct ProvisionalScore {
  int track_id = 0;
  double t = 0.0;
  double normality = 0.0;
  std::size_t steps = 0;
};

struct FrameResult {
  std::vector<TrackEvent> events;
  std::vector<std::size_t> finished;  // indices into Pipeline::records()
  std::vector<ProvisionalScore> provisional;
};

/// Detections -> tracking -> features -> score-then-train.
///
/// Trajectories are finalized when the tracker retires them (after the
/// reconnection window), so a reconnected track is scored once as a whole.
class Pipeline {
 public:
  Pipeline(PipelineConfig cfg, NormalityModel model) : cfg_((cfg.validate(), std::move(cfg))), tracker_(cfg_.tracker), model_(std::move(model)) {}
  explicit Pipeline(PipelineConfig cfg) : Pipeline(cfg, cfg.make_model()) {}

  const PipelineConfig& config() const { return cfg_; }
  const Tracker& tracker() const { return tracker_; }
  const NormalityModel& model() const { return model_; }
  const std::vector<TrajectoryRecord>& records() const { return records_; }
  std::size_t frames() const { return frames_; }

  FrameResult process_frame(double t, std::span<const Detection> detections) {
    FrameResult out;
    out.events = tracker_.step(detections, t);
    ++frames_;
    for (auto& track : tracker_.take_retired()) finalize(std::move(track), out);
    if (!last_provisional_ || t - *last_provisional_ >= cfg_.provisional_period) {
      last_provisional_ = t;
      out.provisional = provisional_scores(t);
    }
    return out;
  }

  /// End of source: every remaining track is terminated and finalized.
  FrameResult finish() {
    FrameResult out;
    out.events = tracker_.flush();
    for (auto& track : tracker_.take_retired()) finalize(std::move(track), out);
    return out;
  }

  /// Current scores of live confirmed tracks; nothing is trained.
  std::vector<ProvisionalScore> provisional_scores(double t) const {
    std::vector<ProvisionalScore> out;
    for (const auto& track : tracker_.live()) {
      if (track.status != TrackStatus::Active) continue;
      const auto steps = trajectory_steps(track.points);
      if (steps.empty()) continue;
      out.push_back({track.id, t, model_.array.trajectory_normality(steps), steps.size()});
    }
    return out;
  }

  /// Scored normality values so far, in record order.
  std::vector<double> scored_values() const {
    std::vector<double> v;
    for (const auto& r : records_)
      if (r.normality) v.push_back(*r.normality);
    return v;
  }

 private:
  void finalize(Track&& track, FrameResult& out) {
    TrajectoryRecord rec;
    rec.track_id = track.id;
    rec.points = std::move(track.points);
    if (rec.points.size() >= 2) {
      rec.features = compute_features(rec.points, cfg_.features);
      rec.rule_label = classify_rules(*rec.features, cfg_.rules);
    }
    const auto steps = trajectory_steps(rec.points);
    rec.steps = steps.size();
    if (steps.size() >= cfg_.min_steps) {
      rec.normality = model_.array.trajectory_normality(steps);
      ring_update(model_.ring, model_.array, steps);
    }
    out.finished.push_back(records_.size());
    records_.push_back(std::move(rec));
  }

  PipelineConfig cfg_;
  Tracker tracker_;
  NormalityModel model_;
  std::vector<TrajectoryRecord> records_;
  std::size_t frames_ = 0;
  std::optional<double> last_provisional_;
};

/// Outcome of one simulated agent, aggregated over the fragments linked to it.
struct AgentOutcome {
  int agent_id = 0;
  AgentKind kind = AgentKind::Walker;
  Label truth = Label::Normal;
  std::size_t fragments = 0;         // scored fragments
  std::optional<Label> predicted;    // point-weighted majority of fragment labels
};

struct Confusion {
  // Atypical is the positive class.
  int tp = 0, fp = 0, tn = 0, fn = 0, unscored = 0;

  void add(Label truth, std::optional<Label> predicted) {
    if (!predicted) ++unscored;
    else if (truth == Label::Atypical) (*predicted == Label::Atypical ? tp : fn)++;
    else (*predicted == Label::Atypical ? fp : tn)++;
  }
};

struct RunReport {
  std::vector<TrajectoryRecord> records;
  std::optional<ThresholdResult> threshold;
  std::size_t frames = 0;
  bool has_truth = false;
  std::vector<AgentOutcome> agents;
  Confusion trajectory_confusion;
  Confusion agent_confusion;
};

/// Applies the automatic threshold to every scored record.
inline void label_records(RunReport& report, double target_fraction) {
  std::vector<double> values;
  for (const auto& r : report.records)
    if (r.normality) values.push_back(*r.normality);
  if (values.size() < 10) return;
  report.threshold = detect_threshold_detailed(values, target_fraction);
  for (auto& r : report.records)
    if (r.normality) r.label = is_atypical(*r.normality, report.threshold->threshold) ? Label::Atypical : Label::Normal;
}

/// Links each record to the truth agent nearest to most of its points
/// (within `radius` m at the same frame) and aggregates per agent.
inline void evaluate_against_truth(RunReport& report, std::span<const TruthTrajectory> truth, double frame_rate,
                                   double radius = 1.0) {
  report.has_truth = true;
  std::unordered_map<long long, std::vector<std::pair<int, GroundPoint>>> by_frame;
  std::map<int, const TruthTrajectory*> agents;
  for (const auto& tt : truth) {
    agents[tt.agent_id] = &tt;
    for (const auto& p : tt.points) by_frame[std::llround(p.t * frame_rate)].push_back({tt.agent_id, p.p});
  }
  std::map<int, std::pair<double, double>> weight;  // agent -> (atypical points, normal points)
  std::map<int, std::size_t> fragments;
  report.trajectory_confusion = {};
  for (auto& r : report.records) {
    std::map<int, std::size_t> votes;
    for (const auto& p : r.points) {
      const auto it = by_frame.find(std::llround(p.t * frame_rate));
      if (it == by_frame.end()) continue;
      int best = -1;
      double best_d = radius;
      for (const auto& [id, q] : it->second) {
        const double d = distance(p.p, q);
        if (d <= best_d) {
          best_d = d;
          best = id;
        }
      }
      if (best >= 0) ++votes[best];
    }
    r.agent_id.reset();
    r.truth.reset();
    std::size_t top = 0;
    for (const auto& [id, n] : votes)
      if (n > top) {
        top = n;
        r.agent_id = id;
      }
    if (!r.agent_id) continue;
    r.truth = agents.at(*r.agent_id)->label;
    report.trajectory_confusion.add(*r.truth, r.label);
    if (r.label) {
      auto& w = weight[*r.agent_id];
      (*r.label == Label::Atypical ? w.first : w.second) += static_cast<double>(r.points.size());
      ++fragments[*r.agent_id];
    }
  }
  report.agents.clear();
  report.agent_confusion = {};
  for (const auto& [id, tt] : agents) {
    AgentOutcome a;
    a.agent_id = id;
    a.kind = tt->kind;
    a.truth = tt->label;
    if (const auto it = weight.find(id); it != weight.end()) {
      a.fragments = fragments[id];
      a.predicted = it->second.first > it->second.second ? Label::Atypical : Label::Normal;
    }
    report.agent_confusion.add(a.truth, a.predicted);
    report.agents.push_back(a);
  }
}

/// Runs a whole frame sequence through a pipeline and labels the result.
inline RunReport run_pipeline(Pipeline& pipeline, std::span<const Frame> frames,
                              std::span<const TruthTrajectory> truth = {}, double frame_rate = 15.0) {
  for (const auto& f : frames) pipeline.process_frame(f.t, f.detections);
  pipeline.finish();
  RunReport report;
  report.records = pipeline.records();
  report.frames = pipeline.frames();
  label_records(report, pipeline.config().target_fraction);
  if (!truth.empty()) evaluate_against_truth(report, truth, frame_rate);
  return report;
}

namespace detail {

inline std::string num(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace detail

inline void write_report_csv(std::ostream& out, const RunReport& report) {
  out << "track_id,t_start,t_end,n_points,d_fit,dist,c_rect,c_main,chord,rule_label,steps,normality,label,agent_id,"
         "truth\n";
  for (const auto& r : report.records) {
    out << r.track_id << ',' << detail::num(r.points.front().t, 4) << ',' << detail::num(r.points.back().t, 4) << ','
        << r.points.size() << ',';
    if (r.features) {
      const auto& f = *r.features;
      out << detail::num(f.d_fit) << ',' << detail::num(f.dist) << ',' << detail::num(f.c_rect) << ','
          << detail::num(f.c_main) << ',' << detail::num(f.chord) << ',';
    } else {
      out << ",,,,,";
    }
    out << to_string(r.rule_label) << ',' << r.steps << ',';
    if (r.normality) out << detail::num(*r.normality, 9);
    out << ',' << (r.label ? to_string(*r.label) : "") << ',';
    if (r.agent_id) out << *r.agent_id;
    out << ',' << (r.truth ? to_string(*r.truth) : "") << '\n';
  }
}

inline void write_report_summary(std::ostream& out, const RunReport& report) {
  std::size_t scored = 0;
  for (const auto& r : report.records) scored += r.normality ? 1 : 0;
  out << "frames: " << report.frames << '\n';
  out << "trajectories: " << report.records.size() << '\n';
  out << "scored: " << scored << '\n';
  if (report.threshold) {
    out << "threshold: " << detail::num(report.threshold->threshold, 9) << " ("
        << (report.threshold->from_gap ? "histogram gap" : "quantile fallback") << ")\n";
  } else {
    out << "threshold: none (fewer than 10 scored trajectories)\n";
  }
  if (!report.has_truth) return;
  auto matrix = [&](const char* title, const Confusion& c) {
    out << title << " (rows truth, columns predicted)\n";
    out << "              atypical  normal\n";
    out << "  atypical    " << c.tp << "  " << c.fn << '\n';
    out << "  normal      " << c.fp << "  " << c.tn << '\n';
    out << "  unscored    " << c.unscored << '\n';
  };
  std::size_t linked = 0;
  for (const auto& r : report.records) linked += r.agent_id ? 1 : 0;
  out << "truth agents: " << report.agents.size() << '\n';
  out << "fragments linked to truth: " << linked << '\n';
  matrix("per-trajectory confusion", report.trajectory_confusion);
  matrix("per-agent confusion", report.agent_confusion);
}

}  // namespace atrium
