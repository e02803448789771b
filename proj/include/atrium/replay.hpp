#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "atrium/io.hpp"
#include "atrium/pipeline.hpp"
#include "atrium/png.hpp"
#include "atrium/render.hpp"
#include "atrium/storage.hpp"

namespace atrium {

struct ReplayOptions {
  Date start{std::chrono::year{2026}, std::chrono::January, std::chrono::day{5}};
  int days = 1;
  double day_start = 8.0 * 3600.0;  // simulated opening time, s after midnight
  int width = 960;
  int height = 540;
  bool render = true;
};

struct DayReplay {
  DaySession session;
  RunReport report;
  std::optional<Image> frame;  // end-of-day still
};

/// Session track of a pipeline record, shifted onto the day clock; points
/// past midnight are dropped.
inline SessionTrack to_session_track(const TrajectoryRecord& r, double day_start) {
  SessionTrack st{r.track_id, {}};
  for (const auto& p : r.points)
    if (p.t + day_start >= 0.0 && p.t + day_start < kSecondsPerDay) st.points.push_back({p.t + day_start, p.p});
  return st;
}

/// Replays `scenario` over consecutive days. Day d reseeds the scenario
/// with seed + d; the model learned on one day carries into the next (the
/// first day starts from the scenario's warm-up, if any). `on_day` sees each
/// day as soon as it is finished.
inline std::vector<DayReplay> replay_days(const PipelineConfig& cfg, Scenario scenario, const ReplayOptions& opts,
                                          const std::function<void(const DayReplay&)>& on_day = {}) {
  if (opts.days < 1) throw Error(ErrorCode::InvalidArgument, "replay needs at least one day");
  const std::uint64_t base_seed = scenario.seed;
  std::optional<NormalityModel> model;
  std::vector<DayReplay> out;
  for (int d = 0; d < opts.days; ++d) {
    scenario.set_seed(base_seed + static_cast<std::uint64_t>(d));
    if (!model) model = pretrain_model(cfg, scenario);
    const Simulation sim = scenario.simulate();
    Pipeline pipeline(cfg, *model);
    DayReplay day;
    day.report = run_pipeline(pipeline, sim.frames, sim.truth, scenario.scene.frame_rate);
    model = pipeline.model();

    const Date date = std::chrono::sys_days{opts.start} + std::chrono::days{d};
    day.session = DaySession::open(date);
    RenderOptions ro;
    ro.bounds = cfg.tracker.bounds;
    for (const auto& r : day.report.records) {
      auto st = to_session_track(r, opts.day_start);
      if (!st.points.empty()) day.session.tracks.push_back(std::move(st));
      if (r.label) ro.atypical[r.track_id] = *r.label == Label::Atypical;
    }
    if (opts.render)
      day.frame = render_frame(day.session, {}, opts.day_start + scenario.duration, opts.width, opts.height, ro);
    if (on_day) on_day(day);
    out.push_back(std::move(day));
  }
  return out;
}

}  // namespace atrium
