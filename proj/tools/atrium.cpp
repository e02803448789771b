// atrium: command-line entry point.
//
// Exit codes: 0 success, 1 usage error, 2 bad input (missing/malformed file,
// invalid configuration), 3 runtime failure.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "atrium/geometry.hpp"
#include "atrium/io.hpp"
#include "atrium/model.hpp"
#include "atrium/pipeline.hpp"
#include "atrium/render.hpp"
#include "atrium/replay.hpp"
#include "atrium/storage.hpp"
#include "atrium/server.hpp"

namespace fs = std::filesystem;
using namespace atrium;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitInput = 2;
constexpr int kExitRuntime = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::uint64_t seed = 1;
  bool seed_given = false;
  std::string out;
  std::string format;
};

void add_common(CLI::App* sub, Common& c, const std::string& config_help, const std::string& formats) {
  sub->add_option("--config", c.config, config_help);
  sub->add_option("--seed", c.seed, "random seed (subcommands without randomness accept and ignore it)");
  sub->add_option("--out", c.out, "output path");
  if (!formats.empty())
    sub->add_option("--format", c.format, "output format")->check(CLI::IsMember(CLI::detail::split(formats, '|')));
}

fs::path data_dir() {
  if (const char* env = std::getenv("ATRIUM_DATA_DIR"); env && *env) return env;
  return fs::current_path();
}

PipelineConfig engine_config(const std::string& path) {
  return path.empty() ? PipelineConfig{} : engine_config_from_json(load_json_file(path));
}

std::string format_or(const Common& c, const std::string& fallback) {
  if (!c.format.empty()) return c.format;
  const auto ext = fs::path(c.out).extension().string();
  if (ext == ".csv") return "csv";
  if (ext == ".xml") return "xml";
  if (ext == ".png") return "png";
  return fallback;
}

// Output stream: the --out file, or stdout when no path is given.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
      file_.open(path, std::ios::trunc);
      if (!file_) throw Error(ErrorCode::MalformedFile, "cannot write " + path);
    }
  }
  std::ostream& stream() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

 private:
  std::ofstream file_;
};

// Tracks from a session XML file or a track_id,t,x,y CSV file, ordered by
// start time then id.
std::vector<SessionTrack> load_tracks(const std::string& path) {
  std::vector<SessionTrack> tracks;
  if (fs::path(path).extension() == ".csv") {
    auto in = detail::open_input(path);
    for (auto& [id, traj] : read_trajectories_csv(in)) tracks.push_back({id, std::move(traj)});
  } else {
    tracks = load_session(path).tracks;
  }
  std::stable_sort(tracks.begin(), tracks.end(), [](const SessionTrack& a, const SessionTrack& b) {
    const double ta = a.points.empty() ? 0.0 : a.points.front().t;
    const double tb = b.points.empty() ? 0.0 : b.points.front().t;
    return ta != tb ? ta < tb : a.id < b.id;
  });
  return tracks;
}

Date parse_date_arg(const std::string& s) {
  if (s.empty()) return local_date(std::chrono::system_clock::now());
  return parse_date(s);
}

std::string fmt(double v, int digits) { return detail::num(v, digits); }

std::string exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---- simulate ---------------------------------------------------------------

int cmd_simulate(const Common& c) {
  if (c.config.empty()) throw UsageError("simulate needs --config SCENARIO.json");
  auto scenario = scenario_from_json(load_json_file(c.config));
  if (c.seed_given) scenario.set_seed(c.seed);
  const fs::path dir = c.out.empty() ? fs::path(".") : fs::path(c.out);
  fs::create_directories(dir);
  const auto sim = scenario.simulate();
  {
    auto out = detail::open_output(dir / "detections.csv");
    write_detections_csv(out, sim.frames);
  }
  {
    auto out = detail::open_output(dir / "truth.csv");
    write_truth_csv(out, sim.truth);
  }
  std::size_t dets = 0;
  for (const auto& f : sim.frames) dets += f.detections.size();
  std::cout << "frames: " << sim.frames.size() << "\ndetections: " << dets << "\nagents: " << sim.truth.size()
            << "\nwrote " << (dir / "detections.csv").string() << " and " << (dir / "truth.csv").string() << '\n';
  return 0;
}

// ---- track ------------------------------------------------------------------

struct TrackArgs {
  std::string input;
  std::string calibration;
  std::string date;
  double day_start = 0.0;
  double frame_rate = 15.0;
};

int cmd_track(const Common& c, const TrackArgs& a) {
  const auto cfg = engine_config(c.config);
  auto in = detail::open_input(a.input);
  auto frames = read_detections_csv(in, a.frame_rate);
  if (!a.calibration.empty()) {
    const auto cal = load_calibration(a.calibration);
    for (auto& f : frames)
      for (auto& d : f.detections) d.pos = cal.to_ground({d.pos.x, d.pos.y});
  }
  Tracker tracker(cfg.tracker);
  DaySession session = DaySession::open(parse_date_arg(a.date));
  auto collect = [&] {
    for (auto& t : tracker.take_retired()) {
      SessionTrack st{t.id, {}};
      for (const auto& p : t.points) st.points.push_back({p.t + a.day_start, p.p});
      for (const auto& p : st.points)
        if (p.t < 0.0 || p.t >= kSecondsPerDay)
          throw Error(ErrorCode::InvalidArgument, "track time outside the session date; adjust --day-start");
      session.tracks.push_back(std::move(st));
    }
  };
  for (const auto& f : frames) {
    tracker.step(f.detections, f.t);
    collect();
  }
  tracker.flush();
  collect();

  const std::string format = format_or(c, "xml");
  if (format != "xml" && format != "csv") throw UsageError("track writes xml or csv");
  if (c.out.empty() && format == "xml") {
    const fs::path path = data_dir() / ("session-" + to_string(session.date) + ".xml");
    fs::create_directories(path.parent_path());
    save_session(path, session);
    std::cout << "wrote " << path.string() << '\n';
  } else if (format == "xml" && !c.out.empty()) {
    save_session(c.out, session);
  } else {
    Output out(c.out);
    write_session_csv(out.stream(), session);
  }
  std::cerr << "tracks: " << session.tracks.size() << '\n';
  return 0;
}

// ---- features ---------------------------------------------------------------

int cmd_features(const Common& c, const std::string& input) {
  const auto cfg = engine_config(c.config);
  if (!c.format.empty() && c.format != "csv") throw UsageError("features writes csv");
  const auto tracks = load_tracks(input);
  Output out(c.out);
  auto& os = out.stream();
  os << "id,nPoints,dFit,dist,cRect,cMain,label\n";
  for (const auto& t : tracks) {
    if (t.points.size() < 2) {
      std::cerr << "skipping track " << t.id << ": fewer than two points\n";
      continue;
    }
    const auto f = compute_features(t.points, cfg.features);
    os << t.id << ',' << f.n_points << ',' << fmt(f.d_fit, 6) << ',' << fmt(f.dist, 6) << ',' << fmt(f.c_rect, 6)
       << ',' << fmt(f.c_main, 6) << ',' << to_string(classify_rules(f, cfg.rules)) << '\n';
  }
  return 0;
}

// ---- train / score ----------------------------------------------------------

NormalityModel model_or_fresh(const std::string& path, const PipelineConfig& cfg) {
  return path.empty() ? cfg.make_model() : load_model(path);
}

int cmd_train(const Common& c, const std::string& input, const std::string& base) {
  if (c.out.empty()) throw UsageError("train needs --out MODEL.atrm");
  const auto cfg = engine_config(c.config);
  auto model = model_or_fresh(base, cfg);
  std::size_t trained = 0;
  for (const auto& t : load_tracks(input)) {
    if (trajectory_steps(t.points).size() < cfg.min_steps) continue;
    model.train(t.points);
    ++trained;
  }
  save_model(c.out, model);
  std::cout << "trained on " << trained << " trajectories; ring holds " << model.ring.size() << "; total mass "
            << fmt(model.array.total(), 6) << '\n';
  return 0;
}

int cmd_score(const Common& c, const std::string& input, const std::string& model_path,
              std::optional<double> threshold) {
  const auto cfg = engine_config(c.config);
  if (model_path.empty()) throw UsageError("score needs --model MODEL.atrm");
  const auto model = load_model(model_path);
  const auto tracks = load_tracks(input);
  std::vector<std::optional<double>> scores;
  std::vector<std::size_t> steps;
  std::vector<double> values;
  for (const auto& t : tracks) {
    const auto s = trajectory_steps(t.points);
    steps.push_back(s.size());
    if (s.empty()) {
      scores.emplace_back();
      continue;
    }
    scores.emplace_back(model.array.trajectory_normality(s));
    values.push_back(*scores.back());
  }
  if (!threshold && values.size() >= 10) threshold = detect_threshold(values, cfg.target_fraction);
  Output out(c.out);
  auto& os = out.stream();
  os << "track_id,steps,normality,label\n";
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    os << tracks[i].id << ',' << steps[i] << ',';
    if (scores[i]) os << exact(*scores[i]);
    os << ',';
    if (scores[i] && threshold) os << (is_atypical(*scores[i], *threshold) ? "atypical" : "normal");
    os << '\n';
  }
  if (threshold) std::cerr << "threshold: " << exact(*threshold) << '\n';
  return 0;
}

// ---- threshold --------------------------------------------------------------

// One value per line, or a CSV with a `normality` column.
std::vector<double> read_values(std::istream& in) {
  std::vector<double> values;
  std::string line;
  std::optional<std::size_t> column;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::strip_cr(line);
    if (line.empty() || line[0] == '#') continue;
    const auto cells = detail::split_csv_line(line);
    if (line_no == 1 && cells.size() > 1) {
      const auto it = std::find(cells.begin(), cells.end(), "normality");
      if (it == cells.end()) throw Error(ErrorCode::MalformedFile, "CSV input needs a 'normality' column");
      column = static_cast<std::size_t>(it - cells.begin());
      continue;
    }
    if (line_no == 1 && line == "normality") continue;
    const std::size_t k = column.value_or(0);
    if (k >= cells.size()) throw Error(ErrorCode::MalformedFile, "line " + std::to_string(line_no) + ": missing value");
    if (cells[k].empty()) continue;  // unscored trajectory
    values.push_back(detail::csv_number(cells[k], line_no));
  }
  return values;
}

int cmd_threshold(const Common& c, const std::string& input, double target) {
  std::vector<double> values;
  if (input.empty() || input == "-") {
    values = read_values(std::cin);
  } else {
    auto in = detail::open_input(input);
    values = read_values(in);
  }
  const auto r = detect_threshold_detailed(values, target);
  Output out(c.out);
  out.stream() << fmt(r.threshold, 9) << ' ' << (r.from_gap ? "histogram-gap" : "quantile") << '\n';
  return 0;
}

// ---- render -----------------------------------------------------------------

struct RenderArgs {
  std::string input;
  std::string model;
  std::optional<double> at;
  int frames = 1;
  int width = 1920;
  int height = 1080;
  std::optional<double> threshold;
};

int cmd_render(const Common& c, const RenderArgs& a) {
  if (!c.format.empty() && c.format != "png") throw UsageError("render writes png");
  if (c.out.empty()) throw UsageError("render needs --out PATH (a .png file, or a directory with --frames)");
  if (a.frames < 1) throw UsageError("--frames must be >= 1");
  const auto cfg = engine_config(c.config);
  const DaySession session = load_session(a.input);
  RenderOptions ro;
  ro.bounds = cfg.tracker.bounds;
  if (!a.model.empty()) {
    const auto model = load_model(a.model);
    std::map<int, double> scores;
    std::vector<double> values;
    for (const auto& t : session.tracks) {
      const auto s = trajectory_steps(t.points);
      if (s.size() < cfg.min_steps) continue;
      scores[t.id] = model.array.trajectory_normality(s);
      values.push_back(scores[t.id]);
    }
    std::optional<double> theta = a.threshold;
    if (!theta && values.size() >= 10) theta = detect_threshold(values, cfg.target_fraction);
    if (theta)
      for (const auto& [id, v] : scores) ro.atypical[id] = is_atypical(v, *theta);
  }
  double first = 0.0, last = 0.0;
  bool any = false;
  for (const auto& t : session.tracks) {
    if (t.points.empty()) continue;
    first = any ? std::min(first, t.points.front().t) : t.points.front().t;
    last = any ? std::max(last, t.points.back().t) : t.points.back().t;
    any = true;
  }
  if (a.frames == 1) {
    write_png_file(c.out, render_frame(session, {}, a.at.value_or(last), a.width, a.height, ro));
    std::cout << "wrote " << c.out << '\n';
    return 0;
  }
  fs::create_directories(c.out);
  for (int k = 0; k < a.frames; ++k) {
    const double now = first + (last - first) * k / (a.frames - 1);
    // Only tracks already started by `now`, clipped at it.
    DaySession partial = session;
    partial.tracks.clear();
    for (const auto& t : session.tracks) {
      SessionTrack st{t.id, {}};
      for (const auto& p : t.points)
        if (p.t <= now) st.points.push_back(p);
      if (!st.points.empty()) partial.tracks.push_back(std::move(st));
    }
    char name[32];
    std::snprintf(name, sizeof name, "frame-%05d.png", k);
    write_png_file(fs::path(c.out) / name, render_frame(partial, {}, now, a.width, a.height, ro));
  }
  std::cout << "wrote " << a.frames << " frames to " << c.out << '\n';
  return 0;
}

// ---- serve ------------------------------------------------------------------

std::atomic<bool> g_stop{false};
extern "C" void on_signal(int) { g_stop = true; }

struct ServeArgs {
  int port = 8080;
  std::string host = "127.0.0.1";
  std::string model;
  std::string ui_dir;
  std::optional<double> threshold;
};

int cmd_serve(const Common& c, const ServeArgs& a) {
  LiveConfig lc;
  lc.pipeline = engine_config(c.config);
  lc.frame_rate = 15.0;
  lc.threshold = a.threshold;
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm local{};
  localtime_r(&tt, &local);
  lc.day_offset = local.tm_hour * 3600.0 + local.tm_min * 60.0 + local.tm_sec;
  auto model = a.model.empty() ? lc.pipeline.make_model() : load_model(a.model);
  const fs::path dir = c.out.empty() ? data_dir() : fs::path(c.out);
  LiveEngine engine(lc, std::move(model), DaySession::open(local_date(now)));

  ServerOptions so;
  so.host = a.host;
  so.port = a.port;
  so.data_dir = dir;
  if (!a.ui_dir.empty()) {
    if (!fs::is_directory(a.ui_dir)) throw Error(ErrorCode::InvalidArgument, "--ui-dir is not a directory");
    so.ui_dir = a.ui_dir;
  }
  LiveServer server(engine, so);
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  server.start_engine();
  bool ok = true;
  std::thread http([&] { ok = server.listen(); g_stop = true; });
  std::cout << "serving on http://" << a.host << ':' << a.port << " (sessions in " << dir.string() << ")" << std::endl;
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
  http.join();
  if (!ok) throw Error(ErrorCode::InvalidArgument, "cannot listen on " + a.host + ":" + std::to_string(a.port));
  return 0;
}

// ---- replay -----------------------------------------------------------------

struct ReplayArgs {
  std::string engine;
  std::string date;
  int days = 1;
  double day_start = 8.0 * 3600.0;
  int width = 960;
  int height = 540;
};

int cmd_replay(const Common& c, const ReplayArgs& a) {
  if (c.config.empty()) throw UsageError("replay needs --config SCENARIO.json");
  if (!c.format.empty() && c.format != "csv") throw UsageError("replay writes csv reports");
  auto scenario = scenario_from_json(load_json_file(c.config));
  if (c.seed_given) scenario.set_seed(c.seed);
  auto cfg = engine_config(a.engine);
  const fs::path dir = c.out.empty() ? data_dir() : fs::path(c.out);
  fs::create_directories(dir);

  ReplayOptions ro;
  ro.start = a.date.empty() ? ro.start : parse_date(a.date);
  ro.days = a.days;
  ro.day_start = a.day_start;
  ro.width = a.width;
  ro.height = a.height;
  SessionStore store(dir);
  NormalityModel last_model;
  replay_days(cfg, scenario, ro, [&](const DayReplay& day) {
    const std::string tag = to_string(day.session.date);
    store.daily_reset(day.session.date);
    for (const auto& t : day.session.tracks) store.add_track(t);
    store.flush();
    {
      auto out = detail::open_output(dir / ("report-" + tag + ".csv"));
      write_report_csv(out, day.report);
    }
    std::ostringstream summary;
    write_report_summary(summary, day.report);
    {
      auto out = detail::open_output(dir / ("summary-" + tag + ".txt"));
      out << summary.str();
    }
    if (day.frame) write_png_file(dir / ("day-" + tag + ".png"), *day.frame);
    std::cout << "== " << tag << " (foreground " << to_hex(day.session.foreground) << ", background "
              << to_hex(day.session.background) << ", width " << fmt(day.session.line_width, 1) << ")\n"
              << summary.str();
  });
  return 0;
}

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::MalformedFile:
    case ErrorCode::SchemaVersionMismatch:
    case ErrorCode::ConfigError:
    case ErrorCode::InvalidArgument:
    case ErrorCode::TooFewValues:
    case ErrorCode::NonMonotonicTime:
    case ErrorCode::UnsupportedGlyph:
      return kExitInput;
    default:
      return kExitRuntime;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"atrium: trajectory tracking and normality scoring"};
  app.require_subcommand(1);
  app.footer("Exit codes: 1 usage, 2 bad input, 3 runtime failure.\n"
             "ATRIUM_DATA_DIR sets the default session directory.");

  Common common;

  auto* simulate = app.add_subcommand("simulate", "simulate a scenario into detections.csv and truth.csv");
  add_common(simulate, common, "scenario JSON file", "csv");

  TrackArgs track_args;
  auto* track = app.add_subcommand("track", "track a detections CSV into a day session");
  add_common(track, common, "engine JSON file", "xml|csv");
  track->add_option("--input,input", track_args.input, "detections CSV (t,x,y,size)")->required();
  track->add_option("--calibration", track_args.calibration,
                    "camera profile; the input x,y are then image pixels");
  track->add_option("--date", track_args.date, "session date YYYY-MM-DD (default today)");
  track->add_option("--day-start", track_args.day_start, "seconds after midnight of input time 0");
  track->add_option("--frame-rate", track_args.frame_rate, "input frame rate (Hz)");

  std::string features_input;
  auto* features = app.add_subcommand("features", "per-trajectory descriptors as CSV");
  add_common(features, common, "engine JSON file", "csv");
  features->add_option("--input,input", features_input, "session XML or track_id,t,x,y CSV")->required();

  std::string train_input, train_base;
  auto* train = app.add_subcommand("train", "train a model snapshot on trajectories");
  add_common(train, common, "engine JSON file", "");
  train->add_option("--input,input", train_input, "session XML or track_id,t,x,y CSV")->required();
  train->add_option("--model", train_base, "model to continue from (default: empty model)");

  std::string score_input, score_model;
  std::optional<double> score_threshold;
  auto* score = app.add_subcommand("score", "score trajectories against a model snapshot");
  add_common(score, common, "engine JSON file", "csv");
  score->add_option("--input,input", score_input, "session XML or track_id,t,x,y CSV")->required();
  score->add_option("--model", score_model, "model snapshot (.atrm)")->required();
  score->add_option("--threshold", score_threshold, "fixed threshold (default: detected)");

  std::string threshold_input;
  double threshold_target = 0.10;
  auto* threshold = app.add_subcommand("threshold", "detect the classification threshold of normality values");
  add_common(threshold, common, "unused", "");
  threshold->add_option("--input,input", threshold_input, "values, one per line or a CSV with a normality column");
  threshold->add_option("--target", threshold_target, "target atypical fraction")->check(CLI::Range(0.0, 1.0));

  RenderArgs render_args;
  auto* render = app.add_subcommand("render", "render a day session to PNG");
  add_common(render, common, "engine JSON file (scene bounds)", "png");
  render->add_option("--input,input", render_args.input, "session XML")->required();
  render->add_option("--model", render_args.model, "model snapshot; atypical tracks are drawn in red");
  render->add_option("--threshold", render_args.threshold, "fixed threshold for the overlay");
  render->add_option("--at", render_args.at, "render time, s after midnight (default: last point)");
  render->add_option("--frames", render_args.frames, "number of frames; > 1 writes a sequence into --out");
  render->add_option("--width", render_args.width, "canvas width (px)");
  render->add_option("--height", render_args.height, "canvas height (px)");

  ServeArgs serve_args;
  auto* serve = app.add_subcommand("serve", "run the live HTTP service");
  add_common(serve, common, "engine JSON file", "");
  serve->add_option("--port", serve_args.port, "TCP port");
  serve->add_option("--host", serve_args.host, "bind address");
  serve->add_option("--model", serve_args.model, "initial model snapshot");
  serve->add_option("--threshold", serve_args.threshold, "fixed threshold (default: detected)");
  serve->add_option("--ui-dir", serve_args.ui_dir, "static files served at /");

  ReplayArgs replay_args;
  auto* replay = app.add_subcommand("replay", "simulate, track, score and render whole days");
  add_common(replay, common, "scenario JSON file", "csv");
  replay->add_option("--engine", replay_args.engine, "engine JSON file");
  replay->add_option("--date", replay_args.date, "first day YYYY-MM-DD");
  replay->add_option("--days", replay_args.days, "number of consecutive days")->check(CLI::PositiveNumber);
  replay->add_option("--day-start", replay_args.day_start, "simulated opening time, s after midnight");
  replay->add_option("--width", replay_args.width, "end-of-day still width (px)");
  replay->add_option("--height", replay_args.height, "end-of-day still height (px)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  for (auto* sub : app.get_subcommands()) common.seed_given = sub->count("--seed") > 0;

  try {
    if (simulate->parsed()) return cmd_simulate(common);
    if (track->parsed()) return cmd_track(common, track_args);
    if (features->parsed()) return cmd_features(common, features_input);
    if (train->parsed()) return cmd_train(common, train_input, train_base);
    if (score->parsed()) return cmd_score(common, score_input, score_model, score_threshold);
    if (threshold->parsed()) return cmd_threshold(common, threshold_input, threshold_target);
    if (render->parsed()) return cmd_render(common, render_args);
    if (serve->parsed()) return cmd_serve(common, serve_args);
    if (replay->parsed()) return cmd_replay(common, replay_args);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
