#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "atrium/error.hpp"
#include "atrium/pipeline.hpp"
#include "atrium/simulator.hpp"
#include "atrium/storage.hpp"

namespace atrium {

using Json = nlohmann::json;

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

inline double csv_number(const std::string& s, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::MalformedFile, "line " + std::to_string(line) + ": bad number '" + s + "'");
  }
}

inline void expect_header(std::istream& in, const std::string& header, std::size_t& line_no) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::MalformedFile, "missing CSV header '" + header + "'");
  ++line_no;
  if (strip_cr(line) != header) throw Error(ErrorCode::MalformedFile, "expected CSV header '" + header + "'");
}

inline std::ifstream open_input(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::MalformedFile, "cannot open " + p.string());
  return in;
}

inline std::ofstream open_output(const std::filesystem::path& p) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::MalformedFile, "cannot write " + p.string());
  return out;
}

}  // namespace detail

// ---- detections -----------------------------------------------------------

inline void write_detections_csv(std::ostream& out, std::span<const Frame> frames) {
  out << "t,x,y,size\n";
  for (const auto& f : frames)
    for (const auto& d : f.detections)
      out << detail::num(f.t, 6) << ',' << detail::num(d.pos.x) << ',' << detail::num(d.pos.y) << ','
          << detail::num(d.size) << '\n';
}

/// Rows are grouped into frames on the `frame_rate` grid; frames without
/// any row between the first and last one are restored as empty frames so
/// the tracker sees every miss.
inline std::vector<Frame> read_detections_csv(std::istream& in, double frame_rate) {
  if (!(frame_rate > 0.0)) throw Error(ErrorCode::ConfigError, "frame_rate must be positive");
  std::size_t line_no = 0;
  detail::expect_header(in, "t,x,y,size", line_no);
  std::map<long long, Frame> frames;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != 4)
      throw Error(ErrorCode::MalformedFile, "line " + std::to_string(line_no) + ": expected 4 columns");
    Detection d;
    d.t = detail::csv_number(cells[0], line_no);
    d.pos = {detail::csv_number(cells[1], line_no), detail::csv_number(cells[2], line_no)};
    d.size = detail::csv_number(cells[3], line_no);
    const long long k = std::llround(d.t * frame_rate);
    auto& f = frames[k];
    f.t = static_cast<double>(k) / frame_rate;
    d.t = f.t;
    f.detections.push_back(d);
  }
  std::vector<Frame> out;
  if (frames.empty()) return out;
  for (long long k = frames.begin()->first; k <= frames.rbegin()->first; ++k) {
    const auto it = frames.find(k);
    out.push_back(it != frames.end() ? std::move(it->second) : Frame{static_cast<double>(k) / frame_rate, {}});
  }
  return out;
}

// ---- truth ------------------------------------------------------------------

inline void write_truth_csv(std::ostream& out, std::span<const TruthTrajectory> truth) {
  out << "agent_id,kind,label,t,x,y\n";
  for (const auto& tt : truth)
    for (const auto& p : tt.points)
      out << tt.agent_id << ',' << to_string(tt.kind) << ',' << to_string(tt.label) << ',' << detail::num(p.t, 6) << ','
          << detail::num(p.p.x) << ',' << detail::num(p.p.y) << '\n';
}

inline std::vector<TruthTrajectory> read_truth_csv(std::istream& in) {
  std::size_t line_no = 0;
  detail::expect_header(in, "agent_id,kind,label,t,x,y", line_no);
  std::map<int, TruthTrajectory> by_id;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != 6)
      throw Error(ErrorCode::MalformedFile, "line " + std::to_string(line_no) + ": expected 6 columns");
    const int id = static_cast<int>(detail::csv_number(cells[0], line_no));
    auto& tt = by_id[id];
    tt.agent_id = id;
    try {
      tt.kind = agent_kind_from_string(cells[1]);
    } catch (const Error&) {
      throw Error(ErrorCode::MalformedFile, "line " + std::to_string(line_no) + ": unknown kind '" + cells[1] + "'");
    }
    tt.label = truth_label(tt.kind);
    tt.points.push_back({detail::csv_number(cells[3], line_no),
                         {detail::csv_number(cells[4], line_no), detail::csv_number(cells[5], line_no)}});
  }
  std::vector<TruthTrajectory> out;
  for (auto& [id, tt] : by_id) out.push_back(std::move(tt));
  return out;
}

/// Trajectory CSV used by `score`/`train`: header `track_id,t,x,y`, the
/// same layout as the session CSV export.
inline std::map<int, Trajectory> read_trajectories_csv(std::istream& in) {
  std::size_t line_no = 0;
  detail::expect_header(in, "track_id,t,x,y", line_no);
  std::map<int, Trajectory> out;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != 4)
      throw Error(ErrorCode::MalformedFile, "line " + std::to_string(line_no) + ": expected 4 columns");
    const int id = static_cast<int>(detail::csv_number(cells[0], line_no));
    out[id].push_back({detail::csv_number(cells[1], line_no),
                       {detail::csv_number(cells[2], line_no), detail::csv_number(cells[3], line_no)}});
  }
  return out;
}

// ---- JSON configs -----------------------------------------------------------

namespace detail {

inline void check_keys(const Json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw Error(ErrorCode::ConfigError, where + ": unknown key '" + key + "'");
  }
}

template <class T>
void read_opt(const Json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, where + "." + key + ": " + e.what());
  }
}

inline GroundPoint point_from_json(const Json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw Error(ErrorCode::ConfigError, where + ": expected [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

inline Json point_to_json(const GroundPoint& p) { return Json::array({p.x, p.y}); }

inline Bounds bounds_from_json(const Json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 4) throw Error(ErrorCode::ConfigError, where + ": expected [x_min, y_min, x_max, y_max]");
  try {
    return {.x_min = j[0].get<double>(), .x_max = j[2].get<double>(), .y_min = j[1].get<double>(), .y_max = j[3].get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, where + ": " + e.what());
  }
}

}  // namespace detail

inline SceneConfig scene_from_json(const Json& j) {
  const std::string w = "scene";
  detail::check_keys(j, w, {"bounds", "doors", "frame_rate", "detection_noise_sigma", "dropout_prob", "merge_distance",
                            "person_size", "sway_amplitude", "sway_frequency"});
  SceneConfig s;
  if (j.contains("bounds")) s.bounds = detail::bounds_from_json(j["bounds"], w + ".bounds");
  if (j.contains("doors")) {
    s.doors.clear();
    for (const auto& d : j["doors"]) s.doors.push_back(detail::point_from_json(d, w + ".doors"));
  }
  detail::read_opt(j, "frame_rate", s.frame_rate, w);
  detail::read_opt(j, "detection_noise_sigma", s.detection_noise_sigma, w);
  detail::read_opt(j, "dropout_prob", s.dropout_prob, w);
  detail::read_opt(j, "merge_distance", s.merge_distance, w);
  detail::read_opt(j, "person_size", s.person_size, w);
  detail::read_opt(j, "sway_amplitude", s.sway_amplitude, w);
  detail::read_opt(j, "sway_frequency", s.sway_frequency, w);
  s.validate();
  return s;
}

inline PopulationSpec population_from_json(const Json& j, const std::string& w = "population") {
  detail::check_keys(j, w, {"walkers", "scribblers", "loiterers", "runners", "spawn_window", "texts", "walker_speed",
                            "runner_speed", "loiterer_speed", "scribbler_speed", "scribble_scale"});
  PopulationSpec p;
  detail::read_opt(j, "walkers", p.walkers, w);
  detail::read_opt(j, "scribblers", p.scribblers, w);
  detail::read_opt(j, "loiterers", p.loiterers, w);
  detail::read_opt(j, "runners", p.runners, w);
  detail::read_opt(j, "spawn_window", p.spawn_window, w);
  detail::read_opt(j, "texts", p.texts, w);
  detail::read_opt(j, "walker_speed", p.walker_speed, w);
  detail::read_opt(j, "runner_speed", p.runner_speed, w);
  detail::read_opt(j, "loiterer_speed", p.loiterer_speed, w);
  detail::read_opt(j, "scribbler_speed", p.scribbler_speed, w);
  detail::read_opt(j, "scribble_scale", p.scribble_scale, w);
  for (const auto* r : {&p.walker_speed, &p.runner_speed, &p.loiterer_speed, &p.scribbler_speed, &p.scribble_scale})
    if (!((*r)[0] > 0.0 && (*r)[0] <= (*r)[1])) throw Error(ErrorCode::ConfigError, w + ": ranges need 0 < lo <= hi");
  if (p.texts.empty()) throw Error(ErrorCode::ConfigError, w + ".texts must not be empty");
  return p;
}

inline AgentScript agent_from_json(const Json& j, const std::string& w) {
  detail::check_keys(j, w, {"kind", "waypoints", "speed", "spawn", "text", "origin", "scale", "dwell"});
  AgentScript a;
  std::string kind = "walker";
  detail::read_opt(j, "kind", kind, w);
  a.kind = agent_kind_from_string(kind);
  if (!j.contains("waypoints")) throw Error(ErrorCode::ConfigError, w + ": missing waypoints");
  for (const auto& p : j["waypoints"]) a.waypoints.push_back(detail::point_from_json(p, w + ".waypoints"));
  detail::read_opt(j, "speed", a.speed, w);
  detail::read_opt(j, "spawn", a.spawn, w);
  detail::read_opt(j, "text", a.text, w);
  if (j.contains("origin")) a.origin = detail::point_from_json(j["origin"], w + ".origin");
  detail::read_opt(j, "scale", a.scale, w);
  detail::read_opt(j, "dwell", a.dwell, w);
  if (!(a.speed > 0.0)) throw Error(ErrorCode::ConfigError, w + ".speed must be positive");
  if (a.kind == AgentKind::Scribbler && a.text.empty()) throw Error(ErrorCode::ConfigError, w + ": scribbler needs text");
  return a;
}

/// Warm-up run used to pretrain the model before the evaluated scenario.
struct WarmupSpec {
  PopulationSpec population;
  double duration = 600.0;
  std::uint64_t seed = 0;
};

struct Scenario {
  SceneConfig scene;
  PopulationSpec population;
  std::vector<AgentScript> agents;  // explicit scripts, added to the generated population
  double duration = 600.0;
  std::uint64_t seed = 1;
  std::optional<WarmupSpec> warmup;

  void set_seed(std::uint64_t s) {
    seed = s;
    scene.seed = s;
    population.seed = s * 2 + 1;
    if (warmup) warmup->seed = s + 1000;
  }

  std::vector<AgentScript> all_agents() const {
    auto out = agents;
    auto gen = generate_population(scene, population);
    out.insert(out.end(), gen.begin(), gen.end());
    return out;
  }

  Simulation simulate() const { return generate(scene, all_agents(), duration); }

  std::optional<Simulation> simulate_warmup() const {
    if (!warmup) return std::nullopt;
    SceneConfig sc = scene;
    sc.seed = warmup->seed;
    PopulationSpec pop = warmup->population;
    pop.seed = warmup->seed * 2 + 1;
    return generate(sc, generate_population(sc, pop), warmup->duration);
  }
};

inline Scenario scenario_from_json(const Json& j) {
  detail::check_keys(j, "scenario", {"seed", "duration", "scene", "population", "agents", "warmup"});
  Scenario s;
  if (j.contains("scene")) s.scene = scene_from_json(j["scene"]);
  if (j.contains("population")) s.population = population_from_json(j["population"]);
  detail::read_opt(j, "duration", s.duration, "scenario");
  if (!(s.duration > 0.0)) throw Error(ErrorCode::ConfigError, "scenario.duration must be positive");
  if (j.contains("agents")) {
    for (std::size_t i = 0; i < j["agents"].size(); ++i)
      s.agents.push_back(agent_from_json(j["agents"][i], "agents[" + std::to_string(i) + "]"));
  }
  if (j.contains("warmup")) {
    const auto& wj = j["warmup"];
    detail::check_keys(wj, "warmup", {"duration", "population"});
    WarmupSpec w;
    detail::read_opt(wj, "duration", w.duration, "warmup");
    if (wj.contains("population")) w.population = population_from_json(wj["population"], "warmup.population");
    s.warmup = w;
  }
  std::uint64_t seed = 1;
  detail::read_opt(j, "seed", seed, "scenario");
  s.set_seed(seed);
  return s;
}

inline TrackerConfig tracker_from_json(const Json& j) {
  const std::string w = "tracker";
  detail::check_keys(j, w, {"init_hits", "max_misses", "v_max", "gate_radius", "reconnect_radius", "reconnect_window",
                            "exit_margin", "mask", "bounds", "min_size", "max_size", "process_noise", "measurement_noise",
                            "initial_speed_sigma"});
  TrackerConfig c;
  detail::read_opt(j, "init_hits", c.init_hits, w);
  detail::read_opt(j, "max_misses", c.max_misses, w);
  detail::read_opt(j, "v_max", c.v_max, w);
  detail::read_opt(j, "gate_radius", c.gate_radius, w);
  detail::read_opt(j, "reconnect_radius", c.reconnect_radius, w);
  detail::read_opt(j, "reconnect_window", c.reconnect_window, w);
  detail::read_opt(j, "exit_margin", c.exit_margin, w);
  if (j.contains("mask")) {
    for (const auto& poly : j["mask"]) {
      Polygon p;
      for (const auto& v : poly) p.vertices.push_back(detail::point_from_json(v, w + ".mask"));
      if (p.vertices.size() < 3) throw Error(ErrorCode::ConfigError, w + ".mask polygons need >= 3 vertices");
      c.mask.push_back(std::move(p));
    }
  }
  if (j.contains("bounds")) c.bounds = detail::bounds_from_json(j["bounds"], w + ".bounds");
  detail::read_opt(j, "min_size", c.min_size, w);
  detail::read_opt(j, "max_size", c.max_size, w);
  detail::read_opt(j, "process_noise", c.process_noise, w);
  detail::read_opt(j, "measurement_noise", c.measurement_noise, w);
  detail::read_opt(j, "initial_speed_sigma", c.initial_speed_sigma, w);
  c.validate();
  return c;
}

inline PipelineConfig engine_config_from_json(const Json& j) {
  detail::check_keys(j, "engine", {"tracker", "grid", "normality", "ring_capacity", "fit_degree", "rules",
                                   "target_fraction", "min_steps", "provisional_period"});
  PipelineConfig c;
  if (j.contains("tracker")) c.tracker = tracker_from_json(j["tracker"]);
  if (j.contains("grid")) {
    const auto& g = j["grid"];
    detail::check_keys(g, "grid", {"bounds", "v_max", "dims"});
    if (g.contains("bounds")) {
      const Bounds b = detail::bounds_from_json(g["bounds"], "grid.bounds");
      c.grid.x_min = b.x_min;
      c.grid.y_min = b.y_min;
      c.grid.x_max = b.x_max;
      c.grid.y_max = b.y_max;
    }
    detail::read_opt(g, "v_max", c.grid.v_max, "grid");
    if (g.contains("dims")) {
      std::array<int, 4> d{};
      detail::read_opt(g, "dims", d, "grid");
      c.grid.dims = {d[0], d[1], d[2], d[3]};
    }
  }
  if (j.contains("normality")) {
    const auto& n = j["normality"];
    detail::check_keys(n, "normality", {"sigma", "truncation_radius", "reference_step_length", "normalized"});
    detail::read_opt(n, "sigma", c.normality.sigma, "normality");
    detail::read_opt(n, "truncation_radius", c.normality.truncation_radius, "normality");
    detail::read_opt(n, "reference_step_length", c.normality.reference_step_length, "normality");
    detail::read_opt(n, "normalized", c.normality.normalized, "normality");
  }
  detail::read_opt(j, "ring_capacity", c.ring_capacity, "engine");
  detail::read_opt(j, "fit_degree", c.features.fit_degree, "engine");
  if (j.contains("rules")) {
    const auto& r = j["rules"];
    detail::check_keys(r, "rules", {"d_fit", "tortuosity", "c_main"});
    detail::read_opt(r, "d_fit", c.rules.d_fit, "rules");
    detail::read_opt(r, "tortuosity", c.rules.tortuosity, "rules");
    detail::read_opt(r, "c_main", c.rules.c_main, "rules");
  }
  detail::read_opt(j, "target_fraction", c.target_fraction, "engine");
  detail::read_opt(j, "min_steps", c.min_steps, "engine");
  detail::read_opt(j, "provisional_period", c.provisional_period, "engine");
  try {
    c.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, e.what());
  }
  return c;
}

inline Json load_json_file(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::MalformedFile, path.string() + ": " + e.what());
  }
}

/// Trains a fresh model on a scenario's warm-up population (if any).
inline NormalityModel pretrain_model(const PipelineConfig& cfg, const Scenario& scenario) {
  Pipeline warm(cfg);
  if (const auto sim = scenario.simulate_warmup()) {
    for (const auto& f : sim->frames) warm.process_frame(f.t, f.detections);
    warm.finish();
  }
  return warm.model();
}

}  // namespace atrium
