#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "atrium/error.hpp"
#include "atrium/features.hpp"
#include "atrium/font.hpp"
#include "atrium/tracking.hpp"

namespace atrium {

struct SceneConfig {
  Bounds bounds;
  std::vector<GroundPoint> doors{{10.0, 0.5}, {10.0, 19.5}, {0.5, 10.0}, {19.5, 10.0}};
  double frame_rate = 15.0;
  double detection_noise_sigma = 0.12;  // m, per axis
  double dropout_prob = 0.0;
  double merge_distance = 0.4;  // m
  double person_size = 0.25;    // m^2 blob extent of one person
  double sway_amplitude = 0.1;  // m, lateral gait sway
  double sway_frequency = 2.0;  // Hz
  std::uint64_t seed = 1;

  void validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::ConfigError, what); };
    if (!(frame_rate > 0)) fail("frame_rate must be positive");
    if (!(detection_noise_sigma >= 0)) fail("detection noise must be >= 0");
    if (!(dropout_prob >= 0 && dropout_prob <= 1)) fail("dropout_prob must lie in [0, 1]");
    if (!(merge_distance >= 0) || !(person_size >= 0) || !(sway_amplitude >= 0) || !(sway_frequency >= 0))
      fail("scene distances, sizes and sway must be >= 0");
    if (!(bounds.x_max > bounds.x_min) || !(bounds.y_max > bounds.y_min)) fail("empty scene bounds");
  }
};

enum class AgentKind { Walker, Scribbler, Loiterer, Runner };

inline const char* to_string(AgentKind k) {
  switch (k) {
    case AgentKind::Walker: return "walker";
    case AgentKind::Scribbler: return "scribbler";
    case AgentKind::Loiterer: return "loiterer";
    case AgentKind::Runner: return "runner";
  }
  return "?";
}

inline AgentKind agent_kind_from_string(const std::string& s) {
  if (s == "walker") return AgentKind::Walker;
  if (s == "scribbler") return AgentKind::Scribbler;
  if (s == "loiterer") return AgentKind::Loiterer;
  if (s == "runner") return AgentKind::Runner;
  throw Error(ErrorCode::ConfigError, "unknown agent kind '" + s + "'");
}

inline Label truth_label(AgentKind k) { return k == AgentKind::Walker ? Label::Normal : Label::Atypical; }

/// One simulated person.
///
/// Walker and Runner follow `waypoints`. A Scribbler walks from
/// waypoints.front() to `origin`, writes `text` (cap height `scale`), then
/// walks to waypoints.back(). A Loiterer walks to waypoints[1], circles
/// there for `dwell` seconds, then continues.
struct AgentScript {
  AgentKind kind = AgentKind::Walker;
  std::vector<GroundPoint> waypoints;
  double speed = 1.3;  // m/s
  double spawn = 0.0;  // s
  std::string text;
  GroundPoint origin;
  double scale = 1.5;
  double dwell = 0.0;  // s
};

struct TruthTrajectory {
  int agent_id = 0;
  AgentKind kind = AgentKind::Walker;
  Label label = Label::Normal;
  Trajectory points;
};

struct Frame {
  double t = 0.0;
  std::vector<Detection> detections;
};

struct Simulation {
  std::vector<Frame> frames;
  std::vector<TruthTrajectory> truth;
};

namespace detail {

struct Leg {
  GroundPoint from, to;
  double start = 0.0, duration = 0.0;
  bool dwell = false;  // circle around `from` instead of moving
};

struct MotionPlan {
  std::vector<Leg> legs;
  double end = 0.0;
};

inline MotionPlan plan_motion(const AgentScript& a) {
  if (a.waypoints.empty()) throw Error(ErrorCode::ConfigError, "agent needs at least one waypoint");
  if (!(a.speed > 0.0)) throw Error(ErrorCode::ConfigError, "agent speed must be positive");
  std::vector<GroundPoint> route;
  double dwell_after = -1.0;  // route index after which to dwell
  switch (a.kind) {
    case AgentKind::Walker:
    case AgentKind::Runner:
      route = a.waypoints;
      break;
    case AgentKind::Scribbler: {
      route.push_back(a.waypoints.front());
      const auto s = scribble_path(a.text, a.origin, a.scale);
      route.insert(route.end(), s.path.begin(), s.path.end());
      if (a.waypoints.size() > 1) route.push_back(a.waypoints.back());
      break;
    }
    case AgentKind::Loiterer:
      route = a.waypoints;
      if (route.size() < 2) throw Error(ErrorCode::ConfigError, "loiterer needs entry and dwell waypoints");
      dwell_after = 1;
      break;
  }
  MotionPlan plan;
  double t = a.spawn;
  for (std::size_t i = 0; i + 1 < route.size(); ++i) {
    const double len = distance(route[i], route[i + 1]);
    if (len > 0.0) {
      plan.legs.push_back({route[i], route[i + 1], t, len / a.speed, false});
      t += len / a.speed;
    }
    if (static_cast<double>(i + 1) == dwell_after && a.dwell > 0.0) {
      plan.legs.push_back({route[i + 1], route[i + 1], t, a.dwell, true});
      t += a.dwell;
    }
  }
  if (plan.legs.empty()) plan.legs.push_back({route.front(), route.front(), t, 0.0, true});
  plan.end = t;
  return plan;
}

inline GroundPoint position_at(const MotionPlan& plan, double t, const SceneConfig& scene, double phase) {
  const Leg* leg = &plan.legs.back();
  for (const auto& l : plan.legs)
    if (t <= l.start + l.duration) {
      leg = &l;
      break;
    }
  const double tau = std::clamp(t - leg->start, 0.0, leg->duration);
  if (leg->dwell) {
    // Slow circle of radius 0.6 m entered at the dwell point.
    constexpr double kRadius = 0.6, kAngular = 0.5;  // rad/s
    const double a = kAngular * tau;
    return {leg->from.x + kRadius * std::sin(a), leg->from.y + kRadius * (1.0 - std::cos(a))};
  }
  const double f = leg->duration > 0.0 ? tau / leg->duration : 1.0;
  GroundPoint p{leg->from.x + f * (leg->to.x - leg->from.x), leg->from.y + f * (leg->to.y - leg->from.y)};
  if (scene.sway_amplitude > 0.0) {
    const double len = distance(leg->from, leg->to);
    const double nx = -(leg->to.y - leg->from.y) / len;
    const double ny = (leg->to.x - leg->from.x) / len;
    const double s = scene.sway_amplitude * std::sin(2.0 * std::numbers::pi * scene.sway_frequency * t + phase);
    p.x += s * nx;
    p.y += s * ny;
  }
  return p;
}

}  // namespace detail

/// Renders agent scripts into a noisy detection stream plus ground truth.
///
/// Per frame and visible agent: body position (path + lateral sway), then
/// dropout. Agents whose bodies are closer than `merge_distance` (single
/// linkage) fuse into one blob at their mean position whose size is the sum
/// of the member sizes. Gaussian noise is added per detection.
inline Simulation generate(const SceneConfig& scene, const std::vector<AgentScript>& agents, double duration) {
  scene.validate();
  if (!(duration > 0.0)) throw Error(ErrorCode::InvalidArgument, "simulation duration must be positive");
  std::mt19937_64 rng(scene.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<detail::MotionPlan> plans;
  std::vector<double> phase;
  Simulation sim;
  for (std::size_t i = 0; i < agents.size(); ++i) {
    plans.push_back(detail::plan_motion(agents[i]));
    phase.push_back(2.0 * std::numbers::pi * unit(rng));
    sim.truth.push_back({static_cast<int>(i + 1), agents[i].kind, truth_label(agents[i].kind), {}});
  }

  const auto frames = static_cast<long long>(std::ceil(duration * scene.frame_rate));
  for (long long k = 0; k < frames; ++k) {
    const double t = static_cast<double>(k) / scene.frame_rate;
    if (t >= duration) break;
    std::vector<std::size_t> visible;
    std::vector<GroundPoint> body;
    for (std::size_t i = 0; i < agents.size(); ++i) {
      if (t < agents[i].spawn || t > plans[i].end) continue;
      const GroundPoint p = detail::position_at(plans[i], t, scene, phase[i]);
      sim.truth[i].points.push_back({t, p});
      if (scene.dropout_prob > 0.0 && unit(rng) < scene.dropout_prob) continue;
      visible.push_back(i);
      body.push_back(p);
    }
    // Single-linkage blob merging.
    std::vector<std::size_t> parent(visible.size());
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    for (std::size_t a = 0; a < visible.size(); ++a)
      for (std::size_t b = a + 1; b < visible.size(); ++b)
        if (distance(body[a], body[b]) < scene.merge_distance) parent[find(b)] = find(a);

    Frame frame{t, {}};
    for (std::size_t a = 0; a < visible.size(); ++a) {
      if (find(a) != a) continue;
      double sx = 0, sy = 0;
      int n = 0;
      for (std::size_t b = 0; b < visible.size(); ++b)
        if (find(b) == a) {
          sx += body[b].x;
          sy += body[b].y;
          ++n;
        }
      Detection d;
      d.t = t;
      d.pos = {sx / n, sy / n};
      d.size = scene.person_size * n;
      if (scene.detection_noise_sigma > 0.0) {
        d.pos.x += scene.detection_noise_sigma * noise(rng);
        d.pos.y += scene.detection_noise_sigma * noise(rng);
      }
      frame.detections.push_back(d);
    }
    sim.frames.push_back(std::move(frame));
  }
  return sim;
}

/// Random population on the scene's doors.
struct PopulationSpec {
  int walkers = 0;
  int scribblers = 0;
  int loiterers = 0;
  int runners = 0;
  double spawn_window = 600.0;  // s
  // Uniform ranges, m/s and m.
  std::array<double, 2> walker_speed{1.1, 1.5};
  std::array<double, 2> runner_speed{3.0, 4.5};
  std::array<double, 2> loiterer_speed{0.9, 1.2};
  std::array<double, 2> scribbler_speed{0.5, 0.7};
  std::array<double, 2> scribble_scale{1.5, 2.5};
  std::vector<std::string> texts{"HELLO", "ART", "LOVE", "HI", "WAVE", "SMILE", "XO", "MOVE"};
  std::uint64_t seed = 1;
};

inline std::vector<AgentScript> generate_population(const SceneConfig& scene, const PopulationSpec& spec) {
  if (scene.doors.size() < 2) throw Error(ErrorCode::ConfigError, "population needs at least two doors");
  if (spec.walkers < 0 || spec.scribblers < 0 || spec.loiterers < 0 || spec.runners < 0)
    throw Error(ErrorCode::ConfigError, "population counts must be >= 0");
  std::mt19937_64 rng(spec.seed);
  auto uniform = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  auto door_pair = [&] {
    std::uniform_int_distribution<std::size_t> pick(0, scene.doors.size() - 1);
    const std::size_t a = pick(rng);
    std::size_t b = pick(rng);
    while (b == a) b = pick(rng);
    return std::pair{scene.doors[a], scene.doors[b]};
  };
  const Bounds& bb = scene.bounds;
  const double margin = 2.0;
  std::vector<AgentScript> out;
  auto push = [&](AgentKind kind, int count) {
    for (int i = 0; i < count; ++i) {
      AgentScript a;
      a.kind = kind;
      a.spawn = uniform(0.0, spec.spawn_window);
      const auto [entry, exit] = door_pair();
      switch (kind) {
        case AgentKind::Walker:
          a.waypoints = {entry, exit};
          a.speed = uniform(spec.walker_speed[0], spec.walker_speed[1]);
          break;
        case AgentKind::Runner:
          a.waypoints = {entry, exit};
          a.speed = uniform(spec.runner_speed[0], spec.runner_speed[1]);
          break;
        case AgentKind::Loiterer:
          a.waypoints = {entry, {uniform(bb.x_min + margin, bb.x_max - margin), uniform(bb.y_min + margin, bb.y_max - margin)},
                         exit};
          a.speed = uniform(spec.loiterer_speed[0], spec.loiterer_speed[1]);
          a.dwell = uniform(20.0, 60.0);
          break;
        case AgentKind::Scribbler: {
          a.text = spec.texts[std::uniform_int_distribution<std::size_t>(0, spec.texts.size() - 1)(rng)];
          a.scale = uniform(spec.scribble_scale[0], spec.scribble_scale[1]);
          double width = 0.0;
          for (char c : a.text) width += stroke_font().at(static_cast<char>(std::toupper(static_cast<unsigned char>(c)))).advance;
          width *= a.scale;
          const double max_x = std::max(bb.x_min + margin, bb.x_max - margin - width);
          a.origin = {uniform(bb.x_min + margin, max_x), uniform(bb.y_min + margin, bb.y_max - margin - a.scale)};
          a.waypoints = {entry, exit};
          a.speed = uniform(spec.scribbler_speed[0], spec.scribbler_speed[1]);
          break;
        }
      }
      out.push_back(std::move(a));
    }
  };
  push(AgentKind::Walker, spec.walkers);
  push(AgentKind::Scribbler, spec.scribblers);
  push(AgentKind::Loiterer, spec.loiterers);
  push(AgentKind::Runner, spec.runners);
  std::stable_sort(out.begin(), out.end(), [](const AgentScript& a, const AgentScript& b) { return a.spawn < b.spawn; });
  return out;
}

}  // namespace atrium
