#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "atrium/simulator.hpp"

using namespace atrium;

namespace {

AgentScript walker(GroundPoint a, GroundPoint b, double speed, double spawn = 0.0) {
  AgentScript s;
  s.kind = AgentKind::Walker;
  s.waypoints = {a, b};
  s.speed = speed;
  s.spawn = spawn;
  return s;
}

bool same_frames(const Simulation& a, const Simulation& b) {
  if (a.frames.size() != b.frames.size()) return false;
  for (std::size_t k = 0; k < a.frames.size(); ++k) {
    const auto& fa = a.frames[k].detections;
    const auto& fb = b.frames[k].detections;
    if (fa.size() != fb.size()) return false;
    for (std::size_t i = 0; i < fa.size(); ++i)
      if (fa[i].pos.x != fb[i].pos.x || fa[i].pos.y != fb[i].pos.y || fa[i].size != fb[i].size) return false;
  }
  return true;
}

}  // namespace

TEST(Simulator, SameSeedSameOutput) {
  SceneConfig scene;
  scene.seed = 11;
  PopulationSpec spec;
  spec.walkers = 20;
  spec.scribblers = 3;
  spec.loiterers = 2;
  spec.runners = 2;
  spec.seed = 5;
  const auto agents = generate_population(scene, spec);
  const auto a = generate(scene, agents, 120);
  const auto b = generate(scene, generate_population(scene, spec), 120);
  EXPECT_TRUE(same_frames(a, b));
  scene.seed = 12;
  EXPECT_FALSE(same_frames(a, generate(scene, agents, 120)));
}

TEST(Simulator, DetectionNoiseHasConfiguredSigma) {
  SceneConfig scene;
  scene.seed = 3;
  scene.detection_noise_sigma = 0.12;
  // a very slow walk gives > 10^4 frames of a single isolated person
  const auto sim = generate(scene, {walker({1, 10}, {19, 10}, 0.02)}, 800);
  const auto& truth = sim.truth[0].points;
  ASSERT_GE(truth.size(), 10000u);
  double sx = 0, sy = 0, sxx = 0, syy = 0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < sim.frames.size(); ++k) {
    ASSERT_EQ(sim.frames[k].detections.size(), 1u);
    const double ex = sim.frames[k].detections[0].pos.x - truth[k].p.x;
    const double ey = sim.frames[k].detections[0].pos.y - truth[k].p.y;
    sx += ex;
    sy += ey;
    sxx += ex * ex;
    syy += ey * ey;
    ++n;
  }
  const double N = static_cast<double>(n);
  const double sdx = std::sqrt(sxx / N - (sx / N) * (sx / N));
  const double sdy = std::sqrt(syy / N - (sy / N) * (sy / N));
  EXPECT_NEAR(sdx, 0.12, 0.05 * 0.12);
  EXPECT_NEAR(sdy, 0.12, 0.05 * 0.12);
}

TEST(Simulator, NearbyPeopleMergeIntoOneBlobAtTheirMidpoint) {
  SceneConfig scene;
  scene.detection_noise_sigma = 0.0;
  scene.sway_amplitude = 0.0;
  scene.merge_distance = 0.4;
  const auto sim = generate(scene, {walker({2, 10}, {18, 10}, 1.0), walker({2, 10.3}, {18, 10.3}, 1.0)}, 5);
  for (const auto& f : sim.frames) {
    ASSERT_EQ(f.detections.size(), 1u);
    EXPECT_NEAR(f.detections[0].pos.y, 10.15, 1e-12);
    EXPECT_NEAR(f.detections[0].size, 2 * scene.person_size, 1e-12);
  }
  // apart they stay separate
  const auto far = generate(scene, {walker({2, 10}, {18, 10}, 1.0), walker({2, 11}, {18, 11}, 1.0)}, 5);
  for (const auto& f : far.frames) EXPECT_EQ(f.detections.size(), 2u);
}

TEST(Simulator, NoiselessWalkerFollowsStraightLineAtSpeed) {
  SceneConfig scene;
  scene.detection_noise_sigma = 0.0;
  scene.sway_amplitude = 0.0;
  const auto sim = generate(scene, {walker({2, 5}, {14, 5}, 1.2, 1.0)}, 20);
  const auto& pts = sim.truth[0].points;
  ASSERT_FALSE(pts.empty());
  EXPECT_GE(pts.front().t, 1.0);
  for (const auto& p : pts) {
    EXPECT_NEAR(p.p.y, 5.0, 1e-12);
    EXPECT_NEAR(p.p.x, std::min(2.0 + 1.2 * (p.t - 1.0), 14.0), 1e-9);
  }
  EXPECT_NEAR(pts.back().p.x, 14.0, 1.2 / 15.0 + 1e-9);
}

TEST(Simulator, TruthLabelsPartitionThePopulation) {
  SceneConfig scene;
  PopulationSpec spec;
  spec.walkers = 25;
  spec.scribblers = 4;
  spec.loiterers = 3;
  spec.runners = 2;
  spec.spawn_window = 50;
  const auto agents = generate_population(scene, spec);
  ASSERT_EQ(agents.size(), 34u);
  const auto sim = generate(scene, agents, 200);
  std::set<int> ids;
  int normal = 0, atypical = 0;
  for (const auto& t : sim.truth) {
    EXPECT_TRUE(ids.insert(t.agent_id).second);
    EXPECT_EQ(t.label, t.kind == AgentKind::Walker ? Label::Normal : Label::Atypical);
    (t.label == Label::Normal ? normal : atypical)++;
  }
  EXPECT_EQ(normal, 25);
  EXPECT_EQ(atypical, 9);
  for (std::size_t i = 1; i < agents.size(); ++i) EXPECT_LE(agents[i - 1].spawn, agents[i].spawn);
}

TEST(Scribble, StrokeLengthIsScaledFontSum) {
  const auto& font = stroke_font();
  for (const std::string text : {"HELLO", "ART", "xo", "WAVE 2"}) {
    double expected = 0;
    for (char c : text) expected += font.at(static_cast<char>(std::toupper(static_cast<unsigned char>(c)))).stroke_length();
    const double scale = 1.7;
    const auto s = scribble_path(text, {3, 4}, scale);
    EXPECT_NEAR(s.stroke_length(), scale * expected, 1e-9) << text;
    double walked = 0;
    for (std::size_t i = 1; i < s.path.size(); ++i) walked += distance(s.path[i - 1], s.path[i]);
    EXPECT_GE(walked, s.stroke_length() - 1e-9);
  }
}

TEST(Scribble, LayoutStaysOnBaselineBox) {
  const auto s = scribble_path("HI", {5, 6}, 2.0);
  for (const auto& p : s.path) {
    EXPECT_GE(p.x, 5.0 - 1e-12);
    EXPECT_GE(p.y, 6.0 - 1e-12);
    EXPECT_LE(p.y, 8.0 + 1e-12);
  }
}

TEST(Scribble, UnsupportedGlyphAndEmptyText) {
  EXPECT_THROW(scribble_path("A~B", {0, 0}, 1.0), Error);
  try {
    scribble_path("\x7f", {0, 0}, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnsupportedGlyph);
  }
  EXPECT_THROW(scribble_path("", {0, 0}, 1.0), Error);
}

TEST(Scribble, ScribblerWalksThroughTheText) {
  SceneConfig scene;
  scene.detection_noise_sigma = 0.0;
  scene.sway_amplitude = 0.0;
  AgentScript a;
  a.kind = AgentKind::Scribbler;
  a.waypoints = {{10, 0.5}, {10, 19.5}};
  a.text = "HI";
  a.origin = {6, 8};
  a.scale = 2.0;
  a.speed = 0.6;
  const auto sim = generate(scene, {a}, 600);
  const auto& pts = sim.truth[0].points;
  ASSERT_GT(pts.size(), 10u);
  EXPECT_NEAR(pts.back().p.y, 19.5, 0.6 / 15.0 + 1e-9);
  bool visited_text = false;
  for (const auto& p : pts) visited_text = visited_text || (p.p.x < 7.0 && p.p.y > 8.0 && p.p.y < 10.0);
  EXPECT_TRUE(visited_text);
}
