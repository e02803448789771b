#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "atrium/error.hpp"
#include "atrium/geometry.hpp"

namespace atrium {

struct FontPoint {
  double x, y;
};

using FontStroke = std::vector<FontPoint>;

/// One glyph of the built-in stroke font: unit cap height, baseline at y = 0.
struct Glyph {
  std::vector<FontStroke> strokes;
  double advance = 0.0;

  double stroke_length() const {
    double len = 0.0;
    for (const auto& s : strokes)
      for (std::size_t i = 1; i < s.size(); ++i) len += std::hypot(s[i].x - s[i - 1].x, s[i].y - s[i - 1].y);
    return len;
  }
};

namespace detail {

inline Glyph make_glyph(std::vector<FontStroke> strokes, double width = -1.0) {
  Glyph g{std::move(strokes), 0.0};
  if (width < 0.0) {
    width = 0.0;
    for (const auto& s : g.strokes)
      for (const auto& p : s) width = std::max(width, p.x);
  }
  g.advance = width + 0.3;
  return g;
}

}  // namespace detail

/// Uppercase letters, digits, space and a few marks, drawn as open or
/// closed polylines (a Hershey-style single-line font).
inline const std::map<char, Glyph>& stroke_font() {
  using detail::make_glyph;
  static const std::map<char, Glyph> font = [] {
    const FontStroke o_loop{{0.3, 1}, {0.05, 0.85}, {0, 0.5}, {0.05, 0.15}, {0.3, 0},
                            {0.55, 0.15}, {0.6, 0.5}, {0.55, 0.85}, {0.3, 1}};
    const FontStroke p_bowl{{0, 0}, {0, 1}, {0.45, 1}, {0.55, 0.9}, {0.55, 0.6}, {0.45, 0.5}, {0, 0.5}};
    std::map<char, Glyph> f;
    f['A'] = make_glyph({{{0, 0}, {0.3, 1}, {0.6, 0}}, {{0.105, 0.35}, {0.495, 0.35}}});
    f['B'] = make_glyph({{{0, 0}, {0, 1}, {0.4, 1}, {0.5, 0.9}, {0.5, 0.6}, {0.4, 0.5}, {0, 0.5}},
                         {{0.4, 0.5}, {0.55, 0.4}, {0.55, 0.1}, {0.45, 0}, {0, 0}}});
    f['C'] = make_glyph({{{0.6, 0.9}, {0.5, 1}, {0.1, 1}, {0, 0.9}, {0, 0.1}, {0.1, 0}, {0.5, 0}, {0.6, 0.1}}});
    f['D'] = make_glyph({{{0, 0}, {0, 1}, {0.4, 1}, {0.6, 0.8}, {0.6, 0.2}, {0.4, 0}, {0, 0}}});
    f['E'] = make_glyph({{{0.5, 1}, {0, 1}, {0, 0}, {0.5, 0}}, {{0, 0.5}, {0.4, 0.5}}});
    f['F'] = make_glyph({{{0.5, 1}, {0, 1}, {0, 0}}, {{0, 0.5}, {0.4, 0.5}}});
    f['G'] = make_glyph({{{0.6, 0.9}, {0.5, 1}, {0.1, 1}, {0, 0.9}, {0, 0.1}, {0.1, 0}, {0.5, 0}, {0.6, 0.1},
                          {0.6, 0.45}, {0.35, 0.45}}});
    f['H'] = make_glyph({{{0, 0}, {0, 1}}, {{0.6, 0}, {0.6, 1}}, {{0, 0.5}, {0.6, 0.5}}});
    f['I'] = make_glyph({{{0, 0}, {0, 1}}});
    f['J'] = make_glyph({{{0.5, 1}, {0.5, 0.1}, {0.4, 0}, {0.1, 0}, {0, 0.1}, {0, 0.25}}});
    f['K'] = make_glyph({{{0, 0}, {0, 1}}, {{0.5, 1}, {0, 0.4}}, {{0.15, 0.55}, {0.5, 0}}});
    f['L'] = make_glyph({{{0, 1}, {0, 0}, {0.5, 0}}});
    f['M'] = make_glyph({{{0, 0}, {0, 1}, {0.35, 0.4}, {0.7, 1}, {0.7, 0}}});
    f['N'] = make_glyph({{{0, 0}, {0, 1}, {0.6, 0}, {0.6, 1}}});
    f['O'] = make_glyph({o_loop});
    f['P'] = make_glyph({p_bowl});
    f['Q'] = make_glyph({o_loop, {{0.35, 0.25}, {0.65, -0.05}}});
    f['R'] = make_glyph({p_bowl, {{0.25, 0.5}, {0.55, 0}}});
    f['S'] = make_glyph({{{0.55, 0.9}, {0.45, 1}, {0.1, 1}, {0, 0.9}, {0, 0.6}, {0.1, 0.5}, {0.45, 0.5}, {0.55, 0.4},
                          {0.55, 0.1}, {0.45, 0}, {0.1, 0}, {0, 0.1}}});
    f['T'] = make_glyph({{{0, 1}, {0.6, 1}}, {{0.3, 1}, {0.3, 0}}});
    f['U'] = make_glyph({{{0, 1}, {0, 0.1}, {0.1, 0}, {0.5, 0}, {0.6, 0.1}, {0.6, 1}}});
    f['V'] = make_glyph({{{0, 1}, {0.3, 0}, {0.6, 1}}});
    f['W'] = make_glyph({{{0, 1}, {0.2, 0}, {0.4, 0.6}, {0.6, 0}, {0.8, 1}}});
    f['X'] = make_glyph({{{0, 0}, {0.6, 1}}, {{0, 1}, {0.6, 0}}});
    f['Y'] = make_glyph({{{0, 1}, {0.3, 0.5}, {0.6, 1}}, {{0.3, 0.5}, {0.3, 0}}});
    f['Z'] = make_glyph({{{0, 1}, {0.6, 1}, {0, 0}, {0.6, 0}}});
    f['0'] = make_glyph({{{0.25, 1}, {0.05, 0.85}, {0, 0.5}, {0.05, 0.15}, {0.25, 0}, {0.45, 0.15}, {0.5, 0.5},
                          {0.45, 0.85}, {0.25, 1}}});
    f['1'] = make_glyph({{{0.1, 0.8}, {0.3, 1}, {0.3, 0}}});
    f['2'] = make_glyph({{{0, 0.85}, {0.15, 1}, {0.45, 1}, {0.6, 0.85}, {0.6, 0.6}, {0, 0}, {0.6, 0}}});
    f['3'] = make_glyph({{{0, 0.9}, {0.1, 1}, {0.5, 1}, {0.6, 0.9}, {0.6, 0.6}, {0.5, 0.5}, {0.2, 0.5}},
                         {{0.5, 0.5}, {0.6, 0.4}, {0.6, 0.1}, {0.5, 0}, {0.1, 0}, {0, 0.1}}});
    f['4'] = make_glyph({{{0.45, 0}, {0.45, 1}, {0, 0.3}, {0.6, 0.3}}});
    f['5'] = make_glyph({{{0.6, 1}, {0, 1}, {0, 0.55}, {0.45, 0.55}, {0.6, 0.4}, {0.6, 0.1}, {0.5, 0}, {0, 0}}});
    f['6'] = make_glyph({{{0.55, 1}, {0.2, 1}, {0, 0.7}, {0, 0.1}, {0.1, 0}, {0.5, 0}, {0.6, 0.1}, {0.6, 0.4},
                          {0.5, 0.5}, {0, 0.5}}});
    f['7'] = make_glyph({{{0, 1}, {0.6, 1}, {0.2, 0}}});
    f['8'] = make_glyph({{{0.3, 0.5}, {0.05, 0.6}, {0.05, 0.9}, {0.15, 1}, {0.45, 1}, {0.55, 0.9}, {0.55, 0.6},
                          {0.3, 0.5}, {0, 0.4}, {0, 0.1}, {0.1, 0}, {0.5, 0}, {0.6, 0.1}, {0.6, 0.4}, {0.3, 0.5}}});
    f['9'] = make_glyph({{{0.6, 0.5}, {0.1, 0.5}, {0, 0.6}, {0, 0.9}, {0.1, 1}, {0.5, 1}, {0.6, 0.9}, {0.6, 0}}});
    f['-'] = make_glyph({{{0, 0.5}, {0.4, 0.5}}});
    f['+'] = make_glyph({{{0, 0.5}, {0.5, 0.5}}, {{0.25, 0.25}, {0.25, 0.75}}});
    f['!'] = make_glyph({{{0, 1}, {0, 0.3}}, {{0, 0.1}, {0, 0}}});
    f[' '] = make_glyph({}, 0.3);
    return f;
  }();
  return font;
}

/// Ground-plane rendering of a text: the strokes themselves and the walked
/// path, which joins consecutive strokes with straight connectors.
struct Scribble {
  std::vector<std::vector<GroundPoint>> strokes;
  std::vector<GroundPoint> path;

  double stroke_length() const {
    double len = 0.0;
    for (const auto& s : strokes)
      for (std::size_t i = 1; i < s.size(); ++i) len += distance(s[i - 1], s[i]);
    return len;
  }
};

/// Lays `text` out left to right starting at `origin` (baseline), glyph
/// cap height `scale` meters. Lowercase letters use the uppercase glyphs.
inline Scribble scribble_path(std::string_view text, const GroundPoint& origin, double scale) {
  if (text.empty()) throw Error(ErrorCode::InvalidArgument, "scribble text is empty");
  if (!(scale > 0.0)) throw Error(ErrorCode::InvalidArgument, "scribble scale must be positive");
  const auto& font = stroke_font();
  Scribble out;
  double pen_x = 0.0;
  for (char raw : text) {
    const char c = static_cast<char>(std::toupper(static_cast<unsigned char>(raw)));
    const auto it = font.find(c);
    if (it == font.end()) throw Error(ErrorCode::UnsupportedGlyph, std::string("no stroke glyph for '") + raw + "'");
    for (const auto& stroke : it->second.strokes) {
      std::vector<GroundPoint> pts;
      for (const auto& p : stroke) pts.push_back({origin.x + scale * (pen_x + p.x), origin.y + scale * p.y});
      for (const auto& p : pts)
        if (out.path.empty() || !(out.path.back() == p)) out.path.push_back(p);
      out.strokes.push_back(std::move(pts));
    }
    pen_x += it->second.advance;
  }
  if (out.strokes.empty()) throw Error(ErrorCode::UnsupportedGlyph, "text contains no drawable glyph");
  return out;
}

}  // namespace atrium
