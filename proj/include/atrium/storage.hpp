#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "atrium/error.hpp"
#include "atrium/tracking.hpp"

namespace atrium {

using Date = std::chrono::year_month_day;

inline constexpr int kSessionSchemaVersion = 1;
inline constexpr double kSecondsPerDay = 86400.0;

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

inline std::string to_hex(const Rgb& c) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02X%02X%02X", c.r, c.g, c.b);
  return buf;
}

inline Rgb parse_hex_color(const std::string& s) {
  if (s.size() != 7 || s[0] != '#') throw Error(ErrorCode::MalformedFile, "bad color '" + s + "'");
  unsigned v = 0;
  for (std::size_t i = 1; i < 7; ++i) {
    const char c = s[i];
    unsigned d;
    if (c >= '0' && c <= '9') d = static_cast<unsigned>(c - '0');
    else if (c >= 'a' && c <= 'f') d = static_cast<unsigned>(c - 'a' + 10);
    else if (c >= 'A' && c <= 'F') d = static_cast<unsigned>(c - 'A' + 10);
    else throw Error(ErrorCode::MalformedFile, "bad color '" + s + "'");
    v = v * 16 + d;
  }
  return {static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v)};
}

inline std::string to_string(const Date& d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()), static_cast<unsigned>(d.month()),
                static_cast<unsigned>(d.day()));
  return buf;
}

inline Date parse_date(const std::string& s) {
  int y = 0;
  unsigned m = 0, d = 0;
  char tail = 0;
  if (s.size() != 10 || std::sscanf(s.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3)
    throw Error(ErrorCode::MalformedFile, "bad date '" + s + "'");
  const Date date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!date.ok()) throw Error(ErrorCode::MalformedFile, "invalid calendar date '" + s + "'");
  return date;
}

/// 0 = Monday ... 6 = Sunday.
inline int weekday_index(const Date& d) {
  return static_cast<int>(std::chrono::weekday{std::chrono::sys_days{d}}.iso_encoding()) - 1;
}

struct IsoWeek {
  int year;
  unsigned week;
};

inline IsoWeek iso_week(const Date& d) {
  using namespace std::chrono;
  const sys_days day{d};
  const sys_days thursday = day - days{weekday_index(d)} + days{3};
  const year y = year_month_day{thursday}.year();
  const sys_days jan1{y / January / 1};
  return {static_cast<int>(y), static_cast<unsigned>((thursday - jan1).count() / 7 + 1)};
}

/// Reference line width in pixels at 1080 rows: Monday 2 ... Sunday 14.
inline double day_line_width(const Date& d) { return 2.0 + 2.0 * weekday_index(d); }

/// Seven day colors of an ISO week, Monday first, drawn from an RNG seeded
/// with year * 100 + week. Hues are spread so neighbouring days differ.
inline std::array<Rgb, 7> weekly_palette(const IsoWeek& w) {
  std::mt19937_64 rng(static_cast<std::uint64_t>(w.year) * 100u + w.week);
  auto unit = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  std::array<Rgb, 7> out{};
  const double base = unit();
  for (int i = 0; i < 7; ++i) {
    const double h = std::fmod(base + i * (3.0 / 7.0) + 0.05 * (unit() - 0.5) + 1.0, 1.0);
    const double s = 0.45 + 0.45 * unit();
    const double v = 0.55 + 0.4 * unit();
    const double hh = h * 6.0;
    const int sector = static_cast<int>(hh) % 6;
    const double f = hh - std::floor(hh);
    const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
    double r = v, g = t, b = p;
    switch (sector) {
      case 0: r = v, g = t, b = p; break;
      case 1: r = q, g = v, b = p; break;
      case 2: r = p, g = v, b = t; break;
      case 3: r = p, g = q, b = v; break;
      case 4: r = t, g = p, b = v; break;
      default: r = v, g = p, b = q; break;
    }
    auto byte = [](double x) { return static_cast<std::uint8_t>(std::lround(std::clamp(x, 0.0, 1.0) * 255.0)); };
    out[static_cast<std::size_t>(i)] = {byte(r), byte(g), byte(b)};
  }
  return out;
}

inline Rgb day_foreground(const Date& d) { return weekly_palette(iso_week(d))[static_cast<std::size_t>(weekday_index(d))]; }

/// A day's background is the previous day's track color.
inline Rgb day_background(const Date& d) {
  return day_foreground(Date{std::chrono::sys_days{d} - std::chrono::days{1}});
}

/// Finished track as archived in a session; t is seconds since local midnight.
struct SessionTrack {
  int id = 0;
  Trajectory points;
};

struct DaySession {
  Date date{std::chrono::year{2000}, std::chrono::January, std::chrono::day{1}};
  std::vector<SessionTrack> tracks;
  Rgb foreground;
  Rgb background;
  double line_width = 2.0;

  static DaySession open(const Date& d) {
    DaySession s;
    s.date = d;
    s.foreground = day_foreground(d);
    s.background = day_background(d);
    s.line_width = day_line_width(d);
    return s;
  }
};

namespace detail {

inline std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

inline double parse_number(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::MalformedFile, "bad number '" + s + "' in " + what);
  }
}

inline void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::MalformedFile, "cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace detail

/// Canonical XML: fixed attribute order, 4 decimals, two-space indent.
inline void write_session(std::ostream& out, const DaySession& s) {
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<session schema_version=\"" << kSessionSchemaVersion << "\" date=\"" << to_string(s.date)
      << "\" foreground=\"" << to_hex(s.foreground) << "\" background=\"" << to_hex(s.background)
      << "\" line_width=\"" << detail::fixed4(s.line_width) << "\">\n";
  for (const auto& tr : s.tracks) {
    out << "  <track id=\"" << tr.id << "\">\n";
    for (const auto& p : tr.points) {
      out << "    <point t=\"" << detail::fixed4(p.t) << "\" x=\"" << detail::fixed4(p.p.x) << "\" y=\""
          << detail::fixed4(p.p.y) << "\"/>\n";
    }
    out << "  </track>\n";
  }
  out << "</session>\n";
}

inline std::string session_to_string(const DaySession& s) {
  std::ostringstream out;
  write_session(out, s);
  return out.str();
}

inline DaySession read_session(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_xml(in, tree);
  } catch (const pt::xml_parser_error& e) {
    throw Error(ErrorCode::MalformedFile, "session XML line " + std::to_string(e.line()) + ": " + e.message());
  }
  const auto root = tree.get_child_optional("session");
  if (!root) throw Error(ErrorCode::MalformedFile, "missing <session> root element");
  auto attr = [](const pt::ptree& node, const std::string& name, const std::string& where) {
    const auto v = node.get_optional<std::string>("<xmlattr>." + name);
    if (!v) throw Error(ErrorCode::MalformedFile, where + ": missing attribute '" + name + "'");
    return *v;
  };
  const std::string version = attr(*root, "schema_version", "<session>");
  if (version != std::to_string(kSessionSchemaVersion))
    throw Error(ErrorCode::SchemaVersionMismatch, "session schema_version " + version + " is not supported");

  DaySession s;
  s.date = parse_date(attr(*root, "date", "<session>"));
  s.foreground = parse_hex_color(attr(*root, "foreground", "<session>"));
  s.background = parse_hex_color(attr(*root, "background", "<session>"));
  s.line_width = detail::parse_number(attr(*root, "line_width", "<session>"), "<session> line_width");
  if (!(s.line_width > 0)) throw Error(ErrorCode::MalformedFile, "<session>: line_width must be positive");

  std::size_t track_no = 0;
  for (const auto& [name, node] : *root) {
    if (name == "<xmlattr>" || name == "<xmlcomment>") continue;
    ++track_no;
    const std::string where = "track element #" + std::to_string(track_no);
    if (name != "track") throw Error(ErrorCode::MalformedFile, "unexpected element <" + name + "> in <session>");
    SessionTrack tr;
    const std::string id = attr(node, "id", where);
    try {
      std::size_t used = 0;
      tr.id = std::stoi(id, &used);
      if (used != id.size()) throw std::invalid_argument(id);
    } catch (const std::exception&) {
      throw Error(ErrorCode::MalformedFile, where + ": bad id '" + id + "'");
    }
    for (const auto& [pname, pnode] : node) {
      if (pname == "<xmlattr>" || pname == "<xmlcomment>") continue;
      if (pname != "point") throw Error(ErrorCode::MalformedFile, where + ": unexpected element <" + pname + ">");
      TimedPoint p;
      p.t = detail::parse_number(attr(pnode, "t", where), where);
      p.p.x = detail::parse_number(attr(pnode, "x", where), where);
      p.p.y = detail::parse_number(attr(pnode, "y", where), where);
      if (p.t < 0.0 || p.t >= kSecondsPerDay)
        throw Error(ErrorCode::MalformedFile, where + ": time " + detail::fixed4(p.t) + " outside the session date");
      if (!tr.points.empty() && !(p.t > tr.points.back().t))
        throw Error(ErrorCode::MalformedFile, where + ": point times are not increasing");
      tr.points.push_back(p);
    }
    s.tracks.push_back(std::move(tr));
  }
  return s;
}

inline void save_session(const std::filesystem::path& path, const DaySession& s) {
  detail::write_file_atomic(path, session_to_string(s));
}

inline DaySession load_session(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MalformedFile, "cannot open session file " + path.string());
  return read_session(in);
}

/// CSV export: header `track_id,t,x,y`, one row per point.
inline void write_session_csv(std::ostream& out, const DaySession& s) {
  out << "track_id,t,x,y\n";
  for (const auto& tr : s.tracks)
    for (const auto& p : tr.points)
      out << tr.id << ',' << detail::fixed4(p.t) << ',' << detail::fixed4(p.p.x) << ',' << detail::fixed4(p.p.y) << '\n';
}

/// Local calendar date of a wall-clock instant.
inline Date local_date(std::chrono::system_clock::time_point now) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  localtime_r(&tt, &tm);
  return Date{std::chrono::year{tm.tm_year + 1900}, std::chrono::month{static_cast<unsigned>(tm.tm_mon + 1)},
              std::chrono::day{static_cast<unsigned>(tm.tm_mday)}};
}

/// Owns the current day's session and the on-disk archive
/// (`<dir>/session-YYYY-MM-DD.xml`).
class SessionStore {
 public:
  explicit SessionStore(std::filesystem::path dir, double snapshot_period = 60.0)
      : dir_(std::move(dir)), period_(snapshot_period) {}

  const std::filesystem::path& directory() const { return dir_; }
  const std::optional<DaySession>& current() const { return current_; }

  std::filesystem::path path_for(const Date& d) const { return dir_ / ("session-" + to_string(d) + ".xml"); }

  /// Opens `today` if no session is open; on a date change flushes the
  /// finished day and opens the next. Returns true when a rollover happened.
  bool daily_reset(const Date& today) {
    if (current_ && current_->date == today) return false;
    const bool rolled = current_.has_value();
    if (current_) flush();
    current_ = DaySession::open(today);
    last_snapshot_.reset();
    return rolled;
  }

  bool daily_reset(std::chrono::system_clock::time_point now) { return daily_reset(local_date(now)); }

  void add_track(SessionTrack track) {
    if (!current_) throw Error(ErrorCode::InvalidArgument, "no session is open");
    for (const auto& p : track.points)
      if (p.t < 0.0 || p.t >= kSecondsPerDay)
        throw Error(ErrorCode::InvalidArgument, "track time outside the session date");
    current_->tracks.push_back(std::move(track));
  }

  /// Periodic snapshot: rewrites the session file when `period` seconds
  /// have passed since the previous one (elapsed is any monotone clock).
  bool maybe_snapshot(double elapsed) {
    if (!current_) return false;
    if (last_snapshot_ && elapsed - *last_snapshot_ < period_) return false;
    flush();
    last_snapshot_ = elapsed;
    return true;
  }

  void flush() const {
    if (!current_) return;
    std::filesystem::create_directories(dir_);
    save_session(path_for(current_->date), *current_);
  }

 private:
  std::filesystem::path dir_;
  double period_;
  std::optional<DaySession> current_;
  std::optional<double> last_snapshot_;
};

}  // namespace atrium
