#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "atrium/error.hpp"
#include "atrium/normality.hpp"

namespace atrium {

/// Normality array plus the ring of trajectories that defines it.
struct NormalityModel {
  NormalityArray array;
  TrainingRing ring;

  NormalityModel() : array(GridTransform{}), ring(500) {}
  NormalityModel(GridTransform transform, NormalityOptions opts, std::size_t capacity)
      : array(transform, opts), ring(capacity) {}

  /// Mean step normality of a raw trajectory; throws EmptySteps when it is
  /// too short to produce a single step.
  double score(std::span<const TimedPoint> traj) const {
    return array.trajectory_normality(trajectory_steps(traj));
  }

  void train(std::span<const TimedPoint> traj) {
    const auto steps = trajectory_steps(traj);
    ring_update(ring, array, steps);
  }
};

// Model snapshot: "ATRM1", header, dense array values, ring records.
// All integers and IEEE-754 doubles little-endian.
namespace detail {

class LeWriter {
 public:
  explicit LeWriter(std::ostream& out) : out_(out) {}
  void u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

 private:
  std::ostream& out_;
};

class LeReader {
 public:
  explicit LeReader(std::istream& in) : in_(in) {}
  std::uint8_t u8() {
    const int c = in_.get();
    if (c == std::char_traits<char>::eof()) throw Error(ErrorCode::MalformedFile, "model snapshot is truncated");
    return static_cast<std::uint8_t>(c);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  double finite() {
    const double v = f64();
    if (!std::isfinite(v)) throw Error(ErrorCode::MalformedFile, "model snapshot holds a non-finite number");
    return v;
  }
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::istream& in_;
};

inline constexpr char kModelMagic[5] = {'A', 'T', 'R', 'M', '1'};

}  // namespace detail

inline void write_model(std::ostream& out, const NormalityModel& model) {
  detail::LeWriter w(out);
  for (char c : detail::kModelMagic) w.u8(static_cast<std::uint8_t>(c));
  const auto& tr = model.array.transform();
  for (int n : tr.dims.as_array()) w.u32(static_cast<std::uint32_t>(n));
  w.f64(tr.x_min);
  w.f64(tr.x_max);
  w.f64(tr.y_min);
  w.f64(tr.y_max);
  w.f64(tr.v_max);
  const auto& opts = model.array.options();
  for (double s : opts.sigma) w.f64(s);
  w.u32(static_cast<std::uint32_t>(opts.truncation_radius));
  w.f64(opts.reference_step_length);
  w.u8(opts.normalized ? 1 : 0);
  w.u64(model.ring.capacity());
  w.u64(model.array.next_record_id());
  for (double v : model.array.values()) w.f64(v);
  w.u64(model.ring.size());
  for (const auto& slot : model.ring.slots()) {
    w.u64(slot.size());
    for (const auto& rec : slot) {
      w.u64(rec.id);
      for (double g : rec.grid) w.f64(g);
      w.f64(rec.weight);
    }
  }
  if (!out) throw Error(ErrorCode::MalformedFile, "failed writing model snapshot");
}

inline NormalityModel read_model(std::istream& in) {
  detail::LeReader r(in);
  for (char c : detail::kModelMagic) {
    if (r.u8() != static_cast<std::uint8_t>(c)) {
      throw Error(ErrorCode::SchemaVersionMismatch, "not an ATRM1 model snapshot");
    }
  }
  GridTransform tr;
  tr.dims.nx = static_cast<int>(r.u32());
  tr.dims.ny = static_cast<int>(r.u32());
  tr.dims.nvx = static_cast<int>(r.u32());
  tr.dims.nvy = static_cast<int>(r.u32());
  if (tr.dims.cells() > (std::size_t{1} << 28)) throw Error(ErrorCode::MalformedFile, "implausible grid size");
  tr.x_min = r.finite();
  tr.x_max = r.finite();
  tr.y_min = r.finite();
  tr.y_max = r.finite();
  tr.v_max = r.finite();
  NormalityOptions opts;
  for (double& s : opts.sigma) s = r.finite();
  opts.truncation_radius = static_cast<int>(r.u32());
  opts.reference_step_length = r.finite();
  opts.normalized = r.u8() != 0;
  const std::uint64_t capacity = r.u64();
  const std::uint64_t next_id = r.u64();

  NormalityModel model = [&] {
    try {
      return NormalityModel(tr, opts, capacity);
    } catch (const Error& e) {
      throw Error(ErrorCode::MalformedFile, std::string("model snapshot header: ") + e.what());
    }
  }();
  std::vector<double> values(tr.dims.cells());
  for (double& v : values) v = r.finite();

  const std::uint64_t slots = r.u64();
  if (slots > capacity) throw Error(ErrorCode::MalformedFile, "ring holds more slots than its capacity");
  std::deque<std::vector<DepositRecord>> ring;
  std::vector<std::uint64_t> ids;
  for (std::uint64_t s = 0; s < slots; ++s) {
    const std::uint64_t count = r.u64();
    if (count > (std::uint64_t{1} << 24)) throw Error(ErrorCode::MalformedFile, "implausible slot size");
    std::vector<DepositRecord> slot(count);
    for (auto& rec : slot) {
      rec.id = r.u64();
      for (double& g : rec.grid) g = r.finite();
      rec.weight = r.finite();
      if (rec.id >= next_id) throw Error(ErrorCode::MalformedFile, "record id beyond the id counter");
      ids.push_back(rec.id);
    }
    ring.push_back(std::move(slot));
  }
  if (!r.at_end()) throw Error(ErrorCode::MalformedFile, "trailing bytes after model snapshot");
  model.array.restore(std::move(values), next_id, std::move(ids));
  model.ring.restore(std::move(ring));
  return model;
}

/// Writes to a sibling temp file and renames it into place.
inline void save_model(const std::filesystem::path& path, const NormalityModel& model) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::MalformedFile, "cannot write " + tmp.string());
    write_model(out, model);
  }
  std::filesystem::rename(tmp, path);
}

inline NormalityModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MalformedFile, "cannot open model snapshot " + path.string());
  return read_model(in);
}

}  // namespace atrium
