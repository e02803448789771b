#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <optional>
#include <type_traits>
#include <utility>
#include <vector>

namespace atrium {

/// Dense row-major cost matrix; std::nullopt marks a forbidden pair.
template <typename Cost>
class CostMatrix {
 public:
  CostMatrix() = default;
  CostMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), cells_(rows * cols) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  std::optional<Cost>& at(std::size_t r, std::size_t c) { return cells_[r * cols_ + c]; }
  const std::optional<Cost>& at(std::size_t r, std::size_t c) const { return cells_[r * cols_ + c]; }

  void forbid(std::size_t r, std::size_t c) { at(r, c).reset(); }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::optional<Cost>> cells_;
};

template <typename Cost>
struct Assignment {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (row, col), sorted by row
  std::vector<std::size_t> unmatched_rows;
  std::vector<std::size_t> unmatched_cols;
  Cost total{};
};

namespace detail {

// Shortest augmenting path Hungarian method (Kuhn-Munkres with potentials)
// on a square n x n matrix, 1-based internally. Returns col assigned to each row.
template <typename Cost>
std::vector<std::size_t> hungarian_square(const std::vector<Cost>& a, std::size_t n) {
  const Cost inf = std::numeric_limits<Cost>::max() / 4;
  std::vector<Cost> u(n + 1, Cost{}), v(n + 1, Cost{});
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<Cost> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      Cost delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const Cost cur = a[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> row_to_col(n, 0);
  for (std::size_t j = 1; j <= n; ++j)
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

}  // namespace detail

/// Rectangular assignment with forbidden entries.
///
/// Among all matchings that use only allowed pairs, returns one with the
/// largest number of pairs and, among those, the smallest total cost.
/// Forbidden cells are priced above any sum of allowed costs, padding cells
/// cost zero; pairs landing on either are reported as unmatched.
/// Costs must be non-negative.
template <typename Cost>
Assignment<Cost> solve_assignment(const CostMatrix<Cost>& costs) {
  static_assert(std::is_arithmetic_v<Cost>);
  Assignment<Cost> result;
  const std::size_t rows = costs.rows();
  const std::size_t cols = costs.cols();
  const std::size_t n = std::max(rows, cols);

  Cost max_allowed{};
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      if (const auto& cell = costs.at(r, c)) max_allowed = std::max(max_allowed, *cell);
  const Cost forbidden = static_cast<Cost>(max_allowed + 1) * static_cast<Cost>(n + 1);

  std::vector<Cost> square(n * n, Cost{});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const auto& cell = costs.at(r, c);
      square[r * n + c] = cell ? *cell : forbidden;
    }

  const auto row_to_col = n == 0 ? std::vector<std::size_t>{} : detail::hungarian_square(square, n);
  std::vector<char> col_used(cols, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t c = row_to_col[r];
    if (c < cols && costs.at(r, c)) {
      result.pairs.emplace_back(r, c);
      result.total += *costs.at(r, c);
      col_used[c] = 1;
    } else {
      result.unmatched_rows.push_back(r);
    }
  }
  for (std::size_t c = 0; c < cols; ++c)
    if (!col_used[c]) result.unmatched_cols.push_back(c);
  return result;
}

}  // namespace atrium
