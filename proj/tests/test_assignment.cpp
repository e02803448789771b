#include <algorithm>
#include <limits>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "atrium/assignment.hpp"

using namespace atrium;

namespace {

struct Best {
  std::size_t pairs = 0;
  long long cost = 0;
};

// Exhaustive search over injective row -> column maps (or "unmatched"):
// maximum cardinality first, then minimum cost.
Best brute_force(const CostMatrix<long long>& m) {
  const std::size_t rows = m.rows(), cols = m.cols();
  Best best;
  bool found = false;
  std::vector<int> choice(rows, -1);
  std::vector<char> used(cols, 0);
  auto rec = [&](auto&& self, std::size_t r, std::size_t pairs, long long cost) -> void {
    if (r == rows) {
      if (!found || pairs > best.pairs || (pairs == best.pairs && cost < best.cost)) best = {pairs, cost};
      found = true;
      return;
    }
    self(self, r + 1, pairs, cost);
    for (std::size_t c = 0; c < cols; ++c) {
      if (used[c] || !m.at(r, c)) continue;
      used[c] = 1;
      self(self, r + 1, pairs + 1, cost + *m.at(r, c));
      used[c] = 0;
    }
  };
  rec(rec, 0, 0, 0);
  return best;
}

}  // namespace

TEST(Assignment, EmptyMatrix) {
  CostMatrix<double> m(0, 3);
  const auto a = solve_assignment(m);
  EXPECT_TRUE(a.pairs.empty());
  EXPECT_EQ(a.unmatched_cols.size(), 3u);
}

TEST(Assignment, SquareKnownOptimum) {
  CostMatrix<long long> m(3, 3);
  const long long c[3][3] = {{4, 1, 3}, {2, 0, 5}, {3, 2, 2}};
  for (int r = 0; r < 3; ++r)
    for (int k = 0; k < 3; ++k) m.at(r, k) = c[r][k];
  const auto a = solve_assignment(m);
  EXPECT_EQ(a.total, 5);
  ASSERT_EQ(a.pairs.size(), 3u);
}

TEST(Assignment, GatingLeavesRowsUnmatched) {
  CostMatrix<double> m(2, 2);
  m.at(0, 0) = 1.0;
  // row 1 has no admissible column
  const auto a = solve_assignment(m);
  ASSERT_EQ(a.pairs.size(), 1u);
  EXPECT_EQ(a.pairs[0], std::make_pair(std::size_t{0}, std::size_t{0}));
  EXPECT_EQ(a.unmatched_rows, std::vector<std::size_t>{1});
  EXPECT_EQ(a.unmatched_cols, std::vector<std::size_t>{1});
}

TEST(Assignment, PrefersMoreMatchesOverCheaperFewer) {
  CostMatrix<long long> m(2, 2);
  m.at(0, 0) = 1;
  m.at(0, 1) = 100;
  m.at(1, 0) = 100;
  const auto a = solve_assignment(m);
  EXPECT_EQ(a.pairs.size(), 2u);
  EXPECT_EQ(a.total, 200);
}

TEST(Assignment, MatchesExhaustiveSearchOnRandomGatedMatrices) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> dim(1, 7), cost(0, 50);
  std::bernoulli_distribution gated(0.3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t rows = dim(rng), cols = dim(rng);
    CostMatrix<long long> m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c)
        if (!gated(rng)) m.at(r, c) = cost(rng);
    const auto a = solve_assignment(m);
    const auto b = brute_force(m);
    ASSERT_EQ(a.pairs.size(), b.pairs) << "trial " << trial;
    ASSERT_EQ(a.total, b.cost) << "trial " << trial;
    std::vector<char> cu(cols, 0);
    for (auto [r, c] : a.pairs) {
      ASSERT_TRUE(m.at(r, c).has_value());
      ASSERT_FALSE(cu[c]);
      cu[c] = 1;
    }
    EXPECT_EQ(a.pairs.size() + a.unmatched_rows.size(), rows);
    EXPECT_EQ(a.pairs.size() + a.unmatched_cols.size(), cols);
  }
}
