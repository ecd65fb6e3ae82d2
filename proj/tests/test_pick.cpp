#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "locex/error.hpp"
#include "locex/pick.hpp"

namespace locex {
namespace {

// Rows r1..r5 over f1..f5 (0-based here).
ExplanationMatrix toy() {
  const std::vector<std::vector<Column>> rows{{1, 2}, {1, 2, 3}, {1, 2}, {0, 1}, {1, 4}};
  return build_matrix(rows, 5);
}

ExplanationMatrix random_matrix(std::mt19937_64& rng, std::size_t n, std::size_t d) {
  std::vector<double> w(n * d, 0.0);
  std::uniform_real_distribution<double> mag(0.0, 2.0);
  for (auto& v : w) {
    if (rng() % 3 == 0) v = mag(rng);
  }
  return make_matrix(std::move(w), n, d);
}

// Reference coverage straight from the definition.
double coverage_ref(const std::set<std::size_t>& rows, const ExplanationMatrix& w) {
  double total = 0.0;
  for (std::size_t j = 0; j < w.d; ++j) {
    double col = 0.0;
    for (std::size_t i = 0; i < w.n; ++i) col += w.at(i, j);
    bool touched = false;
    for (auto i : rows) touched = touched || w.at(i, j) > 0.0;
    if (touched) total += std::sqrt(col);
  }
  return total;
}

std::vector<std::size_t> to_vec(const std::set<std::size_t>& s) { return {s.begin(), s.end()}; }

TEST(Matrix, ImportanceIsRootOfColumnSums) {
  const auto w = toy();
  ASSERT_EQ(w.importance.size(), 5u);
  EXPECT_DOUBLE_EQ(w.importance[0], 1.0);
  EXPECT_DOUBLE_EQ(w.importance[1], std::sqrt(5.0));
  EXPECT_DOUBLE_EQ(w.importance[2], std::sqrt(3.0));
  EXPECT_DOUBLE_EQ(w.importance[3], 1.0);
  EXPECT_DOUBLE_EQ(w.importance[4], 1.0);
}

TEST(Matrix, FromExplanationsUsesAbsoluteWeights) {
  Explanation a, b;
  a.features = {{0, "x", -2.0}, {2, "z", 1.0}};
  b.features = {{2, "z", -1.0}};
  const std::vector<Explanation> es{a, b};
  const auto w = build_matrix(es, 3);
  EXPECT_DOUBLE_EQ(w.at(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(w.at(1, 2), 1.0);
  EXPECT_DOUBLE_EQ(w.importance[0], std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(w.importance[1], 0.0);
  EXPECT_DOUBLE_EQ(w.importance[2], std::sqrt(2.0));
}

TEST(Matrix, EmptyListGivesEmptyMatrix) {
  const auto w = build_matrix(std::span<const Explanation>{}, 4);
  EXPECT_EQ(w.n, 0u);
  EXPECT_EQ(w.importance, std::vector<double>(4, 0.0));
}

TEST(Matrix, RejectsBadShapes) {
  EXPECT_THROW(make_matrix({1.0, 2.0, 3.0}, 2, 2), Error);
  EXPECT_THROW(make_matrix({1.0, -2.0}, 1, 2), Error);
  const std::vector<std::vector<Column>> rows{{7}};
  EXPECT_THROW(build_matrix(rows, 3), Error);
}

TEST(Coverage, ToyValues) {
  const auto w = toy();
  const std::vector<std::size_t> pair{1, 4};
  EXPECT_NEAR(coverage(pair, w), std::sqrt(5.0) + std::sqrt(3.0) + 2.0, 1e-12);
  EXPECT_NEAR(coverage(pair, w), 5.968, 1e-3);
  EXPECT_DOUBLE_EQ(coverage({}, w), 0.0);
  const std::vector<std::size_t> all{0, 1, 2, 3, 4};
  EXPECT_NEAR(coverage(all, w), 3.0 + std::sqrt(5.0) + std::sqrt(3.0), 1e-12);
}

TEST(SubmodularPick, ToyGreedyOrder) {
  const auto r = submodular_pick(toy(), 2);
  EXPECT_EQ(r.selected, (std::vector<std::size_t>{1, 3}));
  ASSERT_EQ(r.coverage_trace.size(), 2u);
  EXPECT_NEAR(r.coverage_trace[0], std::sqrt(5.0) + std::sqrt(3.0) + 1.0, 1e-12);
  EXPECT_NEAR(r.coverage_trace[1], 5.968, 1e-3);
}

TEST(SubmodularPick, BudgetAboveRowsSelectsAll) {
  const auto r = submodular_pick(toy(), 9);
  auto sorted = r.selected;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(sorted, (std::vector<std::size_t>{0, 1, 2, 3, 4}));
  EXPECT_NEAR(r.coverage_trace.back(), 3.0 + std::sqrt(5.0) + std::sqrt(3.0), 1e-12);
}

TEST(SubmodularPick, ZeroBudgetRejected) { EXPECT_THROW(submodular_pick(toy(), 0), Error); }

TEST(BruteForce, ToyOptimum) {
  const auto w = toy();
  const auto opt = brute_force_pick(w, w.importance, 2);
  EXPECT_NEAR(opt.value, 5.968, 1e-3);
  EXPECT_EQ(opt.selected.size(), 2u);
  EXPECT_EQ(opt.selected.front(), 1u);
}

TEST(BruteForce, SizeLimit) {
  std::mt19937_64 rng(1);
  const auto w = random_matrix(rng, kBruteForceMaxRows + 1, 3);
  try {
    brute_force_pick(w, w.importance, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kSize);
  }
}

TEST(BruteForce, ImportanceShapeChecked) {
  const auto w = toy();
  const std::vector<double> short_importance{1.0, 1.0};
  try {
    brute_force_pick(w, short_importance, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kShape);
  }
}

TEST(RandomPick, DistinctRowsWithinBudget) {
  const auto w = toy();
  const auto r = random_pick(w, 3, 12);
  ASSERT_EQ(r.selected.size(), 3u);
  EXPECT_EQ(std::set<std::size_t>(r.selected.begin(), r.selected.end()).size(), 3u);
  EXPECT_EQ(random_pick(w, 3, 12).selected, r.selected);
  EXPECT_EQ(random_pick(w, 8, 12).selected.size(), 5u);
}

// Properties over random matrices.

TEST(PickProperty, CoverageMatchesDefinition) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 300; ++t) {
    const auto w = random_matrix(rng, 1 + rng() % 10, 1 + rng() % 8);
    std::set<std::size_t> v;
    for (std::size_t i = 0; i < w.n; ++i) {
      if (rng() % 2) v.insert(i);
    }
    EXPECT_NEAR(coverage(to_vec(v), w), coverage_ref(v, w), 1e-12);
  }
}

TEST(PickProperty, GreedyWithinGuaranteeOfOptimum) {
  std::mt19937_64 rng(3);
  const double bound = 1.0 - std::exp(-1.0);
  for (int t = 0; t < 300; ++t) {
    const auto w = random_matrix(rng, 1 + rng() % 12, 1 + rng() % 10);
    const std::size_t budget = 1 + rng() % 4;
    const auto g = submodular_pick(w, budget);
    const auto opt = brute_force_pick(w, w.importance, budget);
    const double got = g.coverage_trace.empty() ? 0.0 : g.coverage_trace.back();
    EXPECT_GE(got, bound * opt.value - 1e-12);
    EXPECT_LE(got, opt.value + 1e-12);
    EXPECT_EQ(g.selected.size(), std::min(budget, w.n));
    EXPECT_TRUE(std::is_sorted(g.coverage_trace.begin(), g.coverage_trace.end()));
    EXPECT_EQ(std::set<std::size_t>(g.selected.begin(), g.selected.end()).size(), g.selected.size());
  }
}

TEST(PickProperty, MonotoneAndDiminishingReturns) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 2 + rng() % 10;
    const auto w = random_matrix(rng, n, 1 + rng() % 10);
    std::set<std::size_t> small, big;
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = rng() % 3;
      if (r == 0) small.insert(i);
      if (r <= 1) big.insert(i);
    }
    const std::size_t extra = rng() % n;
    const double c_small = coverage(to_vec(small), w);
    const double c_big = coverage(to_vec(big), w);
    EXPECT_LE(c_small, c_big + 1e-12);
    if (big.count(extra)) continue;
    auto s2 = small, b2 = big;
    s2.insert(extra);
    b2.insert(extra);
    EXPECT_GE(coverage(to_vec(s2), w) - c_small, coverage(to_vec(b2), w) - c_big - 1e-12);
  }
}

}  // namespace
}  // namespace locex
