#pragma once

// Choosing a small, non-redundant set of explanations to show a user:
// weighted coverage over an explanation matrix and its greedy maximizer.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "locex/explain.hpp"

namespace locex {

struct ExplanationMatrix {
  std::size_t n = 0;  // instances
  std::size_t d = 0;  // interpretable components
  std::vector<double> w;  // n x d row-major, |explanation weight|
  std::vector<std::string> instance_ids;
  std::vector<double> importance;  // sqrt of column sums

  double at(std::size_t i, std::size_t j) const { return w[i * d + j]; }
};

// Takes ownership of an n x d non-negative matrix and fills in importance.
ExplanationMatrix make_matrix(std::vector<double> w, std::size_t n, std::size_t d);
ExplanationMatrix build_matrix(std::span<const Explanation> explanations, std::size_t d);
// Binary rows (weight 1 per listed feature), for explainers without weights.
ExplanationMatrix build_matrix(std::span<const std::vector<Column>> feature_lists, std::size_t d);

// Total importance of the columns touched by at least one row of `rows`.
double coverage(std::span<const std::size_t> rows, const ExplanationMatrix& w,
                std::span<const double> importance);
inline double coverage(std::span<const std::size_t> rows, const ExplanationMatrix& w) {
  return coverage(rows, w, w.importance);
}

struct PickResult {
  std::vector<std::size_t> selected;  // in greedy order
  std::vector<double> coverage_trace;  // coverage after each addition
};

// Greedy maximization of coverage under |V| <= budget. Ties go to the lowest
// row index, so zero-gain rows fill the remaining budget in index order.
PickResult submodular_pick(const ExplanationMatrix& w, std::span<const double> importance,
                           std::size_t budget);
inline PickResult submodular_pick(const ExplanationMatrix& w, std::size_t budget) {
  return submodular_pick(w, w.importance, budget);
}

// Uniform random subset of min(budget, n) rows, in draw order.
PickResult random_pick(const ExplanationMatrix& w, std::size_t budget, std::uint64_t seed);

struct OptimalPick {
  std::vector<std::size_t> selected;  // ascending
  double value = 0.0;
};

inline constexpr std::size_t kBruteForceMaxRows = 15;

// Exact maximizer by enumeration; n must not exceed kBruteForceMaxRows.
OptimalPick brute_force_pick(const ExplanationMatrix& w, std::span<const double> importance,
                             std::size_t budget);

}  // namespace locex
