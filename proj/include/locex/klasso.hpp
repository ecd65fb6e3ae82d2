#pragma once

// Sparse weighted linear fits: feature selection along the LASSO path
// (LARS with the lasso modification) followed by a weighted least-squares
// refit with intercept.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace locex {

// Row-major n x m design with per-row labels and non-negative weights.
struct WeightedDesign {
  std::span<const double> x;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::span<const double> y;
  std::span<const double> w;
};

struct LinearFit {
  std::vector<std::size_t> selected;  // design columns, ascending
  std::vector<double> coef;           // aligned with `selected`
  double intercept = 0.0;
  std::vector<std::size_t> entry_order;  // order in which the path activated columns
  std::vector<std::string> warnings;

  double predict(const double* row) const;
};

// Ridge added to the diagonal of the centered normal equations.
inline constexpr double kRefitJitter = 1e-10;

// Weighted least squares with intercept on the given columns. Columns that
// are linearly dependent on earlier ones are dropped (with a warning).
LinearFit weighted_least_squares(const WeightedDesign& design, std::span<const std::size_t> columns);

// Select at most k columns along the LASSO path, stopping the first time the
// active set reaches k (or when the path ends), then refit.
LinearFit k_lasso(const WeightedDesign& design, std::size_t k);

// Sum of w * (y - fit)^2.
double weighted_sse(const WeightedDesign& design, const LinearFit& fit);

// 1 - SSE(fit) / SSE(weighted mean); 1 when the labels have no weighted
// variance.
double weighted_r2(const WeightedDesign& design, const LinearFit& fit);

}  // namespace locex
