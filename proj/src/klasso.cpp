#include "locex/klasso.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "locex/error.hpp"
#include "locex/simd.hpp"

namespace locex {
namespace {

void validate(const WeightedDesign& d) {
  if (d.x.size() != d.rows * d.cols || d.y.size() != d.rows || d.w.size() != d.rows) {
    throw Error(ErrorKind::kShape, "weighted design has inconsistent sizes");
  }
  for (double w : d.w) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw Error(ErrorKind::kRange, "weights must be finite and >= 0");
  }
}

// Weighted-centered, sqrt(w)-scaled design in column-major layout, plus the
// statistics needed to undo the centering.
struct CenteredDesign {
  std::size_t n = 0;
  std::size_t m = 0;
  std::vector<double> cols;  // m columns of length n
  std::vector<double> yc;
  std::vector<double> x_mean;
  double y_mean = 0.0;
  double total_weight = 0.0;

  std::span<const double> col(std::size_t j) const { return {cols.data() + j * n, n}; }
};

CenteredDesign center(const WeightedDesign& d) {
  CenteredDesign c;
  c.n = d.rows;
  c.m = d.cols;
  c.total_weight = simd::sum(d.w);
  if (!(c.total_weight > 0.0)) throw Error(ErrorKind::kRange, "total sample weight is zero");
  std::vector<double> sqrt_w(d.rows);
  for (std::size_t i = 0; i < d.rows; ++i) sqrt_w[i] = std::sqrt(d.w[i]);

  c.cols.resize(d.rows * d.cols);
  for (std::size_t i = 0; i < d.rows; ++i) {
    const double* row = d.x.data() + i * d.cols;
    for (std::size_t j = 0; j < d.cols; ++j) c.cols[j * d.rows + i] = row[j];
  }
  c.x_mean.resize(d.cols);
  for (std::size_t j = 0; j < d.cols; ++j) {
    std::span<double> col(c.cols.data() + j * d.rows, d.rows);
    c.x_mean[j] = simd::dot(d.w, col) / c.total_weight;
    simd::center_scale(col, c.x_mean[j], sqrt_w);
  }
  c.y_mean = simd::dot(d.w, d.y) / c.total_weight;
  c.yc.assign(d.y.begin(), d.y.end());
  simd::center_scale(c.yc, c.y_mean, sqrt_w);
  return c;
}

// Symmetric m x m matrix stored dense, row-major.
struct Gram {
  std::size_t m = 0;
  std::vector<double> a;
  double operator()(std::size_t i, std::size_t j) const { return a[i * m + j]; }
};

Gram gram_of(const CenteredDesign& c) {
  Gram g{c.m, std::vector<double>(c.m * c.m)};
  for (std::size_t i = 0; i < c.m; ++i) {
    for (std::size_t j = i; j < c.m; ++j) {
      const double v = simd::dot(c.col(i), c.col(j));
      g.a[i * c.m + j] = v;
      g.a[j * c.m + i] = v;
    }
  }
  return g;
}

// Cholesky factor of the k x k matrix `a` (row-major), lower triangle in
// place. Returns the first pivot index that fails the relative test, or k.
// In-place lower Cholesky. Returns the first column whose pivot is not above
// rel_tol times the largest diagonal entry, or k on success.
std::size_t cholesky(std::vector<double>& a, std::size_t k, double rel_tol) {
  double max_diag = 0.0;
  for (std::size_t i = 0; i < k; ++i) max_diag = std::max(max_diag, a[i * k + i]);
  const double floor = rel_tol * std::max(max_diag, std::numeric_limits<double>::min());
  for (std::size_t j = 0; j < k; ++j) {
    double diag = a[j * k + j];
    for (std::size_t p = 0; p < j; ++p) diag -= a[j * k + p] * a[j * k + p];
    if (!(diag > floor)) return j;
    const double ljj = std::sqrt(diag);
    a[j * k + j] = ljj;
    for (std::size_t i = j + 1; i < k; ++i) {
      double v = a[i * k + j];
      for (std::size_t p = 0; p < j; ++p) v -= a[i * k + p] * a[j * k + p];
      a[i * k + j] = v / ljj;
    }
  }
  return k;
}

std::vector<double> cholesky_solve(const std::vector<double>& l, std::size_t k, std::vector<double> b) {
  for (std::size_t i = 0; i < k; ++i) {
    double v = b[i];
    for (std::size_t p = 0; p < i; ++p) v -= l[i * k + p] * b[p];
    b[i] = v / l[i * k + i];
  }
  for (std::size_t ii = k; ii-- > 0;) {
    double v = b[ii];
    for (std::size_t p = ii + 1; p < k; ++p) v -= l[p * k + ii] * b[p];
    b[ii] = v / l[ii * k + ii];
  }
  return b;
}

constexpr double kPivotTol = 1e-12;

// Solve (G_SS + jitter I) beta = rhs_S, dropping columns whose pivot fails.
LinearFit refit(const CenteredDesign& c, const Gram& g, const std::vector<double>& cy,
                std::vector<std::size_t> columns) {
  LinearFit fit;
  std::sort(columns.begin(), columns.end());
  columns.erase(std::unique(columns.begin(), columns.end()), columns.end());
  while (!columns.empty()) {
    const std::size_t k = columns.size();
    std::vector<double> a(k * k);
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) a[i * k + j] = g(columns[i], columns[j]);
    }
    auto probe = a;
    const std::size_t bad = cholesky(probe, k, kPivotTol);
    if (bad < k) {
      fit.warnings.push_back("dropped linearly dependent column " + std::to_string(columns[bad]));
      columns.erase(columns.begin() + static_cast<std::ptrdiff_t>(bad));
      continue;
    }
    for (std::size_t i = 0; i < k; ++i) a[i * k + i] += kRefitJitter;
    cholesky(a, k, 0.0);
    std::vector<double> rhs(k);
    for (std::size_t i = 0; i < k; ++i) rhs[i] = cy[columns[i]];
    fit.coef = cholesky_solve(a, k, std::move(rhs));
    break;
  }
  fit.selected = std::move(columns);
  fit.intercept = c.y_mean;
  for (std::size_t i = 0; i < fit.selected.size(); ++i) {
    fit.intercept -= fit.coef[i] * c.x_mean[fit.selected[i]];
  }
  return fit;
}

std::vector<double> correlations(const CenteredDesign& c) {
  std::vector<double> cy(c.m);
  for (std::size_t j = 0; j < c.m; ++j) cy[j] = simd::dot(c.col(j), c.yc);
  return cy;
}

}  // namespace

double LinearFit::predict(const double* row) const {
  double v = intercept;
  for (std::size_t i = 0; i < selected.size(); ++i) v += coef[i] * row[selected[i]];
  return v;
}

LinearFit weighted_least_squares(const WeightedDesign& design, std::span<const std::size_t> columns) {
  validate(design);
  for (auto j : columns) {
    if (j >= design.cols) throw Error(ErrorKind::kShape, "refit column out of range");
  }
  const auto c = center(design);
  const auto g = gram_of(c);
  auto fit = refit(c, g, correlations(c), {columns.begin(), columns.end()});
  fit.entry_order.assign(columns.begin(), columns.end());
  return fit;
}

LinearFit k_lasso(const WeightedDesign& design, std::size_t k) {
  validate(design);
  if (k == 0) throw Error(ErrorKind::kConfig, "k_lasso: k must be >= 1");
  if (design.rows <= k) {
    throw Error(ErrorKind::kInsufficientSamples, "k_lasso: need more than k samples");
  }
  const auto c = center(design);
  const auto g = gram_of(c);
  const auto cy = correlations(c);
  const std::size_t m = c.m;

  double y_scale = 0.0;
  for (std::size_t i = 0; i < design.rows; ++i) y_scale += design.w[i] * design.y[i] * design.y[i];
  double trace = 0.0;
  for (std::size_t j = 0; j < m; ++j) trace += g(j, j);
  const double tol = 1e-10 * std::sqrt(y_scale) * std::sqrt(std::max(trace, 1.0));

  std::vector<double> beta(m, 0.0);
  std::vector<double> corr = cy;  // X^T (y - X beta)
  std::vector<int> sign(m, 0);
  std::vector<bool> ignored(m, false);
  for (std::size_t j = 0; j < m; ++j) {
    if (!(g(j, j) > kPivotTol * std::max(trace, std::numeric_limits<double>::min()))) ignored[j] = true;
  }
  std::vector<std::size_t> active;
  std::vector<std::size_t> entry_order;
  std::vector<std::string> warnings;
  auto is_active = [&](std::size_t j) { return std::find(active.begin(), active.end(), j) != active.end(); };

  auto max_inactive = [&](std::size_t* arg) {
    double best = -1.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (ignored[j] || is_active(j)) continue;
      if (std::abs(corr[j]) > best) {
        best = std::abs(corr[j]);
        *arg = j;
      }
    }
    return best;
  };

  std::size_t next = 0;
  double big_c = max_inactive(&next);
  if (big_c > tol) {
    active.push_back(next);
    sign[next] = corr[next] >= 0 ? 1 : -1;
    entry_order.push_back(next);
  }

  const std::size_t max_steps = 8 * (m + 1) + 16;
  for (std::size_t step = 0; step < max_steps && !active.empty(); ++step) {
    if (active.size() >= k || big_c <= tol) break;
    const std::size_t a_n = active.size();
    std::vector<double> ga(a_n * a_n);
    for (std::size_t i = 0; i < a_n; ++i) {
      for (std::size_t j = 0; j < a_n; ++j) {
        ga[i * a_n + j] = sign[active[i]] * sign[active[j]] * g(active[i], active[j]);
      }
    }
    if (cholesky(ga, a_n, kPivotTol) < a_n) {
      // The most recent entrant is (numerically) in the span of the others.
      const std::size_t j = active.back();
      active.pop_back();
      beta[j] = 0.0;
      sign[j] = 0;
      ignored[j] = true;
      warnings.push_back("dropped linearly dependent column " + std::to_string(j));
      continue;
    }
    auto q = cholesky_solve(ga, a_n, std::vector<double>(a_n, 1.0));
    const double q_sum = std::accumulate(q.begin(), q.end(), 0.0);
    if (!(q_sum > 0)) break;
    const double aa = 1.0 / std::sqrt(q_sum);
    std::vector<double> dir(a_n);  // beta direction for each active column
    for (std::size_t i = 0; i < a_n; ++i) dir[i] = sign[active[i]] * aa * q[i];

    std::vector<double> a(m, 0.0);  // X^T u
    for (std::size_t j = 0; j < m; ++j) {
      double v = 0.0;
      for (std::size_t i = 0; i < a_n; ++i) v += g(j, active[i]) * dir[i];
      a[j] = v;
    }

    double gamma = big_c / aa;
    std::size_t entering = m;
    for (std::size_t j = 0; j < m; ++j) {
      if (ignored[j] || is_active(j)) continue;
      for (double cand : {(big_c - corr[j]) / (aa - a[j]), (big_c + corr[j]) / (aa + a[j])}) {
        if (cand > 1e-14 && cand < gamma) {
          gamma = cand;
          entering = j;
        }
      }
    }
    std::size_t leaving = m;
    for (std::size_t i = 0; i < a_n; ++i) {
      if (dir[i] == 0.0) continue;
      const double cand = -beta[active[i]] / dir[i];
      if (cand > 1e-14 && cand < gamma) {
        gamma = cand;
        leaving = i;
        entering = m;
      }
    }

    for (std::size_t i = 0; i < a_n; ++i) beta[active[i]] += gamma * dir[i];
    for (std::size_t j = 0; j < m; ++j) corr[j] -= gamma * a[j];
    big_c -= gamma * aa;

    if (leaving < m) {
      const std::size_t j = active[leaving];
      beta[j] = 0.0;
      sign[j] = 0;
      active.erase(active.begin() + static_cast<std::ptrdiff_t>(leaving));
    } else if (entering < m) {
      active.push_back(entering);
      sign[entering] = corr[entering] >= 0 ? 1 : -1;
      entry_order.push_back(entering);
    } else {
      break;  // reached the least-squares end of the path
    }
  }

  auto fit = refit(c, g, cy, active);
  fit.entry_order = std::move(entry_order);
  fit.warnings.insert(fit.warnings.begin(), warnings.begin(), warnings.end());
  return fit;
}

double weighted_sse(const WeightedDesign& design, const LinearFit& fit) {
  double sse = 0.0;
  for (std::size_t i = 0; i < design.rows; ++i) {
    const double r = design.y[i] - fit.predict(design.x.data() + i * design.cols);
    sse += design.w[i] * r * r;
  }
  return sse;
}

double weighted_r2(const WeightedDesign& design, const LinearFit& fit) {
  const double total = simd::sum(design.w);
  if (!(total > 0.0)) return 1.0;
  const double mean = simd::dot(design.w, design.y) / total;
  double sst = 0.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < design.rows; ++i) {
    const double r = design.y[i] - mean;
    sst += design.w[i] * r * r;
    scale += design.w[i] * design.y[i] * design.y[i];
  }
  if (sst <= 1e-24 * std::max(scale, 1.0)) return 1.0;
  return 1.0 - weighted_sse(design, fit) / sst;
}

}  // namespace locex
