#include "locex/pick.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "locex/error.hpp"
#include "locex/rng.hpp"

namespace locex {

ExplanationMatrix make_matrix(std::vector<double> w, std::size_t n, std::size_t d) {
  if (w.size() != n * d) throw Error(ErrorKind::kShape, "explanation matrix size mismatch");
  ExplanationMatrix out;
  out.n = n;
  out.d = d;
  out.w = std::move(w);
  out.importance.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double v = out.w[i * d + j];
      if (!(v >= 0.0)) throw Error(ErrorKind::kRange, "explanation matrix entries must be >= 0");
      out.importance[j] += v;
    }
  }
  for (auto& v : out.importance) v = std::sqrt(v);
  out.instance_ids.resize(n);
  return out;
}

ExplanationMatrix build_matrix(std::span<const Explanation> explanations, std::size_t d) {
  std::vector<double> w(explanations.size() * d, 0.0);
  for (std::size_t i = 0; i < explanations.size(); ++i) {
    for (const auto& f : explanations[i].features) {
      if (f.column >= d) throw Error(ErrorKind::kShape, "explanation column outside the matrix width");
      w[i * d + f.column] = std::abs(f.weight);
    }
  }
  auto out = make_matrix(std::move(w), explanations.size(), d);
  for (std::size_t i = 0; i < explanations.size(); ++i) out.instance_ids[i] = explanations[i].instance_id;
  return out;
}

ExplanationMatrix build_matrix(std::span<const std::vector<Column>> feature_lists, std::size_t d) {
  std::vector<double> w(feature_lists.size() * d, 0.0);
  for (std::size_t i = 0; i < feature_lists.size(); ++i) {
    for (Column c : feature_lists[i]) {
      if (c >= d) throw Error(ErrorKind::kShape, "feature column outside the matrix width");
      w[i * d + c] = 1.0;
    }
  }
  return make_matrix(std::move(w), feature_lists.size(), d);
}

double coverage(std::span<const std::size_t> rows, const ExplanationMatrix& w,
                std::span<const double> importance) {
  if (importance.size() != w.d) throw Error(ErrorKind::kShape, "importance length != matrix width");
  double total = 0.0;
  for (std::size_t j = 0; j < w.d; ++j) {
    for (std::size_t i : rows) {
      if (i >= w.n) throw Error(ErrorKind::kRange, "row index outside the matrix");
      if (w.at(i, j) > 0.0) {
        total += importance[j];
        break;
      }
    }
  }
  return total;
}

PickResult submodular_pick(const ExplanationMatrix& w, std::span<const double> importance,
                           std::size_t budget) {
  if (budget == 0) throw Error(ErrorKind::kConfig, "pick budget must be >= 1");
  if (importance.size() != w.d) throw Error(ErrorKind::kShape, "importance length != matrix width");
  PickResult out;
  std::vector<bool> covered(w.d, false);
  std::vector<bool> taken(w.n, false);
  double value = 0.0;
  const std::size_t target = std::min(budget, w.n);
  while (out.selected.size() < target) {
    std::size_t best = w.n;
    double best_gain = -1.0;
    for (std::size_t i = 0; i < w.n; ++i) {
      if (taken[i]) continue;
      double gain = 0.0;
      for (std::size_t j = 0; j < w.d; ++j) {
        if (!covered[j] && w.at(i, j) > 0.0) gain += importance[j];
      }
      if (gain > best_gain) {
        best_gain = gain;
        best = i;
      }
    }
    taken[best] = true;
    for (std::size_t j = 0; j < w.d; ++j) {
      if (w.at(best, j) > 0.0) covered[j] = true;
    }
    value += best_gain;
    out.selected.push_back(best);
    out.coverage_trace.push_back(value);
  }
  return out;
}

PickResult random_pick(const ExplanationMatrix& w, std::size_t budget, std::uint64_t seed) {
  if (budget == 0) throw Error(ErrorKind::kConfig, "pick budget must be >= 1");
  Rng rng(seed);
  PickResult out;
  out.selected = sample_without_replacement(w.n, std::min(budget, w.n), rng);
  std::vector<std::size_t> so_far;
  for (auto i : out.selected) {
    so_far.push_back(i);
    out.coverage_trace.push_back(coverage(so_far, w));
  }
  return out;
}

OptimalPick brute_force_pick(const ExplanationMatrix& w, std::span<const double> importance,
                             std::size_t budget) {
  if (w.n > kBruteForceMaxRows) {
    throw Error(ErrorKind::kSize, "brute-force pick limited to " + std::to_string(kBruteForceMaxRows) + " rows");
  }
  if (importance.size() != w.d) throw Error(ErrorKind::kShape, "importance length != matrix width");
  // Row-membership bitmask per column.
  std::vector<std::uint32_t> column_rows(w.d, 0);
  for (std::size_t i = 0; i < w.n; ++i) {
    for (std::size_t j = 0; j < w.d; ++j) {
      if (w.at(i, j) > 0.0) column_rows[j] |= 1u << i;
    }
  }
  OptimalPick best;
  best.value = -1.0;
  std::uint32_t best_mask = 0;
  const std::uint32_t limit = 1u << w.n;
  for (std::uint32_t mask = 0; mask < limit; ++mask) {
    if (static_cast<std::size_t>(std::popcount(mask)) > budget) continue;
    double value = 0.0;
    for (std::size_t j = 0; j < w.d; ++j) {
      if (column_rows[j] & mask) value += importance[j];
    }
    if (value > best.value) {
      best.value = value;
      best_mask = mask;
    }
  }
  for (std::size_t i = 0; i < w.n; ++i) {
    if (best_mask & (1u << i)) best.selected.push_back(i);
  }
  return best;
}

}  // namespace locex
