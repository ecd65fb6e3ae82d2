#pragma once

// Local surrogate explanations: perturbation sampling around an instance,
// locality weighting, K-LASSO fitting, plus the greedy and random baseline
// explainers.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "locex/klasso.hpp"
#include "locex/models.hpp"
#include "locex/text.hpp"

namespace locex {

enum class DistanceKind { kCosine };

struct KernelConfig {
  double sigma = 0.25;
  DistanceKind distance = DistanceKind::kCosine;
};

// exp(-distance^2 / sigma^2)
double kernel_weight(double distance, const KernelConfig& cfg);

// Rows of the local fitting problem. Masks are over x'.support: row r,
// column i says whether x'.support[i] was kept.
struct SurrogateDataset {
  InterpretableVector xprime;
  std::vector<double> masks;
  std::vector<double> labels;
  std::vector<double> weights;
  std::vector<double> distances;

  std::size_t rows() const noexcept { return labels.size(); }
  std::size_t width() const noexcept { return xprime.active(); }
  WeightedDesign design() const noexcept {
    return {masks, rows(), width(), labels, weights};
  }
  PerturbedSample sample(std::size_t row) const;
};

// Labels are f(masked x) for class 1, or 1 - f for target_class 0. Columns
// the model ignores are left out of x'.
SurrogateDataset build_surrogate(const ProbabilityModel& f, const CountVector& x, std::size_t n,
                                 const KernelConfig& cfg, std::uint64_t seed, int target_class = 1);
SurrogateDataset build_surrogate(const ProbabilityModel& f, const Document& doc,
                                 const Vocabulary& vocab, std::size_t n, const KernelConfig& cfg,
                                 std::uint64_t seed, int target_class = 1);

struct ExplanationConfig {
  std::size_t k = 10;
  std::size_t n = 5000;
  KernelConfig kernel;
  std::uint64_t seed = 0;
  int target_class = 1;
};

struct FeatureWeight {
  Column column = 0;
  std::string token;
  double weight = 0.0;
};

struct Explanation {
  std::string instance_id;
  int target_class = 1;
  std::vector<FeatureWeight> features;  // by |weight| descending, then column
  double intercept = 0.0;
  double fidelity = 1.0;
  ExplanationConfig config;
  std::vector<std::string> warnings;

  // g(z') = intercept + sum of weights of features present in z'.
  double evaluate(const InterpretableVector& zprime) const;
  // g with every listed feature switched off (all others on).
  double evaluate_without(std::span<const Column> removed) const;
  std::vector<Column> columns() const;

  nlohmann::json to_json() const;
  static Explanation from_json(const nlohmann::json& j);
};

LinearFit k_lasso(const SurrogateDataset& z, std::size_t k);

Explanation explain_instance(const ProbabilityModel& f, const CountVector& x, const Vocabulary& vocab,
                             const ExplanationConfig& cfg, std::string instance_id = {});
Explanation explain_instance(const ProbabilityModel& f, const Document& doc, const Vocabulary& vocab,
                             const ExplanationConfig& cfg);

// Removes, one at a time, the active word whose removal lowers the
// predicted-class probability the most (ties: lower column) until the
// predicted class flips or k words are gone. Returns the removal order.
std::vector<Column> greedy_explain(const ProbabilityModel& f, const CountVector& x, std::size_t k);

// min(k, m) active words drawn uniformly without replacement, ascending.
std::vector<Column> random_explain(const InterpretableVector& xprime, std::size_t k, std::uint64_t seed);

}  // namespace locex
