#pragma once

// Simulated-user experiments: recall of gold features, trust assessment of
// individual predictions, and choosing between two classifiers from a few
// explanations.

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "locex/data.hpp"
#include "locex/explain.hpp"
#include "locex/models.hpp"
#include "locex/pick.hpp"

namespace locex {

enum class ExplainerKind { kLime, kGreedy, kRandom };

std::string_view to_string(ExplainerKind kind);
ExplainerKind parse_explainer(std::string_view name);

struct MetricSummary {
  double mean = 0.0;
  double std_error = 0.0;  // sample standard deviation / sqrt(count)
  std::size_t count = 0;
};

MetricSummary summarize(std::span<const double> values);

struct ExperimentReport {
  std::string kind;
  nlohmann::json config;
  std::vector<nlohmann::json> runs;  // flat objects, one per run / instance / pair
  std::map<std::string, MetricSummary> aggregate;

  nlohmann::json to_json() const;
  // Per-run rows; header is the sorted union of keys.
  std::string runs_csv() const;
  // "metric,mean,std_error,count" rows.
  std::string aggregate_csv() const;
};

// Runs body(i) for i in [0, n) on up to `threads` workers (0 = hardware
// concurrency). Results must be written to per-index slots.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& body);

// ------------------------------------------------------------------- trust

// Trustworthy iff removing the untrustworthy words leaves the predicted
// class unchanged.
bool trust_oracle(const ProbabilityModel& f, const CountVector& x,
                  std::span<const Column> untrustworthy);

// Surrogate rule: trusted iff g(x') and g(x' minus the untrustworthy words it
// lists) fall on the same side of `threshold`.
bool simulated_user_trusts(const Explanation& e, std::span<const Column> untrustworthy,
                           double threshold = 0.5);
// Feature-list rule: trusted iff no listed word is untrustworthy.
bool simulated_user_trusts(std::span<const Column> features, std::span<const Column> untrustworthy);

// F1 with "trustworthy" as the positive class. 1 when there are no
// positives on either side.
double trust_f1(const std::vector<bool>& oracle, const std::vector<bool>& simulated);

// ------------------------------------------------------------ experiments

struct FaithfulnessConfig {
  std::size_t k = 10;
  std::size_t n_samples = 5000;
  double sigma = 0.25;
  std::uint64_t seed = 0;
  double train_frac = 0.8;
  std::size_t max_model_features = 10;
  std::size_t tree_max_depth = 12;
  unsigned threads = 0;
};

// Trains a sparse logistic regression and a path-limited decision tree and
// scores lime / greedy / random recall of gold features on the test split.
// Aggregate keys: "<model>/<explainer>" with model in {sparse_lr, decision_tree}.
ExperimentReport faithfulness_experiment(const LabeledCorpus& corpus, const FaithfulnessConfig& cfg);
double faithfulness_recall(const std::string& model_kind, ExplainerKind explainer,
                           const LabeledCorpus& corpus, const FaithfulnessConfig& cfg);

struct TrustConfig {
  std::size_t runs = 25;
  std::size_t k = 10;
  std::size_t n_samples = 5000;
  double sigma = 0.25;
  std::uint64_t seed = 0;
  double train_frac = 0.8;
  double untrustworthy_fraction = 0.25;
  std::vector<ModelSpec> classifiers = default_classifiers();
  unsigned threads = 0;

  static std::vector<ModelSpec> default_classifiers();
};

// Aggregate keys: "<classifier>/<explainer>" (mean F1 over runs).
ExperimentReport trust_f1_experiment(const LabeledCorpus& corpus, const TrustConfig& cfg);

struct SelectionConfig {
  std::size_t n_pairs = 100;
  std::vector<std::size_t> budgets{5, 10, 15, 20, 25, 30};
  std::size_t k = 10;
  std::size_t n_samples = 2000;
  double sigma = 0.25;
  std::uint64_t seed = 0;
  double val_gap = 0.01;   // max |validation accuracy difference|
  double test_gap = 0.03;  // min |test accuracy difference|
  std::size_t max_attempts = 200;  // forests trained per pair search
  std::size_t n_trees = 30;
  double train_frac = 0.8;  // (train + val) vs test
  double val_frac = 0.2;    // val share of train + val
  unsigned threads = 0;

  static SelectionConfig desk() { return {}; }
  // 0.1% / 5% thresholds and 800 pairs.
  static SelectionConfig full_scale();
};

// Aggregate keys: "<pick>-<explainer>@<B>", e.g. "SP-lime@10", "RP-greedy@5";
// value = fraction of pairs where the simulated user chose the classifier
// with higher test accuracy (ties count one half).
ExperimentReport model_selection_experiment(const LabeledCorpus& corpus, const SelectionConfig& cfg);

// method,B,mean,std_error rows from a model-selection report.
std::string selection_plot_csv(const ExperimentReport& report);

}  // namespace locex
