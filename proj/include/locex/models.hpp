#pragma once

// Black-box classifier contract and the built-in bag-of-words classifiers.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "locex/data.hpp"
#include "locex/text.hpp"

namespace locex {

using Json = nlohmann::json;

// Probability of class 1 for a count vector. Implementations are immutable
// after training and safe to call concurrently.
class ProbabilityModel {
 public:
  virtual ~ProbabilityModel() = default;

  virtual double predict_prob(const CountVector& x) const = 0;
  virtual std::size_t feature_dim() const = 0;
  virtual std::string kind() const = 0;
  virtual Json to_json() const = 0;

  // Batch evaluation of `base` under keep-masks. `masks` is n x m row-major
  // with m = base.entries.size(); a 0 in column i zeroes base.entries[i].
  // The default builds each masked vector and calls predict_prob.
  virtual std::vector<double> predict_masked(const CountVector& base,
                                             std::span<const double> masks) const;

  // Columns whose counts the model never reads (sorted).
  virtual std::span<const Column> ignored_columns() const { return {}; }
};

using ModelPtr = std::shared_ptr<const ProbabilityModel>;

// argmax over (1 - p, p); a tie resolves to class 0.
inline int predicted_class(double p) noexcept { return p > 0.5 ? 1 : 0; }

double accuracy(const ProbabilityModel& model, const FeatureData& data);

class LinearModel final : public ProbabilityModel {
 public:
  LinearModel(std::string kind, std::vector<double> weights, double bias, Json params);

  double predict_prob(const CountVector& x) const override;
  std::vector<double> predict_masked(const CountVector& base,
                                     std::span<const double> masks) const override;
  std::size_t feature_dim() const override { return weights_.size(); }
  std::string kind() const override { return kind_; }
  Json to_json() const override;

  const std::vector<double>& weights() const noexcept { return weights_; }
  double bias() const noexcept { return bias_; }
  // Columns with |w| > tol, ascending.
  std::vector<Column> nonzero_columns(double tol = 0.0) const;

 private:
  std::string kind_;
  std::vector<double> weights_;
  double bias_;
  Json params_;
};

struct TreeNode {
  // Internal: count(feature) <= threshold goes left. Leaf: left == right == -1.
  std::int32_t feature = -1;
  double threshold = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  double value = 0.0;  // class-1 fraction of the training samples reaching the node
  std::uint32_t samples = 0;

  bool is_leaf() const noexcept { return left < 0; }
};

class DecisionTree final : public ProbabilityModel {
 public:
  DecisionTree(std::vector<TreeNode> nodes, std::size_t dim, Json params);

  double predict_prob(const CountVector& x) const override;
  std::vector<double> predict_masked(const CountVector& base,
                                     std::span<const double> masks) const override;
  std::size_t feature_dim() const override { return dim_; }
  std::string kind() const override { return "decision_tree"; }
  Json to_json() const override;

  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  std::size_t depth() const;
  // Distinct split features on the root-to-leaf path of x, ascending.
  std::vector<Column> path_features(const CountVector& x) const;

  template <typename CountOf>
  double leaf_value(CountOf&& count_of) const {
    std::int32_t at = 0;
    while (!nodes_[at].is_leaf()) {
      const auto& n = nodes_[at];
      at = count_of(static_cast<Column>(n.feature)) <= n.threshold ? n.left : n.right;
    }
    return nodes_[at].value;
  }

 private:
  std::vector<TreeNode> nodes_;
  std::size_t dim_;
  Json params_;
};

class RandomForest final : public ProbabilityModel {
 public:
  RandomForest(std::vector<DecisionTree> trees, std::size_t dim, Json params);

  double predict_prob(const CountVector& x) const override;
  std::vector<double> predict_masked(const CountVector& base,
                                     std::span<const double> masks) const override;
  std::size_t feature_dim() const override { return dim_; }
  std::string kind() const override { return "random_forest"; }
  Json to_json() const override;

  const std::vector<DecisionTree>& trees() const noexcept { return trees_; }

 private:
  std::vector<DecisionTree> trees_;
  std::size_t dim_;
  Json params_;
};

// Cosine k-nearest neighbours over raw counts.
class KnnModel final : public ProbabilityModel {
 public:
  KnnModel(FeatureData train, std::size_t k);

  double predict_prob(const CountVector& x) const override;
  std::vector<double> predict_masked(const CountVector& base,
                                     std::span<const double> masks) const override;
  std::size_t feature_dim() const override { return train_.dim; }
  std::string kind() const override { return "knn"; }
  Json to_json() const override;

  std::size_t k() const noexcept { return k_; }

 private:
  double vote(std::span<const double> dots, double query_sq_norm) const;

  FeatureData train_;
  std::size_t k_;
  std::vector<double> norms_;
};

// Wraps a model trained with some columns zeroed and zeroes the same
// columns at inference, so predictions never depend on them.
class MaskedFeatureModel final : public ProbabilityModel {
 public:
  MaskedFeatureModel(ModelPtr inner, std::vector<Column> removed);

  double predict_prob(const CountVector& x) const override;
  std::vector<double> predict_masked(const CountVector& base,
                                     std::span<const double> masks) const override;
  std::size_t feature_dim() const override { return inner_->feature_dim(); }
  std::string kind() const override { return inner_->kind(); }
  Json to_json() const override;
  std::span<const Column> ignored_columns() const override { return removed_; }

  const ProbabilityModel& inner() const noexcept { return *inner_; }

 private:
  ModelPtr inner_;
  std::vector<Column> removed_;
};

// Adapter for externally supplied probability functions (e.g. an SVM
// living in another process). Not serializable.
class FunctionModel final : public ProbabilityModel {
 public:
  using Fn = std::function<double(const CountVector&)>;
  FunctionModel(Fn fn, std::size_t dim, std::string kind = "external");

  double predict_prob(const CountVector& x) const override;
  std::size_t feature_dim() const override { return dim_; }
  std::string kind() const override { return kind_; }
  Json to_json() const override;

 private:
  Fn fn_;
  std::size_t dim_;
  std::string kind_;
};

// ---------------------------------------------------------------- training

struct LogRegParams {
  double l2 = 1e-2;
  int epochs = 500;
  double lr = 1.0;  // upper bound on the step; the Lipschitz step is used if smaller
  std::uint64_t seed = 0;
};

std::shared_ptr<const LinearModel> train_logreg_l2(const FeatureData& train,
                                                   const LogRegParams& params,
                                                   std::vector<double>* loss_trace = nullptr);

// Mean log-loss plus (l2/2)|w|^2, the objective train_logreg_l2 descends.
double logreg_objective(const LinearModel& model, const FeatureData& data, double l2);

struct SparseLogRegParams {
  std::size_t k_max = 10;
  std::size_t path_length = 30;
  double min_ratio = 1e-3;  // smallest penalty as a fraction of the zero-solution penalty
  int max_iters = 400;
  double tol = 1e-7;
  std::size_t refine_steps = 8;  // bisections after a step overshoots k_max
  std::uint64_t seed = 0;
};

struct SparseLogRegFit {
  std::shared_ptr<const LinearModel> model;
  std::vector<Column> gold;  // nonzero-weight columns
  double penalty = 0.0;
};

SparseLogRegFit train_sparse_logreg(const FeatureData& train, const SparseLogRegParams& params);

struct TreeParams {
  std::size_t max_active_features = 10;
  std::size_t max_depth = 12;
  std::size_t min_samples_split = 2;
  std::size_t min_samples_leaf = 1;
  // Features evaluated per split; 0 means every eligible feature.
  std::size_t max_features = 0;
  std::uint64_t seed = 0;
};

std::shared_ptr<const DecisionTree> train_decision_tree(const FeatureData& train,
                                                        const TreeParams& params);

std::shared_ptr<const KnnModel> train_knn(const FeatureData& train, std::size_t k);

struct ForestParams {
  std::size_t n_trees = 30;
  std::size_t max_depth = 64;
  std::size_t min_samples_leaf = 1;
  bool bootstrap = true;
  std::uint64_t seed = 0;
};

std::shared_ptr<const RandomForest> train_random_forest(const FeatureData& train,
                                                        const ForestParams& params);

// Per-instance gold features: nonzero weights (linear) or decision-path
// features (tree) that are present in x. nullopt for other model kinds.
std::optional<std::vector<Column>> gold_features(const ProbabilityModel& model,
                                                 const CountVector& x);

// Kind + hyperparameters, enough to retrain a model deterministically.
struct ModelSpec {
  std::string kind;  // logreg | sparse_logreg | decision_tree | knn | random_forest
  Json params = Json::object();
  std::uint64_t seed = 0;

  Json to_json() const;
  static ModelSpec from_json(const Json& j);
};

bool is_supported_kind(const std::string& kind);
ModelPtr train_model(const ModelSpec& spec, const FeatureData& train);

// Retrain `spec` with `removed` columns zeroed in every training row; the
// result ignores those columns at inference.
ModelPtr retrain_without(const ModelSpec& spec, std::span<const Column> removed,
                         const FeatureData& train);

// Versioned JSON model document.
Json model_document(const ProbabilityModel& model, std::uint64_t vocab_hash);
ModelPtr model_from_document(const Json& doc);

}  // namespace locex
