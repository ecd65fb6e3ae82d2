#include "locex/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "locex/error.hpp"
#include "locex/rng.hpp"
#include "locex/simd.hpp"

namespace locex {
namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + e^z) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

std::size_t find_entry(const CountVector& x, Column c) {
  auto it = std::lower_bound(x.entries.begin(), x.entries.end(), c,
                             [](const CountVector::Entry& e, Column col) { return e.column < col; });
  if (it == x.entries.end() || it->column != c) return std::numeric_limits<std::size_t>::max();
  return static_cast<std::size_t>(it - x.entries.begin());
}

CountVector apply_mask(const CountVector& base, const double* mask) {
  CountVector out;
  out.dim = base.dim;
  for (std::size_t i = 0; i < base.entries.size(); ++i) {
    if (mask[i] != 0.0) out.entries.push_back(base.entries[i]);
  }
  return out;
}

void check_masks(const CountVector& base, std::span<const double> masks) {
  const std::size_t m = base.entries.size();
  if (m == 0 ? !masks.empty() : masks.size() % m != 0) {
    throw Error(ErrorKind::kShape, "mask matrix does not match the base vector");
  }
}

std::size_t mask_rows(const CountVector& base, std::span<const double> masks) {
  check_masks(base, masks);
  return base.entries.empty() ? 0 : masks.size() / base.entries.size();
}

}  // namespace

std::vector<double> ProbabilityModel::predict_masked(const CountVector& base,
                                                     std::span<const double> masks) const {
  const std::size_t n = mask_rows(base, masks);
  const std::size_t m = base.entries.size();
  std::vector<double> out(n);
  for (std::size_t r = 0; r < n; ++r) out[r] = predict_prob(apply_mask(base, masks.data() + r * m));
  return out;
}

double accuracy(const ProbabilityModel& model, const FeatureData& data) {
  if (data.size() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (predicted_class(model.predict_prob(data.rows[i])) == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

// ------------------------------------------------------------------ linear

LinearModel::LinearModel(std::string kind, std::vector<double> weights, double bias, Json params)
    : kind_(std::move(kind)), weights_(std::move(weights)), bias_(bias), params_(std::move(params)) {}

double LinearModel::predict_prob(const CountVector& x) const {
  std::vector<double> contrib;
  contrib.reserve(x.entries.size());
  for (const auto& e : x.entries) {
    contrib.push_back(e.column < weights_.size() ? weights_[e.column] * e.count : 0.0);
  }
  return sigmoid(bias_ + simd::sum(contrib));
}

std::vector<double> LinearModel::predict_masked(const CountVector& base,
                                                std::span<const double> masks) const {
  const std::size_t n = mask_rows(base, masks);
  const std::size_t m = base.entries.size();
  std::vector<double> contrib(m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto& e = base.entries[i];
    contrib[i] = e.column < weights_.size() ? weights_[e.column] * e.count : 0.0;
  }
  std::vector<double> out(n);
  for (std::size_t r = 0; r < n; ++r) {
    out[r] = sigmoid(bias_ + simd::dot(masks.subspan(r * m, m), contrib));
  }
  return out;
}

Json LinearModel::to_json() const {
  return Json{{"kind", kind_}, {"params", params_}, {"bias", bias_}, {"weights", weights_}};
}

std::vector<Column> LinearModel::nonzero_columns(double tol) const {
  std::vector<Column> out;
  for (std::size_t c = 0; c < weights_.size(); ++c) {
    if (std::abs(weights_[c]) > tol) out.push_back(static_cast<Column>(c));
  }
  return out;
}

// ------------------------------------------------------------------- trees

DecisionTree::DecisionTree(std::vector<TreeNode> nodes, std::size_t dim, Json params)
    : nodes_(std::move(nodes)), dim_(dim), params_(std::move(params)) {
  if (nodes_.empty()) throw Error(ErrorKind::kShape, "decision tree without nodes");
}

double DecisionTree::predict_prob(const CountVector& x) const {
  return leaf_value([&x](Column c) { return static_cast<double>(x.count(c)); });
}

namespace {

template <typename Tree>
double masked_leaf(const Tree& tree, const CountVector& base, const double* mask) {
  return tree.leaf_value([&](Column c) {
    const std::size_t pos = find_entry(base, c);
    if (pos == std::numeric_limits<std::size_t>::max() || mask[pos] == 0.0) return 0.0;
    return static_cast<double>(base.entries[pos].count);
  });
}

}  // namespace

std::vector<double> DecisionTree::predict_masked(const CountVector& base,
                                                 std::span<const double> masks) const {
  const std::size_t n = mask_rows(base, masks);
  const std::size_t m = base.entries.size();
  std::vector<double> out(n);
  for (std::size_t r = 0; r < n; ++r) out[r] = masked_leaf(*this, base, masks.data() + r * m);
  return out;
}

std::size_t DecisionTree::depth() const {
  std::vector<std::pair<std::int32_t, std::size_t>> stack{{0, 0}};
  std::size_t best = 0;
  while (!stack.empty()) {
    auto [at, d] = stack.back();
    stack.pop_back();
    best = std::max(best, d);
    if (!nodes_[at].is_leaf()) {
      stack.push_back({nodes_[at].left, d + 1});
      stack.push_back({nodes_[at].right, d + 1});
    }
  }
  return best;
}

std::vector<Column> DecisionTree::path_features(const CountVector& x) const {
  std::vector<Column> out;
  std::int32_t at = 0;
  while (!nodes_[at].is_leaf()) {
    const auto& n = nodes_[at];
    out.push_back(static_cast<Column>(n.feature));
    at = x.count(static_cast<Column>(n.feature)) <= n.threshold ? n.left : n.right;
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

Json DecisionTree::to_json() const {
  Json nodes = Json::array();
  for (const auto& n : nodes_) {
    nodes.push_back(Json::array({n.feature, n.threshold, n.left, n.right, n.value, n.samples}));
  }
  return Json{{"kind", "decision_tree"}, {"params", params_}, {"dim", dim_}, {"nodes", nodes}};
}

RandomForest::RandomForest(std::vector<DecisionTree> trees, std::size_t dim, Json params)
    : trees_(std::move(trees)), dim_(dim), params_(std::move(params)) {
  if (trees_.empty()) throw Error(ErrorKind::kShape, "random forest without trees");
}

double RandomForest::predict_prob(const CountVector& x) const {
  double acc = 0.0;
  for (const auto& t : trees_) acc += t.predict_prob(x);
  return acc / static_cast<double>(trees_.size());
}

std::vector<double> RandomForest::predict_masked(const CountVector& base,
                                                 std::span<const double> masks) const {
  const std::size_t n = mask_rows(base, masks);
  const std::size_t m = base.entries.size();
  std::vector<double> out(n, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    double acc = 0.0;
    for (const auto& t : trees_) acc += masked_leaf(t, base, masks.data() + r * m);
    out[r] = acc / static_cast<double>(trees_.size());
  }
  return out;
}

Json RandomForest::to_json() const {
  Json trees = Json::array();
  for (const auto& t : trees_) trees.push_back(t.to_json());
  return Json{{"kind", "random_forest"}, {"params", params_}, {"dim", dim_}, {"trees", trees}};
}

// --------------------------------------------------------------------- knn

KnnModel::KnnModel(FeatureData train, std::size_t k) : train_(std::move(train)), k_(k) {
  if (k_ == 0) throw Error(ErrorKind::kConfig, "knn: k must be >= 1");
  if (k_ > train_.size()) throw Error(ErrorKind::kConfig, "knn: k exceeds the training set size");
  norms_.reserve(train_.size());
  for (const auto& row : train_.rows) norms_.push_back(std::sqrt(row.squared_norm()));
}

double KnnModel::vote(std::span<const double> dots, double query_sq_norm) const {
  const std::size_t n = train_.size();
  const double qn = std::sqrt(query_sq_norm);
  std::vector<std::pair<double, std::size_t>> dist(n);
  for (std::size_t t = 0; t < n; ++t) {
    const double denom = qn * norms_[t];
    dist[t] = {denom > 0.0 ? 1.0 - dots[t] / denom : 1.0, t};
  }
  auto kth = dist.begin() + static_cast<std::ptrdiff_t>(k_);
  std::nth_element(dist.begin(), kth - 1, dist.end());
  std::size_t positives = 0;
  for (auto it = dist.begin(); it != kth; ++it) positives += train_.labels[it->second] == 1 ? 1 : 0;
  return static_cast<double>(positives) / static_cast<double>(k_);
}

double KnnModel::predict_prob(const CountVector& x) const {
  std::vector<double> dots(train_.size(), 0.0);
  for (const auto& e : x.entries) {
    for (std::size_t t = 0; t < train_.size(); ++t) {
      dots[t] += static_cast<double>(e.count) * train_.rows[t].count(e.column);
    }
  }
  return vote(dots, x.squared_norm());
}

std::vector<double> KnnModel::predict_masked(const CountVector& base,
                                             std::span<const double> masks) const {
  const std::size_t n = mask_rows(base, masks);
  const std::size_t m = base.entries.size();
  const std::size_t n_train = train_.size();
  // Column i holds count_i * train count of the same word for every
  // training row; integer-valued, so every summation order is exact.
  std::vector<double> contrib(m * n_train, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const auto& e = base.entries[i];
    for (std::size_t t = 0; t < n_train; ++t) {
      contrib[i * n_train + t] = static_cast<double>(e.count) * train_.rows[t].count(e.column);
    }
  }
  std::vector<double> out(n);
  std::vector<double> dots(n_train);
  const std::span<const double> all(contrib);
  for (std::size_t r = 0; r < n; ++r) {
    std::fill(dots.begin(), dots.end(), 0.0);
    double sq = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      if (masks[r * m + i] == 0.0) continue;
      simd::axpy(1.0, all.subspan(i * n_train, n_train), dots);
      const double c = base.entries[i].count;
      sq += c * c;
    }
    out[r] = vote(dots, sq);
  }
  return out;
}

Json KnnModel::to_json() const {
  Json rows = Json::array();
  for (const auto& row : train_.rows) {
    Json r = Json::array();
    for (const auto& e : row.entries) r.push_back(Json::array({e.column, e.count}));
    rows.push_back(std::move(r));
  }
  return Json{{"kind", "knn"},       {"params", {{"k", k_}}}, {"dim", train_.dim},
              {"k", k_},             {"rows", rows},          {"labels", train_.labels}};
}

// ------------------------------------------------------------------ masked

MaskedFeatureModel::MaskedFeatureModel(ModelPtr inner, std::vector<Column> removed)
    : inner_(std::move(inner)), removed_(std::move(removed)) {
  std::sort(removed_.begin(), removed_.end());
  removed_.erase(std::unique(removed_.begin(), removed_.end()), removed_.end());
}

double MaskedFeatureModel::predict_prob(const CountVector& x) const {
  return inner_->predict_prob(drop_columns(x, removed_));
}

std::vector<double> MaskedFeatureModel::predict_masked(const CountVector& base,
                                                       std::span<const double> masks) const {
  const std::size_t n = mask_rows(base, masks);
  const std::size_t m = base.entries.size();
  std::vector<std::size_t> kept;
  CountVector reduced;
  reduced.dim = base.dim;
  for (std::size_t i = 0; i < m; ++i) {
    if (!std::binary_search(removed_.begin(), removed_.end(), base.entries[i].column)) {
      kept.push_back(i);
      reduced.entries.push_back(base.entries[i]);
    }
  }
  if (kept.size() == m) return inner_->predict_masked(base, masks);
  if (kept.empty()) return std::vector<double>(n, inner_->predict_prob(reduced));
  std::vector<double> sub(n * kept.size());
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < kept.size(); ++j) sub[r * kept.size() + j] = masks[r * m + kept[j]];
  }
  return inner_->predict_masked(reduced, sub);
}

Json MaskedFeatureModel::to_json() const {
  return Json{{"kind", "masked"}, {"removed", removed_}, {"inner", inner_->to_json()}};
}

FunctionModel::FunctionModel(Fn fn, std::size_t dim, std::string kind)
    : fn_(std::move(fn)), dim_(dim), kind_(std::move(kind)) {}

double FunctionModel::predict_prob(const CountVector& x) const {
  return std::clamp(fn_(x), 0.0, 1.0);
}

Json FunctionModel::to_json() const {
  throw Error(ErrorKind::kConfig, "external model '" + kind_ + "' cannot be serialized");
}

// --------------------------------------------------------------- logistic

namespace {

void check_two_classes(const FeatureData& data) {
  bool has0 = false;
  bool has1 = false;
  for (int y : data.labels) (y == 1 ? has1 : has0) = true;
  if (!has0 || !has1) throw Error(ErrorKind::kDegenerateLabels, "training data has a single class");
}

// Largest eigenvalue of X^T X / n by power iteration from the all-ones vector.
double gram_spectral_bound(const FeatureData& data) {
  const std::size_t d = data.dim;
  const double n = static_cast<double>(data.size());
  std::vector<double> v(d, 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(d, 1))));
  std::vector<double> next(d);
  double lambda = 0.0;
  for (int it = 0; it < 60; ++it) {
    std::fill(next.begin(), next.end(), 0.0);
    for (const auto& row : data.rows) {
      double xv = 0.0;
      for (const auto& e : row.entries) xv += e.count * v[e.column];
      for (const auto& e : row.entries) next[e.column] += e.count * xv;
    }
    double norm = std::sqrt(std::inner_product(next.begin(), next.end(), next.begin(), 0.0));
    if (norm == 0.0) return 0.0;
    lambda = norm / n;
    for (std::size_t j = 0; j < d; ++j) v[j] = next[j] / norm;
  }
  // Power iteration approaches from below.
  return lambda * 1.05;
}

struct LogisticState {
  std::vector<double> w;
  double b = 0.0;
};

double prior_logit(const FeatureData& data) {
  double pos = 0;
  for (int y : data.labels) pos += y;
  const double p = pos / static_cast<double>(data.size());
  return std::log(p / (1.0 - p));
}

// Mean log-loss and its gradient.
double logistic_loss_grad(const FeatureData& data, const LogisticState& s, std::vector<double>* gw,
                          double* gb) {
  const double n = static_cast<double>(data.size());
  double loss = 0.0;
  if (gw) std::fill(gw->begin(), gw->end(), 0.0);
  double b_acc = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    double z = s.b;
    for (const auto& e : data.rows[i].entries) z += s.w[e.column] * e.count;
    const double y = data.labels[i];
    loss += softplus(z) - y * z;
    if (gw) {
      const double r = sigmoid(z) - y;
      for (const auto& e : data.rows[i].entries) (*gw)[e.column] += r * e.count;
      b_acc += r;
    }
  }
  if (gw) {
    for (auto& g : *gw) g /= n;
    *gb = b_acc / n;
  }
  return loss / n;
}

}  // namespace

double logreg_objective(const LinearModel& model, const FeatureData& data, double l2) {
  LogisticState s{model.weights(), model.bias()};
  double reg = 0.0;
  for (double w : s.w) reg += w * w;
  return logistic_loss_grad(data, s, nullptr, nullptr) + 0.5 * l2 * reg;
}

std::shared_ptr<const LinearModel> train_logreg_l2(const FeatureData& train,
                                                   const LogRegParams& params,
                                                   std::vector<double>* loss_trace) {
  if (params.l2 < 0 || params.epochs < 0 || !(params.lr > 0)) {
    throw Error(ErrorKind::kConfig, "logreg: invalid hyperparameters");
  }
  check_two_classes(train);
  const std::size_t d = train.dim;
  LogisticState s{std::vector<double>(d, 0.0), prior_logit(train)};
  // Block-diagonal majorizer of the log-loss Hessian: 2 * diag(X^TX/4n, 1/4).
  const double step_w = std::min(params.lr, 1.0 / (gram_spectral_bound(train) / 2.0 + params.l2));
  const double step_b = std::min(params.lr, 2.0);
  std::vector<double> gw(d);
  double gb = 0.0;
  auto objective = [&](double loss) {
    double reg = 0.0;
    for (double w : s.w) reg += w * w;
    return loss + 0.5 * params.l2 * reg;
  };
  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    const double loss = logistic_loss_grad(train, s, &gw, &gb);
    if (loss_trace) loss_trace->push_back(objective(loss));
    for (std::size_t j = 0; j < d; ++j) s.w[j] -= step_w * (gw[j] + params.l2 * s.w[j]);
    s.b -= step_b * gb;
  }
  if (loss_trace) loss_trace->push_back(objective(logistic_loss_grad(train, s, nullptr, nullptr)));
  Json p{{"l2", params.l2}, {"epochs", params.epochs}, {"lr", params.lr}, {"seed", params.seed}};
  return std::make_shared<LinearModel>("logreg", std::move(s.w), s.b, std::move(p));
}

SparseLogRegFit train_sparse_logreg(const FeatureData& train, const SparseLogRegParams& params) {
  if (params.k_max == 0 || params.k_max > train.dim) {
    throw Error(ErrorKind::kConfig, "sparse_logreg: k_max must lie in [1, d]");
  }
  if (params.path_length < 2 || !(params.min_ratio > 0 && params.min_ratio < 1)) {
    throw Error(ErrorKind::kConfig, "sparse_logreg: invalid penalty path");
  }
  check_two_classes(train);
  const std::size_t d = train.dim;
  LogisticState s{std::vector<double>(d, 0.0), prior_logit(train)};
  std::vector<double> gw(d);
  double gb = 0.0;
  logistic_loss_grad(train, s, &gw, &gb);
  double lambda_max = 0.0;
  for (double g : gw) lambda_max = std::max(lambda_max, std::abs(g));

  std::vector<double> penalties;
  for (std::size_t t = 0; t < params.path_length; ++t) {
    const double frac = static_cast<double>(t) / static_cast<double>(params.path_length - 1);
    penalties.push_back(lambda_max * std::pow(params.min_ratio, frac));
  }
  if (params.k_max >= d) penalties.push_back(0.0);

  const double step_w = 1.0 / (gram_spectral_bound(train) / 2.0);
  const double step_b = 2.0;
  const double zero_tol = params.k_max >= d ? 1e-8 : 0.0;

  // Proximal gradient at one penalty, warm-started from `st`; returns nnz.
  auto solve = [&](double lambda, LogisticState& st) {
    for (int it = 0; it < params.max_iters; ++it) {
      logistic_loss_grad(train, st, &gw, &gb);
      double delta = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double v = st.w[j] - step_w * gw[j];
        const double shrink = step_w * lambda;
        const double next = v > shrink ? v - shrink : (v < -shrink ? v + shrink : 0.0);
        delta = std::max(delta, std::abs(next - st.w[j]));
        st.w[j] = next;
      }
      const double nb = st.b - step_b * gb;
      delta = std::max(delta, std::abs(nb - st.b));
      st.b = nb;
      if (delta < params.tol) break;
    }
    return static_cast<std::size_t>(
        std::count_if(st.w.begin(), st.w.end(), [&](double w) { return std::abs(w) > zero_tol; }));
  };

  std::optional<LogisticState> best;
  double best_penalty = 0.0;
  std::optional<double> overshoot;
  for (double lambda : penalties) {
    if (solve(lambda, s) > params.k_max) {
      overshoot = lambda;
      break;
    }
    best = s;
    best_penalty = lambda;
  }
  // A path step can add several features at once; bisect (in log space)
  // between the last admissible penalty and the first one over the bound.
  if (best && overshoot && *overshoot > 0.0) {
    double hi = best_penalty;
    double lo = *overshoot;
    for (std::size_t r = 0; r < params.refine_steps; ++r) {
      const double mid = std::sqrt(hi * lo);
      LogisticState trial = *best;
      if (solve(mid, trial) > params.k_max) {
        lo = mid;
      } else {
        best = std::move(trial);
        best_penalty = hi = mid;
      }
    }
  }
  if (!best) throw Error(ErrorKind::kConvergence, "sparse_logreg: no penalty met the sparsity bound");
  Json p{{"k_max", params.k_max},         {"path_length", params.path_length},
         {"min_ratio", params.min_ratio}, {"max_iters", params.max_iters},
         {"refine_steps", params.refine_steps},
         {"seed", params.seed},           {"penalty", best_penalty}};
  auto model = std::make_shared<LinearModel>("sparse_logreg", std::move(best->w), best->b, std::move(p));
  auto gold = model->nonzero_columns(zero_tol);
  if (gold.empty()) throw Error(ErrorKind::kConvergence, "sparse_logreg: fit has no active features");
  return {model, std::move(gold), best_penalty};
}

// -------------------------------------------------------------- tree build

namespace {

class TreeBuilder {
 public:
  TreeBuilder(const FeatureData& data, const TreeParams& params)
      : data_(data), params_(params), rng_(params.seed), buckets_(data.dim) {}

  std::vector<TreeNode> build(std::vector<std::size_t> samples) {
    nodes_.clear();
    std::vector<Column> path;
    grow(std::move(samples), 0, path);
    return std::move(nodes_);
  }

 private:
  struct Candidate {
    double impurity = std::numeric_limits<double>::infinity();
    Column feature = 0;
    double threshold = 0.0;
  };

  static double gini(double pos, double n) {
    if (n <= 0) return 0.0;
    const double p = pos / n;
    return 1.0 - p * p - (1.0 - p) * (1.0 - p);
  }

  std::int32_t grow(std::vector<std::size_t> samples, std::size_t depth, std::vector<Column>& path) {
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.emplace_back();
    double pos = 0;
    for (auto s : samples) pos += data_.labels[s];
    const double n = static_cast<double>(samples.size());
    nodes_[id].value = n > 0 ? pos / n : 0.0;
    nodes_[id].samples = static_cast<std::uint32_t>(samples.size());
    if (depth >= params_.max_depth || samples.size() < params_.min_samples_split || pos == 0 ||
        pos == n) {
      return id;
    }

    const Candidate best = find_split(samples, pos, path);
    if (!std::isfinite(best.impurity) || gini(pos, n) - best.impurity <= 1e-12) return id;

    std::vector<std::size_t> left;
    std::vector<std::size_t> right;
    for (auto s : samples) {
      (data_.rows[s].count(best.feature) <= best.threshold ? left : right).push_back(s);
    }
    samples.clear();
    samples.shrink_to_fit();

    const bool new_feature = std::find(path.begin(), path.end(), best.feature) == path.end();
    if (new_feature) path.push_back(best.feature);
    const auto l = grow(std::move(left), depth + 1, path);
    const auto r = grow(std::move(right), depth + 1, path);
    if (new_feature) path.pop_back();

    auto& node = nodes_[id];
    node.feature = static_cast<std::int32_t>(best.feature);
    node.threshold = best.threshold;
    node.left = l;
    node.right = r;
    return id;
  }

  Candidate find_split(const std::vector<std::size_t>& samples, double pos,
                       const std::vector<Column>& path) {
    const bool path_full = path.size() >= params_.max_active_features;
    auto allowed = [&](Column c) {
      return !path_full || std::find(path.begin(), path.end(), c) != path.end();
    };
    std::vector<Column> touched;
    for (auto s : samples) {
      for (const auto& e : data_.rows[s].entries) {
        if (!allowed(e.column)) continue;
        auto& b = buckets_[e.column];
        if (b.empty()) touched.push_back(e.column);
        b.push_back({e.count, static_cast<std::uint8_t>(data_.labels[s])});
      }
    }
    std::sort(touched.begin(), touched.end());
    std::vector<Column> candidates = touched;
    if (params_.max_features > 0 && candidates.size() > params_.max_features) {
      auto picks = sample_without_replacement(candidates.size(), params_.max_features, rng_);
      std::vector<Column> chosen;
      for (auto p : picks) chosen.push_back(candidates[p]);
      std::sort(chosen.begin(), chosen.end());
      candidates = std::move(chosen);
    }

    const double n = static_cast<double>(samples.size());
    const auto min_leaf = static_cast<double>(params_.min_samples_leaf);
    Candidate best;
    for (Column c : candidates) {
      auto& b = buckets_[c];
      std::sort(b.begin(), b.end(), [](const auto& x, const auto& y) { return x.count < y.count; });
      double left_n = n - static_cast<double>(b.size());
      double left_pos = pos;
      for (const auto& v : b) left_pos -= v.label;
      std::uint32_t prev = 0;
      std::size_t i = 0;
      while (i < b.size()) {
        const std::uint32_t value = b[i].count;
        // Everything with count <= prev goes left.
        if (value > prev && left_n >= min_leaf && n - left_n >= min_leaf) {
          const double right_n = n - left_n;
          const double imp =
              (left_n * gini(left_pos, left_n) + right_n * gini(pos - left_pos, right_n)) / n;
          if (imp < best.impurity) best = {imp, c, 0.5 * (prev + value)};
        }
        while (i < b.size() && b[i].count == value) {
          left_n += 1;
          left_pos += b[i].label;
          ++i;
        }
        prev = value;
      }
    }
    for (Column c : touched) buckets_[c].clear();
    return best;
  }

  struct Item {
    std::uint32_t count;
    std::uint8_t label;
  };

  const FeatureData& data_;
  TreeParams params_;
  Rng rng_;
  std::vector<std::vector<Item>> buckets_;
  std::vector<TreeNode> nodes_;
};

Json tree_params_json(const TreeParams& p) {
  return Json{{"max_active_features", p.max_active_features},
              {"max_depth", p.max_depth},
              {"min_samples_split", p.min_samples_split},
              {"min_samples_leaf", p.min_samples_leaf},
              {"max_features", p.max_features},
              {"seed", p.seed}};
}

}  // namespace

std::shared_ptr<const DecisionTree> train_decision_tree(const FeatureData& train,
                                                        const TreeParams& params) {
  if (train.size() == 0) throw Error(ErrorKind::kConfig, "decision_tree: empty training set");
  if (params.max_active_features == 0 || params.min_samples_leaf == 0) {
    throw Error(ErrorKind::kConfig, "decision_tree: invalid hyperparameters");
  }
  std::vector<std::size_t> samples(train.size());
  std::iota(samples.begin(), samples.end(), 0);
  TreeBuilder builder(train, params);
  return std::make_shared<DecisionTree>(builder.build(std::move(samples)), train.dim,
                                        tree_params_json(params));
}

std::shared_ptr<const KnnModel> train_knn(const FeatureData& train, std::size_t k) {
  return std::make_shared<KnnModel>(train, k);
}

std::shared_ptr<const RandomForest> train_random_forest(const FeatureData& train,
                                                        const ForestParams& params) {
  if (params.n_trees == 0) throw Error(ErrorKind::kConfig, "random_forest: n_trees must be >= 1");
  if (train.size() == 0) throw Error(ErrorKind::kConfig, "random_forest: empty training set");
  const auto max_features = static_cast<std::size_t>(
      std::max(1.0, std::round(std::sqrt(static_cast<double>(train.dim)))));
  std::vector<DecisionTree> trees;
  trees.reserve(params.n_trees);
  for (std::size_t t = 0; t < params.n_trees; ++t) {
    const std::uint64_t tree_seed = derive_seed(params.seed, t);
    Rng rng(tree_seed);
    std::vector<std::size_t> samples(train.size());
    if (params.bootstrap) {
      std::uniform_int_distribution<std::size_t> draw(0, train.size() - 1);
      for (auto& s : samples) s = draw(rng);
    } else {
      std::iota(samples.begin(), samples.end(), 0);
    }
    TreeParams tp;
    tp.max_active_features = std::numeric_limits<std::size_t>::max();
    tp.max_depth = params.max_depth;
    tp.min_samples_leaf = params.min_samples_leaf;
    tp.max_features = max_features;
    tp.seed = rng();
    TreeBuilder builder(train, tp);
    trees.emplace_back(builder.build(std::move(samples)), train.dim, tree_params_json(tp));
  }
  Json p{{"n_trees", params.n_trees},
         {"max_depth", params.max_depth},
         {"min_samples_leaf", params.min_samples_leaf},
         {"bootstrap", params.bootstrap},
         {"seed", params.seed}};
  return std::make_shared<RandomForest>(std::move(trees), train.dim, std::move(p));
}

std::optional<std::vector<Column>> gold_features(const ProbabilityModel& model,
                                                 const CountVector& x) {
  std::vector<Column> candidates;
  if (const auto* lin = dynamic_cast<const LinearModel*>(&model)) {
    const double tol = lin->kind() == "sparse_logreg" ? 1e-8 : 0.0;
    candidates = lin->nonzero_columns(tol);
  } else if (const auto* tree = dynamic_cast<const DecisionTree*>(&model)) {
    candidates = tree->path_features(x);
  } else {
    return std::nullopt;
  }
  std::vector<Column> out;
  for (Column c : candidates) {
    if (x.count(c) > 0) out.push_back(c);
  }
  return out;
}

// ------------------------------------------------------------------- specs

Json ModelSpec::to_json() const { return Json{{"kind", kind}, {"params", params}, {"seed", seed}}; }

ModelSpec ModelSpec::from_json(const Json& j) {
  ModelSpec spec;
  try {
    spec.kind = j.at("kind").get<std::string>();
    if (j.contains("params")) spec.params = j.at("params");
    if (j.contains("seed")) spec.seed = j.at("seed").get<std::uint64_t>();
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::kConfig, std::string("invalid model spec: ") + e.what());
  }
  if (!spec.params.is_object()) throw Error(ErrorKind::kConfig, "model params must be an object");
  return spec;
}

bool is_supported_kind(const std::string& kind) {
  return kind == "logreg" || kind == "sparse_logreg" || kind == "decision_tree" || kind == "knn" ||
         kind == "random_forest";
}

namespace {

template <typename T>
T param_or(const Json& params, const char* key, T fallback) {
  if (!params.contains(key)) return fallback;
  try {
    return params.at(key).get<T>();
  } catch (const Json::exception&) {
    throw Error(ErrorKind::kConfig, std::string("parameter '") + key + "' has the wrong type");
  }
}

std::size_t size_param(const Json& params, const char* key, std::size_t fallback) {
  const auto v = param_or<long long>(params, key, static_cast<long long>(fallback));
  if (v < 0) throw Error(ErrorKind::kConfig, std::string("parameter '") + key + "' must be >= 0");
  return static_cast<std::size_t>(v);
}

}  // namespace

ModelPtr train_model(const ModelSpec& spec, const FeatureData& train) {
  const Json& p = spec.params;
  if (spec.kind == "logreg") {
    LogRegParams lp;
    lp.l2 = param_or(p, "l2", lp.l2);
    lp.epochs = param_or(p, "epochs", lp.epochs);
    lp.lr = param_or(p, "lr", lp.lr);
    lp.seed = spec.seed;
    return train_logreg_l2(train, lp);
  }
  if (spec.kind == "sparse_logreg") {
    SparseLogRegParams sp;
    sp.k_max = size_param(p, "k_max", sp.k_max);
    sp.path_length = size_param(p, "path_length", sp.path_length);
    sp.min_ratio = param_or(p, "min_ratio", sp.min_ratio);
    sp.max_iters = param_or(p, "max_iters", sp.max_iters);
    sp.refine_steps = size_param(p, "refine_steps", sp.refine_steps);
    sp.seed = spec.seed;
    return train_sparse_logreg(train, sp).model;
  }
  if (spec.kind == "decision_tree") {
    TreeParams tp;
    tp.max_active_features = size_param(p, "max_active_features", tp.max_active_features);
    tp.max_depth = size_param(p, "max_depth", tp.max_depth);
    tp.min_samples_leaf = size_param(p, "min_samples_leaf", tp.min_samples_leaf);
    tp.min_samples_split = size_param(p, "min_samples_split", tp.min_samples_split);
    tp.seed = spec.seed;
    return train_decision_tree(train, tp);
  }
  if (spec.kind == "knn") return train_knn(train, size_param(p, "k", 5));
  if (spec.kind == "random_forest") {
    ForestParams fp;
    fp.n_trees = size_param(p, "n_trees", fp.n_trees);
    fp.max_depth = size_param(p, "max_depth", fp.max_depth);
    fp.min_samples_leaf = size_param(p, "min_samples_leaf", fp.min_samples_leaf);
    fp.bootstrap = param_or(p, "bootstrap", fp.bootstrap);
    fp.seed = spec.seed;
    return train_random_forest(train, fp);
  }
  throw Error(ErrorKind::kConfig, "unsupported model kind '" + spec.kind + "'");
}

ModelPtr retrain_without(const ModelSpec& spec, std::span<const Column> removed,
                         const FeatureData& train) {
  std::vector<Column> cols(removed.begin(), removed.end());
  std::sort(cols.begin(), cols.end());
  cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
  for (Column c : cols) {
    if (c >= train.dim) throw Error(ErrorKind::kRange, "removed column outside the vocabulary");
  }
  if (cols.empty()) return train_model(spec, train);
  if (cols.size() >= train.dim) {
    throw Error(ErrorKind::kDegenerateFeatures, "cannot remove the entire vocabulary");
  }
  FeatureData reduced;
  reduced.dim = train.dim;
  reduced.labels = train.labels;
  reduced.rows.reserve(train.size());
  for (const auto& row : train.rows) reduced.rows.push_back(drop_columns(row, cols));
  return std::make_shared<MaskedFeatureModel>(train_model(spec, reduced), std::move(cols));
}

// ----------------------------------------------------------- serialization

namespace {

constexpr int kModelFormatVersion = 1;

DecisionTree tree_from_json(const Json& j) {
  std::vector<TreeNode> nodes;
  for (const auto& n : j.at("nodes")) {
    TreeNode node;
    node.feature = n.at(0).get<std::int32_t>();
    node.threshold = n.at(1).get<double>();
    node.left = n.at(2).get<std::int32_t>();
    node.right = n.at(3).get<std::int32_t>();
    node.value = n.at(4).get<double>();
    node.samples = n.at(5).get<std::uint32_t>();
    nodes.push_back(node);
  }
  return DecisionTree(std::move(nodes), j.at("dim").get<std::size_t>(), j.value("params", Json::object()));
}

ModelPtr model_from_json(const Json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "logreg" || kind == "sparse_logreg") {
    return std::make_shared<LinearModel>(kind, j.at("weights").get<std::vector<double>>(),
                                         j.at("bias").get<double>(), j.value("params", Json::object()));
  }
  if (kind == "decision_tree") return std::make_shared<DecisionTree>(tree_from_json(j));
  if (kind == "random_forest") {
    std::vector<DecisionTree> trees;
    for (const auto& t : j.at("trees")) trees.push_back(tree_from_json(t));
    return std::make_shared<RandomForest>(std::move(trees), j.at("dim").get<std::size_t>(),
                                          j.value("params", Json::object()));
  }
  if (kind == "knn") {
    FeatureData data;
    data.dim = j.at("dim").get<std::size_t>();
    data.labels = j.at("labels").get<std::vector<int>>();
    for (const auto& r : j.at("rows")) {
      CountVector row;
      row.dim = data.dim;
      for (const auto& e : r) row.entries.push_back({e.at(0).get<Column>(), e.at(1).get<std::uint32_t>()});
      data.rows.push_back(std::move(row));
    }
    return std::make_shared<KnnModel>(std::move(data), j.at("k").get<std::size_t>());
  }
  if (kind == "masked") {
    return std::make_shared<MaskedFeatureModel>(model_from_json(j.at("inner")),
                                                j.at("removed").get<std::vector<Column>>());
  }
  throw Error(ErrorKind::kSchema, "unknown model kind '" + kind + "'");
}

}  // namespace

Json model_document(const ProbabilityModel& model, std::uint64_t vocab_hash) {
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(vocab_hash));
  return Json{{"format", "locex-model"},
              {"version", kModelFormatVersion},
              {"vocab_hash", hash},
              {"model", model.to_json()}};
}

ModelPtr model_from_document(const Json& doc) {
  try {
    if (doc.at("format") != "locex-model") throw Error(ErrorKind::kSchema, "not a model document");
    if (doc.at("version").get<int>() != kModelFormatVersion) {
      throw Error(ErrorKind::kSchema, "unsupported model document version");
    }
    return model_from_json(doc.at("model"));
  } catch (const Json::exception& e) {
    throw Error(ErrorKind::kSchema, std::string("malformed model document: ") + e.what());
  }
}

}  // namespace locex
