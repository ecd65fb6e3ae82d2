#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>

#include "locex/error.hpp"
#include "locex/explain.hpp"
#include "test_util.hpp"

namespace locex {
namespace {

using testing::counts;
using testing::features_of;
using testing::planted_rule_corpus;

// p = sigmoid(bias + sum w_c * count_c)
std::shared_ptr<LinearModel> linear(std::vector<double> w, double bias) {
  return std::make_shared<LinearModel>("logreg", std::move(w), bias, Json::object());
}

Vocabulary letters(std::size_t n) {
  std::vector<std::string> t;
  for (std::size_t i = 0; i < n; ++i) t.push_back(std::string(1, static_cast<char>('a' + i)));
  return Vocabulary(t);
}

TEST(Kernel, ClosedForm) {
  const KernelConfig cfg{0.25};
  EXPECT_DOUBLE_EQ(kernel_weight(0.0, cfg), 1.0);
  EXPECT_NEAR(kernel_weight(0.25, cfg), std::exp(-1.0), 1e-15);
  EXPECT_NEAR(kernel_weight(0.5, cfg), std::exp(-4.0), 1e-15);
}

TEST(Kernel, DecreasesWithDistance) {
  const KernelConfig cfg{0.25};
  double prev = 2.0;
  for (double d = 0.0; d <= 1.0; d += 0.05) {
    const double w = kernel_weight(d, cfg);
    EXPECT_LT(w, prev);
    prev = w;
  }
}

TEST(Kernel, RejectsNonPositiveWidth) {
  EXPECT_THROW(kernel_weight(0.1, KernelConfig{0.0}), Error);
  EXPECT_THROW(kernel_weight(0.1, KernelConfig{-1.0}), Error);
}

TEST(Surrogate, RowsMatchDirectEvaluation) {
  const auto f = linear({1.0, -2.0, 0.5, 0.0, 3.0, 0.2}, -0.3);
  const auto x = counts(6, {{0, 2}, {1, 1}, {2, 1}, {4, 3}, {5, 1}});
  const KernelConfig cfg{0.25};
  const auto z = build_surrogate(*f, x, 300, cfg, 42);
  ASSERT_EQ(z.rows(), 300u);
  ASSERT_EQ(z.width(), 5u);
  const auto xp = presence(x);
  EXPECT_EQ(z.xprime, xp);
  EXPECT_DOUBLE_EQ(z.labels[0], f->predict_prob(x));
  EXPECT_DOUBLE_EQ(z.weights[0], 1.0);
  for (std::size_t r = 0; r < z.rows(); ++r) {
    const auto s = z.sample(r);
    EXPECT_NEAR(s.label, f->predict_prob(mask_counts(x, s.zprime)), 1e-14);
    const double d = cosine_distance(xp, s.zprime);
    EXPECT_NEAR(s.distance, d, 1e-12);
    EXPECT_NEAR(s.weight, std::exp(-d * d / (0.25 * 0.25)), 1e-12);
  }
}

TEST(Surrogate, TargetClassZeroComplementsLabels) {
  const auto f = linear({1.0, -1.0, 2.0}, 0.1);
  const auto x = counts(3, {{0, 1}, {1, 1}, {2, 1}});
  const auto z1 = build_surrogate(*f, x, 50, {}, 3, 1);
  const auto z0 = build_surrogate(*f, x, 50, {}, 3, 0);
  for (std::size_t r = 0; r < 50; ++r) EXPECT_DOUBLE_EQ(z0.labels[r], 1.0 - z1.labels[r]);
}

TEST(Surrogate, IgnoredColumnsLeaveInterpretableSpace) {
  const auto inner = linear({1.0, 1.0, 1.0}, 0.0);
  const MaskedFeatureModel f(inner, {1});
  const auto z = build_surrogate(f, counts(3, {{0, 1}, {1, 1}, {2, 1}}), 20, {}, 1);
  EXPECT_EQ(z.xprime.support, (std::vector<Column>{0, 2}));
}

TEST(Explain, ConstantModelHasNoFeatures) {
  const FunctionModel f([](const CountVector&) { return 0.7; }, 5);
  ExplanationConfig cfg;
  cfg.n = 200;
  const auto e = explain_instance(f, counts(5, {{0, 1}, {3, 2}}), letters(5), cfg);
  EXPECT_TRUE(e.features.empty());
  EXPECT_NEAR(e.intercept, 0.7, 1e-12);
  EXPECT_DOUBLE_EQ(e.fidelity, 1.0);
}

TEST(Explain, WeightsAreRefitOnSelectedColumns) {
  const auto f = linear({2.0, -1.0, 0.3, 0.0, -0.2, 1.0, 0.5, 0.1}, -0.5);
  const auto x = counts(8, {{0, 1}, {1, 1}, {2, 1}, {3, 1}, {4, 1}, {5, 1}, {6, 1}, {7, 1}});
  ExplanationConfig cfg;
  cfg.k = 3;
  cfg.n = 1000;
  cfg.seed = 7;
  const auto e = explain_instance(*f, x, letters(8), cfg);
  ASSERT_EQ(e.features.size(), 3u);
  EXPECT_EQ(e.features[0].token, "a");

  // Independent weighted least squares on the chosen columns.
  const auto z = build_surrogate(*f, x, cfg.n, cfg.kernel, cfg.seed);
  auto cols = e.columns();
  std::sort(cols.begin(), cols.end());
  Eigen::MatrixXd a(z.rows(), cols.size() + 1);
  Eigen::VectorXd b(z.rows());
  for (std::size_t r = 0; r < z.rows(); ++r) {
    const double s = std::sqrt(z.weights[r]);
    a(r, 0) = s;
    for (std::size_t j = 0; j < cols.size(); ++j) a(r, j + 1) = s * z.masks[r * 8 + cols[j]];
    b(r) = s * z.labels[r];
  }
  const Eigen::VectorXd ref = a.colPivHouseholderQr().solve(b);
  EXPECT_NEAR(e.intercept, ref(0), 1e-8);
  for (const auto& fw : e.features) {
    const auto j = std::find(cols.begin(), cols.end(), fw.column) - cols.begin();
    EXPECT_NEAR(fw.weight, ref(j + 1), 1e-8);
  }
  for (std::size_t i = 1; i < e.features.size(); ++i) {
    EXPECT_GE(std::abs(e.features[i - 1].weight), std::abs(e.features[i].weight));
  }
}

TEST(Explain, SparsityNeverExceedsK) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 15; ++trial) {
    std::vector<double> w(20);
    for (auto& v : w) v = g(rng);
    const auto f = linear(w, g(rng));
    CountVector x;
    x.dim = 20;
    for (Column c = 0; c < 20; ++c) {
      if (rng() % 2) x.entries.push_back({c, 1});
    }
    if (x.entries.size() < 2) continue;
    ExplanationConfig cfg;
    cfg.k = 1 + rng() % 6;
    cfg.n = 400;
    cfg.seed = rng();
    const auto e = explain_instance(*f, x, letters(20), cfg);
    EXPECT_LE(e.features.size(), cfg.k);
    for (const auto& fw : e.features) EXPECT_GT(x.count(fw.column), 0u);
    EXPECT_GE(e.fidelity, -1e-9);
    EXPECT_LE(e.fidelity, 1.0 + 1e-9);
  }
}

TEST(Explain, ByteIdenticalForSameSeed) {
  Vocabulary vocab;
  const auto data = features_of(planted_rule_corpus(80, 4), &vocab);
  const auto m = train_logreg_l2(data, {});
  ExplanationConfig cfg;
  cfg.seed = 99;
  const auto a = explain_instance(*m, data.rows[3], vocab, cfg, "x").to_json().dump();
  const auto b = explain_instance(*m, data.rows[3], vocab, cfg, "x").to_json().dump();
  EXPECT_EQ(a, b);
  cfg.seed = 100;
  EXPECT_NE(explain_instance(*m, data.rows[3], vocab, cfg, "x").to_json().dump(), a);
}

TEST(Explain, TargetClassZeroNegatesWeights) {
  const auto f = linear({1.5, -0.7, 0.4, 0.9}, 0.2);
  const auto x = counts(4, {{0, 1}, {1, 1}, {2, 1}, {3, 1}});
  ExplanationConfig cfg;
  cfg.k = 2;
  cfg.n = 500;
  const auto e1 = explain_instance(*f, x, letters(4), cfg);
  cfg.target_class = 0;
  const auto e0 = explain_instance(*f, x, letters(4), cfg);
  ASSERT_EQ(e0.features.size(), e1.features.size());
  for (std::size_t i = 0; i < e1.features.size(); ++i) {
    EXPECT_EQ(e0.features[i].column, e1.features[i].column);
    EXPECT_NEAR(e0.features[i].weight, -e1.features[i].weight, 1e-9);
  }
  EXPECT_NEAR(e0.intercept, 1.0 - e1.intercept, 1e-9);
}

TEST(Explain, EmptyInstanceIsDegenerate) {
  const auto f = linear({1.0}, 0.0);
  try {
    explain_instance(*f, counts(1, {}), letters(1), {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDegenerateInstance);
  }
}

TEST(Explanation, EvaluateSumsPresentWeights) {
  Explanation e;
  e.intercept = 0.6;
  e.features = {{2, "c", -0.3}, {0, "a", 0.1}};
  EXPECT_DOUBLE_EQ(e.evaluate(InterpretableVector::from_support(4, {0, 2})), 0.4);
  EXPECT_DOUBLE_EQ(e.evaluate(InterpretableVector::from_support(4, {2, 3})), 0.3);
  const std::vector<Column> gone{2};
  EXPECT_DOUBLE_EQ(e.evaluate_without(gone), 0.7);
  EXPECT_DOUBLE_EQ(e.evaluate_without({}), 0.4);
}

TEST(Explanation, JsonRoundTrip) {
  Vocabulary vocab;
  const auto data = features_of(planted_rule_corpus(60, 8), &vocab);
  const auto m = train_logreg_l2(data, {});
  ExplanationConfig cfg;
  cfg.k = 4;
  cfg.n = 300;
  const auto e = explain_instance(*m, data.rows[1], vocab, cfg, "doc-1");
  const auto back = Explanation::from_json(Json::parse(e.to_json().dump()));
  EXPECT_EQ(back.to_json(), e.to_json());
  EXPECT_EQ(back.instance_id, "doc-1");
  EXPECT_THROW(Explanation::from_json(Json{{"features", 3}}), Error);
}

TEST(Greedy, StopsAfterDecisiveWord) {
  const FunctionModel f([](const CountVector& x) { return x.count(2) > 0 ? 0.9 : 0.1; }, 5);
  EXPECT_EQ(greedy_explain(f, counts(5, {{0, 1}, {2, 1}, {4, 1}}), 10), (std::vector<Column>{2}));
}

TEST(Greedy, ConstantModelRemovesInColumnOrder) {
  const FunctionModel f([](const CountVector&) { return 0.8; }, 9);
  EXPECT_EQ(greedy_explain(f, counts(9, {{1, 1}, {3, 1}, {4, 2}, {7, 1}, {8, 1}}), 3),
            (std::vector<Column>{1, 3, 4}));
}

TEST(Greedy, NegativeClassRemovesStrongestNegativeEvidence) {
  const auto f = linear({-3.0, -1.0, 0.5}, 0.0);
  EXPECT_EQ(greedy_explain(*f, counts(3, {{0, 1}, {1, 1}, {2, 1}}), 2).front(), Column{0});
}

TEST(Random, SubsetOfSupport) {
  const auto xp = InterpretableVector::from_support(20, {1, 4, 6, 9, 12, 15});
  const auto r = random_explain(xp, 3, 5);
  ASSERT_EQ(r.size(), 3u);
  EXPECT_TRUE(std::is_sorted(r.begin(), r.end()));
  for (Column c : r) EXPECT_TRUE(xp.bits[c]);
  EXPECT_EQ(random_explain(xp, 10, 5), xp.support);
  EXPECT_EQ(random_explain(xp, 3, 5), r);
}

TEST(Random, EveryWordEquallyLikely) {
  const auto xp = InterpretableVector::from_support(8, {0, 1, 2, 3, 4, 5, 6, 7});
  std::vector<int> hits(8, 0);
  const int n = 20000;
  for (int s = 0; s < n; ++s) {
    for (Column c : random_explain(xp, 2, s)) ++hits[c];
  }
  for (int h : hits) EXPECT_NEAR(h / static_cast<double>(n), 0.25, 0.015);
}

}  // namespace
}  // namespace locex
