#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "locex/data.hpp"
#include "locex/error.hpp"
#include "locex/models.hpp"
#include "test_util.hpp"

namespace locex {
namespace {

using testing::corpus_of;
using testing::counts;
using testing::features_of;
using testing::planted_rule_corpus;

FeatureData separable() {
  return features_of(corpus_of({{"good fine", 1}, {"good nice", 1}, {"good", 1},
                                {"bad awful", 0}, {"bad poor", 0}, {"bad", 0}}));
}

// Random count vectors with counts in [0, 2].
std::vector<CountVector> random_rows(std::size_t dim, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> c(0, 2);
  std::vector<CountVector> out;
  for (std::size_t i = 0; i < n; ++i) {
    CountVector x;
    x.dim = dim;
    for (Column j = 0; j < dim; ++j) {
      if (int v = c(rng); v > 0) x.entries.push_back({j, static_cast<std::uint32_t>(v)});
    }
    out.push_back(x);
  }
  return out;
}

TEST(PredictedClass, TieGoesToZero) {
  EXPECT_EQ(predicted_class(0.5), 0);
  EXPECT_EQ(predicted_class(0.5000001), 1);
  EXPECT_EQ(predicted_class(0.2), 0);
}

TEST(LogReg, SeparatesToySet) {
  const auto data = separable();
  const auto m = train_logreg_l2(data, {});
  EXPECT_DOUBLE_EQ(accuracy(*m, data), 1.0);
}

TEST(LogReg, HugePenaltyGivesClassPrior) {
  auto c = corpus_of({{"a", 1}, {"b", 0}, {"c", 0}, {"a b", 0}});
  const auto data = features_of(c);
  LogRegParams p;
  p.l2 = 1e6;
  const auto m = train_logreg_l2(data, p);
  for (double w : m->weights()) EXPECT_NEAR(w, 0.0, 1e-5);
  EXPECT_NEAR(1.0 / (1.0 + std::exp(-m->bias())), 0.25, 1e-3);
}

TEST(LogReg, Deterministic) {
  const auto data = features_of(planted_rule_corpus(60, 3));
  const auto a = train_logreg_l2(data, {});
  const auto b = train_logreg_l2(data, {});
  EXPECT_EQ(a->weights(), b->weights());
  EXPECT_EQ(a->bias(), b->bias());
}

TEST(LogReg, LossTraceNeverIncreases) {
  const auto data = features_of(planted_rule_corpus(80, 5));
  std::vector<double> trace;
  train_logreg_l2(data, {}, &trace);
  ASSERT_GT(trace.size(), 2u);
  for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_LE(trace[i], trace[i - 1] + 1e-12) << i;
}

TEST(LogReg, SingleClassIsDegenerate) {
  const auto data = features_of(corpus_of({{"a", 1}, {"b", 1}}));
  try {
    train_logreg_l2(data, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDegenerateLabels);
  }
}

TEST(SparseLogReg, RecoversPlantedRule) {
  Vocabulary vocab;
  // Positives carry one of five rule words; negatives none of them.
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> bg(0, 39), rule(0, 4);
  std::vector<std::pair<std::string, int>> rows;
  for (int i = 0; i < 400; ++i) {
    std::string t;
    for (int j = 0; j < 8; ++j) t += "w" + std::to_string(bg(rng)) + " ";
    const int label = i % 2;
    if (label) t += "rule" + std::to_string(rule(rng));
    rows.push_back({t, label});
  }
  const auto data = features_of(corpus_of(rows), &vocab);
  const auto fit = train_sparse_logreg(data, {});
  EXPECT_LE(fit.gold.size(), 10u);
  for (int r = 0; r < 5; ++r) {
    const Column c = *vocab.find("rule" + std::to_string(r));
    EXPECT_TRUE(std::binary_search(fit.gold.begin(), fit.gold.end(), c)) << r;
  }
}

TEST(SparseLogReg, FullBudgetKeepsEveryFeature) {
  const auto data = separable();
  SparseLogRegParams p;
  p.k_max = data.dim;
  const auto fit = train_sparse_logreg(data, p);
  for (double w : fit.model->weights()) EXPECT_GT(std::abs(w), 1e-8);
}

TEST(SparseLogReg, GoldNeverExceedsBudget) {
  for (std::uint64_t seed : {1, 2, 3}) {
    auto cfg = SynthConfig::sparse_signal(seed);
    cfg.n_docs = 300;
    const auto data = features_of(synth_corpus(cfg).corpus);
    for (std::size_t k : {1, 3, 10}) {
      SparseLogRegParams p;
      p.k_max = k;
      const auto fit = train_sparse_logreg(data, p);
      EXPECT_LE(fit.gold.size(), k);
      EXPECT_FALSE(fit.gold.empty());
      EXPECT_EQ(fit.gold, fit.model->nonzero_columns(1e-8));
    }
  }
}

TEST(SparseLogReg, RejectsBadBudget) {
  SparseLogRegParams p;
  p.k_max = 0;
  EXPECT_THROW(train_sparse_logreg(separable(), p), Error);
}

TEST(DecisionTree, SingleSplit) {
  const auto data = features_of(corpus_of({{"x y", 1}, {"x", 1}, {"y", 0}, {"z", 0}}));
  const auto t = train_decision_tree(data, {});
  EXPECT_EQ(t->depth(), 1u);
  EXPECT_DOUBLE_EQ(accuracy(*t, data), 1.0);
}

TEST(DecisionTree, ConstantLabelsGiveOneLeaf) {
  const auto data = features_of(corpus_of({{"a", 1}, {"b", 1}, {"a b", 1}}));
  const auto t = train_decision_tree(data, {});
  ASSERT_EQ(t->nodes().size(), 1u);
  EXPECT_DOUBLE_EQ(t->predict_prob(counts(data.dim, {{0, 3}})), 1.0);
}

TEST(DecisionTree, PathsRespectFeatureBudget) {
  const auto data = features_of(synth_corpus(SynthConfig::sparse_signal(4)).corpus);
  for (std::size_t budget : {1, 3, 10}) {
    TreeParams p;
    p.max_active_features = budget;
    const auto t = train_decision_tree(data, p);
    for (const auto& row : data.rows) ASSERT_LE(t->path_features(row).size(), budget);
  }
}

TEST(DecisionTree, GoldIsPathFeaturesPresentInInstance) {
  const auto data = features_of(planted_rule_corpus(100, 2));
  const auto t = train_decision_tree(data, {});
  for (const auto& row : data.rows) {
    const auto gold = *gold_features(*t, row);
    for (Column c : gold) EXPECT_GT(row.count(c), 0u);
    const auto path = t->path_features(row);
    for (Column c : gold) EXPECT_TRUE(std::binary_search(path.begin(), path.end(), c));
  }
}

TEST(Knn, MatchesHandComputedCosineVote) {
  FeatureData train;
  train.dim = 3;
  train.rows = {counts(3, {{0, 1}}), counts(3, {{0, 1}, {1, 1}}), counts(3, {{2, 2}}),
                counts(3, {{1, 1}, {2, 1}})};
  train.labels = {1, 1, 0, 0};
  const auto m = train_knn(train, 3);
  // Query (1, 0, 1): cosines 0.707, 0.5, 0.707, 0.5. Top three break the
  // tie at 0.5 toward the lower row, so rows 0, 2, 1 vote 1, 0, 1.
  const auto q = counts(3, {{0, 1}, {2, 1}});
  EXPECT_NEAR(m->predict_prob(q), 2.0 / 3.0, 1e-12);
  const auto m1 = train_knn(train, 1);
  EXPECT_NEAR(m1->predict_prob(counts(3, {{2, 5}})), 0.0, 1e-12);
}

TEST(Knn, RejectsBadK) {
  FeatureData train;
  train.dim = 1;
  train.rows = {counts(1, {{0, 1}})};
  train.labels = {1};
  EXPECT_THROW(train_knn(train, 0), Error);
  EXPECT_THROW(train_knn(train, 2), Error);
}

TEST(RandomForest, IsMeanOfItsTrees) {
  const auto data = features_of(planted_rule_corpus(80, 9));
  ForestParams p;
  p.n_trees = 7;
  const auto f = train_random_forest(data, p);
  ASSERT_EQ(f->trees().size(), 7u);
  for (const auto& row : data.rows) {
    double mean = 0.0;
    for (const auto& t : f->trees()) mean += t.predict_prob(row);
    EXPECT_NEAR(f->predict_prob(row), mean / 7.0, 1e-12);
  }
}

TEST(RandomForest, LearnsStrongSignal) {
  const auto s = synth_corpus(SynthConfig{});
  const auto parts = split(s.corpus, 0.8, 0);
  const auto vocab = build_vocabulary(s.corpus.docs);
  const auto train = to_features(parts.train.docs, vocab);
  const auto test = to_features(parts.test.docs, vocab);
  const auto f = train_random_forest(train, {});
  EXPECT_GE(accuracy(*f, test), 0.85);
}

TEST(RetrainWithout, EmptySetIsPlainRetrain) {
  const auto data = features_of(planted_rule_corpus(60, 1));
  const ModelSpec spec{"logreg", Json::object(), 0};
  const auto a = train_model(spec, data);
  const auto b = retrain_without(spec, {}, data);
  EXPECT_EQ(a->to_json(), b->to_json());
}

TEST(RetrainWithout, RemovingDecisiveWordDestroysSignal) {
  Vocabulary vocab;
  const auto data = features_of(planted_rule_corpus(200, 6), &vocab);
  const Column spark = *vocab.find("spark");
  const ModelSpec spec{"decision_tree", Json::object(), 0};
  EXPECT_DOUBLE_EQ(accuracy(*train_model(spec, data), data), 1.0);
  const std::vector<Column> removed{spark};
  const auto m = retrain_without(spec, removed, data);
  EXPECT_EQ(m->ignored_columns().size(), 1u);
  // Background words are independent of the label.
  EXPECT_LT(accuracy(*m, to_features(planted_rule_corpus(400, 60).docs, vocab)), 0.7);
  for (const auto& row : data.rows) {
    auto without = drop_columns(row, removed);
    EXPECT_DOUBLE_EQ(m->predict_prob(row), m->predict_prob(without));
  }
}

TEST(RetrainWithout, WholeVocabularyIsDegenerate) {
  const auto data = separable();
  std::vector<Column> all(data.dim);
  std::iota(all.begin(), all.end(), 0);
  try {
    retrain_without({"logreg", Json::object(), 0}, all, data);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDegenerateFeatures);
  }
}

class EveryKind : public ::testing::TestWithParam<std::string> {};

TEST_P(EveryKind, ContractHolds) {
  Vocabulary vocab;
  const auto data = features_of(planted_rule_corpus(120, 21), &vocab);
  Json params = Json::object();
  if (GetParam() == "random_forest") params["n_trees"] = 5;
  const ModelSpec spec{GetParam(), params, 4};
  const ModelPtr m = train_model(spec, data);
  EXPECT_EQ(m->kind(), GetParam());
  EXPECT_EQ(m->feature_dim(), data.dim);

  const auto rows = random_rows(data.dim, 40, 8);
  const auto doc = model_document(*m, vocab.hash());
  const auto back = model_from_document(Json::parse(doc.dump()));
  for (const auto& x : rows) {
    const double p = m->predict_prob(x);
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
    EXPECT_DOUBLE_EQ(back->predict_prob(x), p);
  }

  // Batch masking agrees with building each masked vector.
  std::mt19937_64 rng(5);
  for (const auto& x : rows) {
    const std::size_t width = x.entries.size();
    std::vector<double> masks(6 * width);
    for (auto& v : masks) v = static_cast<double>(rng() & 1);
    const auto got = m->predict_masked(x, masks);
    ASSERT_EQ(got.size(), 6u);
    for (std::size_t r = 0; r < 6; ++r) {
      CountVector z;
      z.dim = x.dim;
      for (std::size_t i = 0; i < width; ++i) {
        if (masks[r * width + i] != 0.0) z.entries.push_back(x.entries[i]);
      }
      EXPECT_DOUBLE_EQ(got[r], m->predict_prob(z));
    }
  }

  const auto again = train_model(spec, data);
  EXPECT_EQ(model_document(*again, vocab.hash()), doc);
}

INSTANTIATE_TEST_SUITE_P(Models, EveryKind,
                         ::testing::Values("logreg", "sparse_logreg", "decision_tree", "knn",
                                           "random_forest"));

TEST(ModelDocument, MaskedModelRoundTrips) {
  Vocabulary vocab;
  const auto data = features_of(planted_rule_corpus(60, 2), &vocab);
  const std::vector<Column> removed{0, 3};
  const auto m = retrain_without({"logreg", Json::object(), 0}, removed, data);
  const auto back = model_from_document(model_document(*m, vocab.hash()));
  ASSERT_EQ(back->ignored_columns().size(), 2u);
  for (const auto& x : data.rows) EXPECT_DOUBLE_EQ(back->predict_prob(x), m->predict_prob(x));
}

TEST(ModelDocument, RejectsForeignDocuments) {
  EXPECT_THROW(model_from_document(Json{{"format", "other"}}), Error);
  EXPECT_THROW(model_from_document(Json::object()), Error);
}

TEST(ModelSpec, UnknownKind) {
  EXPECT_FALSE(is_supported_kind("svm"));
  EXPECT_THROW(train_model({"svm", Json::object(), 0}, separable()), Error);
}

TEST(FunctionModel, WrapsCallable) {
  FunctionModel m([](const CountVector& x) { return x.entries.empty() ? 0.1 : 0.9; }, 4);
  EXPECT_DOUBLE_EQ(m.predict_prob(counts(4, {})), 0.1);
  EXPECT_DOUBLE_EQ(m.predict_prob(counts(4, {{2, 1}})), 0.9);
  EXPECT_THROW(m.to_json(), Error);
}

}  // namespace
}  // namespace locex
