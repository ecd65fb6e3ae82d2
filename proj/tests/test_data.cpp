#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "locex/data.hpp"
#include "locex/error.hpp"
#include "locex/models.hpp"
#include "test_util.hpp"

namespace locex {
namespace {

namespace fs = std::filesystem;

class TempFile {
 public:
  explicit TempFile(const std::string& content) {
    path_ = fs::temp_directory_path() /
            ("locex_data_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
             ::testing::UnitTest::GetInstance()->current_test_info()->name() + ".jsonl");
    std::ofstream(path_) << content;
  }
  ~TempFile() { fs::remove(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no locex::Error thrown";
  return ErrorKind::kIo;
}

TEST(LoadJsonl, TwoValidLines) {
  TempFile f("{\"text\": \"good film\", \"label\": 1}\n{\"text\": \"bad film\", \"label\": 0}\n");
  const auto c = load_jsonl(f.path());
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c.docs[0].label, 1);
  EXPECT_EQ(c.docs[1].counts.at("bad"), 1);
  EXPECT_EQ(c.docs[0].id, "line-1");
}

TEST(LoadJsonl, EmptyFileIsAnEmptyCorpus) {
  TempFile f("");
  EXPECT_EQ(load_jsonl(f.path()).size(), 0u);
}

TEST(LoadJsonl, LabelOutOfRangeNamesTheLine) {
  TempFile f("{\"text\": \"a\", \"label\": 1}\n{\"text\": \"b\", \"label\": 2}\n");
  try {
    load_jsonl(f.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kSchema);
    EXPECT_NE(std::string(e.what()).find("label out of range"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(LoadJsonl, MalformedLineIsAParseError) {
  TempFile f("{\"text\": \"a\", \"label\": 1}\n{not json\n");
  try {
    load_jsonl(f.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kParse);
    EXPECT_NE(std::string(e.what()).find("2"), std::string::npos);
  }
}

TEST(LoadJsonl, MissingFieldIsASchemaError) {
  TempFile f("{\"label\": 1}\n");
  EXPECT_EQ(kind_of([&] { load_jsonl(f.path()); }), ErrorKind::kSchema);
}

TEST(LoadJsonl, SaveRoundTrip) {
  const auto c = testing::corpus_of({{"one two", 0}, {"three", 1}});
  TempFile f("");
  save_jsonl(c, f.path());
  const auto back = load_jsonl(f.path());
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back.docs[0].text, "one two");
  EXPECT_EQ(back.docs[1].label, 1);
}

LabeledCorpus balanced(std::size_t n) {
  std::vector<std::pair<std::string, int>> rows;
  for (std::size_t i = 0; i < n; ++i) rows.push_back({"w" + std::to_string(i), static_cast<int>(i % 2)});
  return testing::corpus_of(rows);
}

TEST(Split, SixteenHundredFourHundred) {
  const auto s = split(balanced(2000), 0.8, 3);
  EXPECT_EQ(s.train.size(), 1600u);
  EXPECT_EQ(s.test.size(), 400u);
}

TEST(Split, HalfOfFourIsOneOfEachPerSide) {
  const auto s = split(balanced(4), 0.5, 1);
  for (const auto* side : {&s.train, &s.test}) {
    ASSERT_EQ(side->size(), 2u);
    EXPECT_NE(side->docs[0].label, side->docs[1].label);
  }
}

TEST(Split, SameSeedSamePartition) {
  const auto a = split(balanced(100), 0.7, 9);
  const auto b = split(balanced(100), 0.7, 9);
  ASSERT_EQ(a.train.size(), b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i) EXPECT_EQ(a.train.docs[i].id, b.train.docs[i].id);
}

TEST(Split, PartitionIsDisjointAndComplete) {
  const auto s = split(balanced(101), 0.6, 2);
  std::set<std::string> ids;
  for (const auto& d : s.train.docs) ids.insert(d.id);
  for (const auto& d : s.test.docs) EXPECT_TRUE(ids.insert(d.id).second);
  EXPECT_EQ(ids.size(), 101u);
}

TEST(Split, MissingClassIsAStratificationError) {
  const auto c = testing::corpus_of({{"a", 0}, {"b", 0}});
  EXPECT_EQ(kind_of([&] { split(c, 0.5, 0); }), ErrorKind::kStratification);
  EXPECT_EQ(kind_of([&] { split(balanced(10), 1.0, 0); }), ErrorKind::kRange);
}

std::size_t docs_with(const LabeledCorpus& c, const std::string& token, int label) {
  std::size_t n = 0;
  for (const auto& d : c.docs) n += (d.label == label && d.counts.count(token)) ? 1 : 0;
  return n;
}

TEST(NoisyFeatures, RatesPerClass) {
  const auto spec = NoisyFeatureSpec::standard();
  ASSERT_EQ(spec.feature_tokens.size(), 10u);
  const auto out = inject_noisy_features(balanced(1000), balanced(200), balanced(400), spec, 5);
  for (const auto& t : spec.feature_tokens) {
    EXPECT_EQ(docs_with(out.train, t, 0), 50u);
    EXPECT_EQ(docs_with(out.train, t, 1), 100u);
    EXPECT_EQ(docs_with(out.val, t, 0), 10u);
    EXPECT_EQ(docs_with(out.val, t, 1), 20u);
    EXPECT_EQ(docs_with(out.test, t, 0), 20u);
    EXPECT_EQ(docs_with(out.test, t, 1), 20u);
  }
}

TEST(NoisyFeatures, TokensSurviveTokenization) {
  const auto spec = NoisyFeatureSpec::standard();
  for (const auto& t : spec.feature_tokens) EXPECT_EQ(tokenize(t), std::vector<std::string>{t});
}

TEST(NoisyFeatures, ZeroRatesLeaveCorporaUnchanged) {
  auto spec = NoisyFeatureSpec::standard();
  spec.train_rate_class0 = spec.train_rate_class1 = spec.test_rate = 0.0;
  const auto train = balanced(20);
  const auto out = inject_noisy_features(train, balanced(6), balanced(6), spec, 1);
  for (std::size_t i = 0; i < train.size(); ++i) EXPECT_EQ(out.train.docs[i].text, train.docs[i].text);
}

TEST(NoisyFeatures, CollisionWithNaturalVocabulary) {
  const auto spec = NoisyFeatureSpec::standard();
  auto train = balanced(10);
  train.docs[3] = Document::from_text("clash", "hello " + spec.feature_tokens[2], 1);
  EXPECT_EQ(kind_of([&] { inject_noisy_features(train, balanced(4), balanced(4), spec, 0); }),
            ErrorKind::kCollision);
}

TEST(Untrustworthy, ExactSizeAndDeterminism) {
  const auto a = pick_untrustworthy(100, 0.25, 8);
  EXPECT_EQ(a.feature_ids.size(), 25u);
  EXPECT_TRUE(std::is_sorted(a.feature_ids.begin(), a.feature_ids.end()));
  EXPECT_EQ(a.feature_ids, pick_untrustworthy(100, 0.25, 8).feature_ids);
  EXPECT_EQ(pick_untrustworthy(4, 0.25, 1).feature_ids.size(), 1u);
  EXPECT_TRUE(a.contains(a.feature_ids[0]));
}

TEST(Untrustworthy, FractionOutsideOpenUnitInterval) {
  EXPECT_EQ(kind_of([] { pick_untrustworthy(100, 0.0, 1); }), ErrorKind::kRange);
  EXPECT_EQ(kind_of([] { pick_untrustworthy(100, 1.0, 1); }), ErrorKind::kRange);
}

TEST(Synth, SameSeedSameCorpus) {
  SynthConfig cfg;
  cfg.n_docs = 50;
  cfg.seed = 4;
  const auto a = synth_corpus(cfg);
  const auto b = synth_corpus(cfg);
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(a.corpus.docs[i].text, b.corpus.docs[i].text);
  EXPECT_EQ(a.positive_tokens, b.positive_tokens);
}

TEST(Synth, VocabularySmallerThanSignalIsAConfigError) {
  SynthConfig cfg;
  cfg.vocab_size = 10;
  EXPECT_EQ(kind_of([&] { synth_corpus(cfg); }), ErrorKind::kConfig);
}

TEST(Synth, NoSignalGivesChanceAccuracy) {
  SynthConfig cfg;
  cfg.signal.p_aligned = cfg.signal.p_opposed = 0.3;
  cfg.seed = 1;
  const auto train_corpus = synth_corpus(cfg).corpus;
  cfg.seed = 2;
  const auto test_corpus = synth_corpus(cfg).corpus;
  const auto vocab = build_vocabulary(train_corpus.docs);
  const auto model = train_logreg_l2(to_features(train_corpus.docs, vocab), {});
  EXPECT_NEAR(accuracy(*model, to_features(test_corpus.docs, vocab)), 0.5, 0.05);
}

TEST(Synth, StrongSignalIsLearnable) {
  SynthConfig cfg;
  cfg.seed = 3;
  const auto corpus = synth_corpus(cfg).corpus;
  const auto parts = split(corpus, 0.8, 3);
  const auto vocab = build_vocabulary(corpus.docs);
  const auto model = train_logreg_l2(to_features(parts.train.docs, vocab), {});
  EXPECT_GE(accuracy(*model, to_features(parts.test.docs, vocab)), 0.9);
}

TEST(Features, ColumnsFollowVocabulary) {
  const auto c = testing::corpus_of({{"b a", 1}, {"c", 0}});
  Vocabulary vocab;
  const auto data = testing::features_of(c, &vocab);
  EXPECT_EQ(vocab.tokens(), (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(data.labels, (std::vector<int>{1, 0}));
  EXPECT_EQ(data.rows[0].count(0), 1u);
  EXPECT_EQ(data.dim, 3u);
}

}  // namespace
}  // namespace locex
