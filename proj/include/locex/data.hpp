#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "locex/text.hpp"

namespace locex {

struct LabeledCorpus {
  std::string name;
  std::vector<Document> docs;
  std::uint64_t split_seed = 0;

  std::size_t size() const noexcept { return docs.size(); }
};

// One JSON object per line: {"text": string, "label": 0|1}. Blank lines are
// skipped; ids are "line-<n>" with n the 1-based line number.
LabeledCorpus load_jsonl(const std::filesystem::path& path);
void save_jsonl(const LabeledCorpus& corpus, const std::filesystem::path& path);

struct Split {
  LabeledCorpus train;
  LabeledCorpus test;
};

// Stratified by label; per class round(train_frac * n_class) go to train.
Split split(const LabeledCorpus& corpus, double train_frac, std::uint64_t seed);

struct NoisyFeatureSpec {
  std::vector<std::string> feature_tokens;
  double train_rate_class0 = 0.10;
  double train_rate_class1 = 0.20;
  double test_rate = 0.10;

  // Ten tokens that the tokenizer keeps intact and that the synthetic
  // generator never emits.
  static NoisyFeatureSpec standard();
};

struct NoisyCorpora {
  LabeledCorpus train;
  LabeledCorpus val;
  LabeledCorpus test;
};

// Each token is appended to exactly round(rate * n_class) docs per class,
// chosen uniformly. Train and val use the class-dependent rates, test the
// shared rate.
NoisyCorpora inject_noisy_features(LabeledCorpus train, LabeledCorpus val, LabeledCorpus test,
                                   const NoisyFeatureSpec& spec, std::uint64_t seed);

struct UntrustworthySet {
  std::vector<Column> feature_ids;  // sorted
  double fraction = 0.25;
  std::uint64_t seed = 0;

  bool contains(Column c) const;
};

UntrustworthySet pick_untrustworthy(std::size_t vocab_size, double fraction, std::uint64_t seed);

struct ClassSignal {
  std::size_t n_tokens = 10;  // split alternately between the two classes
  // Presence probability of a signal token in documents of the class it
  // indicates, and in documents of the other class.
  double p_aligned = 0.9;
  double p_opposed = 0.1;
};

struct SynthConfig {
  std::size_t n_docs = 1000;
  std::size_t vocab_size = 300;
  // Zipf exponent of the background word distribution.
  double sparsity = 1.0;
  ClassSignal signal;
  std::size_t min_length = 20;
  std::size_t max_length = 60;
  std::uint64_t seed = 0;

  // Ten signal words (five per class), each present in a fifth of the
  // documents it indicates and 2% of the others, over a flatter 1000-word background.
  // Most documents carry one or two signal words and a few carry none.
  static SynthConfig sparse_signal(std::uint64_t seed = 0);
};

struct SynthCorpus {
  LabeledCorpus corpus;
  std::vector<std::string> positive_tokens;  // indicate class 1
  std::vector<std::string> negative_tokens;  // indicate class 0
};

SynthCorpus synth_corpus(const SynthConfig& cfg);

// Column-space view of a labeled corpus.
struct FeatureData {
  std::vector<CountVector> rows;
  std::vector<int> labels;
  std::size_t dim = 0;

  std::size_t size() const noexcept { return rows.size(); }
};

Vocabulary build_vocabulary(std::span<const Document> docs);
FeatureData to_features(std::span<const Document> docs, const Vocabulary& vocab);

}  // namespace locex
