#include "locex/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "locex/error.hpp"
#include "locex/rng.hpp"

namespace locex {

using nlohmann::json;

LabeledCorpus load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  LabeledCorpus corpus;
  corpus.name = path.stem().string();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorKind::kParse, "line " + std::to_string(line_no) + ": " + e.what());
    }
    const std::string where = " (line " + std::to_string(line_no) + ")";
    if (!obj.is_object()) throw Error(ErrorKind::kSchema, "expected an object" + where);
    if (!obj.contains("text") || !obj["text"].is_string()) {
      throw Error(ErrorKind::kSchema, "missing string field \"text\"" + where);
    }
    if (!obj.contains("label") || !obj["label"].is_number_integer()) {
      throw Error(ErrorKind::kSchema, "missing integer field \"label\"" + where);
    }
    const auto label = obj["label"].get<long long>();
    if (label != 0 && label != 1) throw Error(ErrorKind::kSchema, "label out of range" + where);
    corpus.docs.push_back(Document::from_text("line-" + std::to_string(line_no),
                                              obj["text"].get<std::string>(),
                                              static_cast<int>(label)));
  }
  return corpus;
}

void save_jsonl(const LabeledCorpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  for (const auto& doc : corpus.docs) {
    json obj{{"text", doc.text}, {"label", doc.label.value_or(0)}};
    out << obj.dump() << '\n';
  }
}

namespace {

std::vector<std::size_t> indices_of_class(const LabeledCorpus& corpus, int label) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < corpus.docs.size(); ++i) {
    const auto& l = corpus.docs[i].label;
    if (!l) throw Error(ErrorKind::kSchema, "document " + corpus.docs[i].id + " has no label");
    if (*l == label) out.push_back(i);
  }
  return out;
}

std::size_t rounded_count(double rate, std::size_t n) {
  return static_cast<std::size_t>(std::llround(rate * static_cast<double>(n)));
}

}  // namespace

Split split(const LabeledCorpus& corpus, double train_frac, std::uint64_t seed) {
  if (!(train_frac > 0.0 && train_frac < 1.0)) {
    throw Error(ErrorKind::kRange, "train_frac must lie in (0, 1)");
  }
  Split out;
  out.train.name = corpus.name + "/train";
  out.test.name = corpus.name + "/test";
  out.train.split_seed = out.test.split_seed = seed;
  Rng rng(seed);
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> test_idx;
  for (int label : {0, 1}) {
    auto idx = indices_of_class(corpus, label);
    if (idx.empty()) {
      throw Error(ErrorKind::kStratification, "class " + std::to_string(label) + " has no documents");
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::size_t n_train = rounded_count(train_frac, idx.size());
    train_idx.insert(train_idx.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    test_idx.insert(test_idx.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  }
  // Keep corpus order inside each side.
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  for (auto i : train_idx) out.train.docs.push_back(corpus.docs[i]);
  for (auto i : test_idx) out.test.docs.push_back(corpus.docs[i]);
  return out;
}

NoisyFeatureSpec NoisyFeatureSpec::standard() {
  NoisyFeatureSpec spec;
  for (int i = 0; i < 10; ++i) spec.feature_tokens.push_back("noisyfeat" + std::to_string(i));
  return spec;
}

namespace {

void inject_into(LabeledCorpus& corpus, const std::string& token, double rate0, double rate1,
                 Rng& rng) {
  for (int label : {0, 1}) {
    const auto idx = indices_of_class(corpus, label);
    const double rate = label == 0 ? rate0 : rate1;
    const std::size_t count = std::min(idx.size(), rounded_count(rate, idx.size()));
    for (std::size_t pick : sample_without_replacement(idx.size(), count, rng)) {
      corpus.docs[idx[pick]].append_token(token);
    }
  }
}

}  // namespace

NoisyCorpora inject_noisy_features(LabeledCorpus train, LabeledCorpus val, LabeledCorpus test,
                                   const NoisyFeatureSpec& spec, std::uint64_t seed) {
  for (double r : {spec.train_rate_class0, spec.train_rate_class1, spec.test_rate}) {
    if (!(r >= 0.0 && r <= 1.0)) throw Error(ErrorKind::kRange, "injection rate outside [0, 1]");
  }
  for (const auto* corpus : {&train, &val, &test}) {
    for (const auto& doc : corpus->docs) {
      for (const auto& tok : spec.feature_tokens) {
        if (doc.counts.contains(tok)) {
          throw Error(ErrorKind::kCollision, "noisy token '" + tok + "' occurs in " + doc.id);
        }
      }
    }
  }
  for (const auto& tok : spec.feature_tokens) {
    if (tokenize(tok) != std::vector<std::string>{tok}) {
      throw Error(ErrorKind::kConfig, "noisy token '" + tok + "' is not a single lowercase token");
    }
  }
  Rng rng(seed);
  for (const auto& tok : spec.feature_tokens) {
    inject_into(train, tok, spec.train_rate_class0, spec.train_rate_class1, rng);
    inject_into(val, tok, spec.train_rate_class0, spec.train_rate_class1, rng);
    inject_into(test, tok, spec.test_rate, spec.test_rate, rng);
  }
  return {std::move(train), std::move(val), std::move(test)};
}

bool UntrustworthySet::contains(Column c) const {
  return std::binary_search(feature_ids.begin(), feature_ids.end(), c);
}

UntrustworthySet pick_untrustworthy(std::size_t vocab_size, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw Error(ErrorKind::kRange, "untrustworthy fraction must lie in (0, 1)");
  }
  if (vocab_size < 4) throw Error(ErrorKind::kRange, "vocabulary too small (need >= 4 tokens)");
  Rng rng(seed);
  UntrustworthySet out;
  out.fraction = fraction;
  out.seed = seed;
  for (auto i : sample_without_replacement(vocab_size, rounded_count(fraction, vocab_size), rng)) {
    out.feature_ids.push_back(static_cast<Column>(i));
  }
  std::sort(out.feature_ids.begin(), out.feature_ids.end());
  return out;
}

SynthConfig SynthConfig::sparse_signal(std::uint64_t seed) {
  SynthConfig cfg;
  cfg.vocab_size = 1000;
  cfg.sparsity = 0.5;
  cfg.signal = {10, 0.2, 0.02};
  cfg.seed = seed;
  return cfg;
}

SynthCorpus synth_corpus(const SynthConfig& cfg) {
  if (cfg.n_docs < 10) throw Error(ErrorKind::kConfig, "synth_corpus needs at least 10 documents");
  if (cfg.vocab_size < cfg.signal.n_tokens + 1) {
    throw Error(ErrorKind::kConfig, "vocabulary smaller than the signal token set");
  }
  if (cfg.min_length == 0 || cfg.min_length > cfg.max_length) {
    throw Error(ErrorKind::kConfig, "invalid document length range");
  }
  const auto in_unit = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!in_unit(cfg.signal.p_aligned) || !in_unit(cfg.signal.p_opposed)) {
    throw Error(ErrorKind::kConfig, "signal probabilities must lie in [0, 1]");
  }

  Rng rng(cfg.seed);
  std::vector<std::string> words(cfg.vocab_size);
  for (std::size_t i = 0; i < cfg.vocab_size; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "w%04zu", i);
    words[i] = buf;
  }

  // Signal tokens sit at random positions so column order carries no hint.
  auto signal_pos = sample_without_replacement(cfg.vocab_size, cfg.signal.n_tokens, rng);
  std::vector<bool> is_signal(cfg.vocab_size, false);
  for (auto p : signal_pos) is_signal[p] = true;

  SynthCorpus out;
  for (std::size_t i = 0; i < signal_pos.size(); ++i) {
    (i % 2 == 0 ? out.positive_tokens : out.negative_tokens).push_back(words[signal_pos[i]]);
  }

  std::vector<std::size_t> background;
  for (std::size_t i = 0; i < cfg.vocab_size; ++i) {
    if (!is_signal[i]) background.push_back(i);
  }
  std::shuffle(background.begin(), background.end(), rng);
  std::vector<double> zipf(background.size());
  for (std::size_t r = 0; r < zipf.size(); ++r) {
    zipf[r] = 1.0 / std::pow(static_cast<double>(r + 1), cfg.sparsity);
  }
  std::discrete_distribution<std::size_t> draw_background(zipf.begin(), zipf.end());
  std::uniform_int_distribution<std::size_t> draw_length(cfg.min_length, cfg.max_length);
  std::bernoulli_distribution aligned(cfg.signal.p_aligned);
  std::bernoulli_distribution opposed(cfg.signal.p_opposed);

  out.corpus.name = "synth";
  out.corpus.split_seed = cfg.seed;
  for (std::size_t d = 0; d < cfg.n_docs; ++d) {
    const int label = static_cast<int>(d % 2);
    std::vector<std::string> tokens;
    for (const auto& tok : out.positive_tokens) {
      if (label == 1 ? aligned(rng) : opposed(rng)) tokens.push_back(tok);
    }
    for (const auto& tok : out.negative_tokens) {
      if (label == 0 ? aligned(rng) : opposed(rng)) tokens.push_back(tok);
    }
    const std::size_t length = std::max(draw_length(rng), tokens.size());
    while (tokens.size() < length) tokens.push_back(words[background[draw_background(rng)]]);
    std::shuffle(tokens.begin(), tokens.end(), rng);
    std::string text;
    for (const auto& t : tokens) {
      if (!text.empty()) text.push_back(' ');
      text += t;
    }
    out.corpus.docs.push_back(Document::from_text("synth-" + std::to_string(d), std::move(text), label));
  }
  return out;
}

Vocabulary build_vocabulary(std::span<const Document> docs) {
  std::vector<std::vector<std::string>> lists;
  lists.reserve(docs.size());
  for (const auto& doc : docs) {
    std::vector<std::string> toks;
    toks.reserve(doc.counts.size());
    for (const auto& [t, n] : doc.counts) toks.push_back(t);
    lists.push_back(std::move(toks));
  }
  return Vocabulary::build(lists);
}

FeatureData to_features(std::span<const Document> docs, const Vocabulary& vocab) {
  FeatureData out;
  out.dim = vocab.size();
  out.rows.reserve(docs.size());
  out.labels.reserve(docs.size());
  for (const auto& doc : docs) {
    out.rows.push_back(count_vector(doc, vocab));
    out.labels.push_back(doc.label.value_or(0));
  }
  return out;
}

}  // namespace locex
