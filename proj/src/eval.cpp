#include "locex/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "locex/error.hpp"
#include "locex/rng.hpp"

namespace locex {

using nlohmann::json;

std::string_view to_string(ExplainerKind kind) {
  switch (kind) {
    case ExplainerKind::kLime: return "lime";
    case ExplainerKind::kGreedy: return "greedy";
    case ExplainerKind::kRandom: return "random";
  }
  return "unknown";
}

ExplainerKind parse_explainer(std::string_view name) {
  if (name == "lime") return ExplainerKind::kLime;
  if (name == "greedy") return ExplainerKind::kGreedy;
  if (name == "random") return ExplainerKind::kRandom;
  throw Error(ErrorKind::kConfig, "unknown explainer '" + std::string(name) + "'");
}

MetricSummary summarize(std::span<const double> values) {
  MetricSummary s;
  s.count = values.size();
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    const double sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
    s.std_error = sd / std::sqrt(static_cast<double>(values.size()));
  }
  return s;
}

json ExperimentReport::to_json() const {
  json agg = json::object();
  for (const auto& [name, s] : aggregate) {
    agg[name] = {{"mean", s.mean}, {"std_error", s.std_error}, {"count", s.count}};
  }
  return {{"kind", kind}, {"config", config}, {"aggregate", agg}, {"runs", runs}};
}

namespace {

std::string csv_cell(const json& v) {
  if (v.is_string()) {
    std::string s = v.get<std::string>();
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string quoted = "\"";
    for (char ch : s) {
      if (ch == '"') quoted += '"';
      quoted += ch;
    }
    return quoted + "\"";
  }
  if (v.is_null()) return "";
  return v.dump();
}

}  // namespace

std::string ExperimentReport::runs_csv() const {
  std::set<std::string> keys;
  for (const auto& r : runs) {
    for (const auto& [k, v] : r.items()) keys.insert(k);
  }
  std::ostringstream out;
  bool first = true;
  for (const auto& k : keys) {
    out << (first ? "" : ",") << k;
    first = false;
  }
  out << '\n';
  for (const auto& r : runs) {
    first = true;
    for (const auto& k : keys) {
      out << (first ? "" : ",") << (r.contains(k) ? csv_cell(r.at(k)) : "");
      first = false;
    }
    out << '\n';
  }
  return out.str();
}

std::string ExperimentReport::aggregate_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "metric,mean,std_error,count\n";
  for (const auto& [name, s] : aggregate) {
    out << name << ',' << s.mean << ',' << s.std_error << ',' << s.count << '\n';
  }
  return out.str();
}

void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& body) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> workers;
    for (unsigned t = 0; t < threads; ++t) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            body(i);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            next = n;
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

// ------------------------------------------------------------------- trust

bool trust_oracle(const ProbabilityModel& f, const CountVector& x,
                  std::span<const Column> untrustworthy) {
  std::vector<Column> cols(untrustworthy.begin(), untrustworthy.end());
  std::sort(cols.begin(), cols.end());
  const auto reduced = drop_columns(x, cols);
  if (reduced.entries.size() == x.entries.size()) return true;
  return predicted_class(f.predict_prob(x)) == predicted_class(f.predict_prob(reduced));
}

bool simulated_user_trusts(const Explanation& e, std::span<const Column> untrustworthy,
                           double threshold) {
  std::vector<Column> hit;
  for (const auto& f : e.features) {
    if (std::find(untrustworthy.begin(), untrustworthy.end(), f.column) != untrustworthy.end()) {
      hit.push_back(f.column);
    }
  }
  if (hit.empty()) return true;
  const double full = e.evaluate_without({});
  const double discounted = e.evaluate_without(hit);
  return (full > threshold) == (discounted > threshold);
}

bool simulated_user_trusts(std::span<const Column> features, std::span<const Column> untrustworthy) {
  for (Column c : features) {
    if (std::find(untrustworthy.begin(), untrustworthy.end(), c) != untrustworthy.end()) return false;
  }
  return true;
}

double trust_f1(const std::vector<bool>& oracle, const std::vector<bool>& simulated) {
  if (oracle.size() != simulated.size()) throw Error(ErrorKind::kShape, "verdict lists differ in length");
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  for (std::size_t i = 0; i < oracle.size(); ++i) {
    if (oracle[i] && simulated[i]) ++tp;
    if (!oracle[i] && simulated[i]) ++fp;
    if (oracle[i] && !simulated[i]) ++fn;
  }
  if (tp + fp + fn == 0) return 1.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

// -------------------------------------------------------------- utilities

namespace {

struct Workspace {
  Vocabulary vocab;
  FeatureData train;
  FeatureData test;
  std::vector<std::string> test_ids;
};

Workspace prepare(const LabeledCorpus& corpus, double train_frac, std::uint64_t seed) {
  auto parts = split(corpus, train_frac, seed);
  Workspace ws;
  ws.vocab = build_vocabulary(corpus.docs);
  ws.train = to_features(parts.train.docs, ws.vocab);
  ws.test = to_features(parts.test.docs, ws.vocab);
  for (const auto& d : parts.test.docs) ws.test_ids.push_back(d.id);
  return ws;
}

double recall(std::span<const Column> found, std::span<const Column> gold) {
  std::size_t hit = 0;
  for (Column g : gold) {
    if (std::find(found.begin(), found.end(), g) != found.end()) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(gold.size());
}

ExplanationConfig explanation_config(std::size_t k, std::size_t n, double sigma, std::uint64_t seed) {
  ExplanationConfig c;
  c.k = k;
  c.n = n;
  c.kernel.sigma = sigma;
  c.seed = seed;
  return c;
}

}  // namespace

// ------------------------------------------------------------ faithfulness

ExperimentReport faithfulness_experiment(const LabeledCorpus& corpus, const FaithfulnessConfig& cfg) {
  const auto ws = prepare(corpus, cfg.train_frac, cfg.seed);

  SparseLogRegParams sp;
  sp.k_max = cfg.max_model_features;
  sp.seed = cfg.seed;
  const auto sparse = train_sparse_logreg(ws.train, sp).model;
  TreeParams tp;
  tp.max_active_features = cfg.max_model_features;
  tp.max_depth = cfg.tree_max_depth;
  tp.seed = cfg.seed;
  const auto tree = train_decision_tree(ws.train, tp);

  const std::vector<std::pair<std::string, ModelPtr>> models{{"sparse_lr", sparse}, {"decision_tree", tree}};

  ExperimentReport report;
  report.kind = "faithfulness";
  report.config = {{"k", cfg.k},
                   {"n_samples", cfg.n_samples},
                   {"sigma", cfg.sigma},
                   {"seed", cfg.seed},
                   {"train_frac", cfg.train_frac},
                   {"max_model_features", cfg.max_model_features},
                   {"tree_max_depth", cfg.tree_max_depth},
                   {"corpus", corpus.name},
                   {"n_docs", corpus.size()},
                   {"vocab_size", ws.vocab.size()}};

  for (const auto& [name, model] : models) {
    const std::size_t n = ws.test.size();
    std::vector<json> rows(n);
    parallel_for(n, cfg.threads, [&](std::size_t i) {
      const auto& x = ws.test.rows[i];
      const auto gold = gold_features(*model, x);
      if (!gold || gold->empty()) return;
      const std::uint64_t s = derive_seed(cfg.seed, i);
      const auto lime = explain_instance(*model, x, ws.vocab, explanation_config(cfg.k, cfg.n_samples, cfg.sigma, s));
      const auto greedy = greedy_explain(*model, x, cfg.k);
      const auto random = random_explain(presence(x), cfg.k, derive_seed(s, 1));
      rows[i] = {{"model", name},
                 {"instance", ws.test_ids[i]},
                 {"gold_size", gold->size()},
                 {"lime", recall(lime.columns(), *gold)},
                 {"greedy", recall(greedy, *gold)},
                 {"random", recall(random, *gold)}};
    });
    std::map<std::string, std::vector<double>> per_explainer;
    for (auto& r : rows) {
      if (r.is_null()) continue;
      for (const char* e : {"lime", "greedy", "random"}) per_explainer[e].push_back(r[e].get<double>());
      report.runs.push_back(std::move(r));
    }
    for (const auto& [e, values] : per_explainer) report.aggregate[name + "/" + e] = summarize(values);
  }
  return report;
}

double faithfulness_recall(const std::string& model_kind, ExplainerKind explainer,
                           const LabeledCorpus& corpus, const FaithfulnessConfig& cfg) {
  if (model_kind != "sparse_lr" && model_kind != "decision_tree") {
    throw Error(ErrorKind::kConfig, "faithfulness needs a model with gold features (sparse_lr, decision_tree)");
  }
  const auto report = faithfulness_experiment(corpus, cfg);
  return report.aggregate.at(model_kind + "/" + std::string(to_string(explainer))).mean;
}

// ------------------------------------------------------------------- trust

std::vector<ModelSpec> TrustConfig::default_classifiers() {
  return {{"logreg", json::object(), 0},
          {"sparse_logreg", json::object(), 0},
          {"decision_tree", json::object(), 0},
          {"knn", {{"k", 5}}, 0},
          {"random_forest", {{"n_trees", 30}}, 0}};
}

ExperimentReport trust_f1_experiment(const LabeledCorpus& corpus, const TrustConfig& cfg) {
  if (cfg.runs == 0) throw Error(ErrorKind::kConfig, "trust experiment needs at least one run");
  const auto ws = prepare(corpus, cfg.train_frac, cfg.seed);
  const std::size_t n_test = ws.test.size();

  struct Prepared {
    std::string name;
    ModelPtr model;
    std::vector<bool> usable;
    std::vector<Explanation> lime;
    std::vector<std::vector<Column>> greedy;
  };
  std::vector<Prepared> prepared;
  for (const auto& spec_in : cfg.classifiers) {
    ModelSpec spec = spec_in;
    spec.seed = derive_seed(cfg.seed, prepared.size() + 17);
    Prepared p;
    p.name = spec.kind;
    p.model = train_model(spec, ws.train);
    p.usable.assign(n_test, false);
    p.lime.resize(n_test);
    p.greedy.resize(n_test);
    parallel_for(n_test, cfg.threads, [&](std::size_t i) {
      const auto& x = ws.test.rows[i];
      if (x.entries.empty()) return;
      p.lime[i] = explain_instance(*p.model, x, ws.vocab,
                                   explanation_config(cfg.k, cfg.n_samples, cfg.sigma, derive_seed(cfg.seed, i)),
                                   ws.test_ids[i]);
      p.greedy[i] = greedy_explain(*p.model, x, cfg.k);
      p.usable[i] = true;
    });
    prepared.push_back(std::move(p));
  }

  ExperimentReport report;
  report.kind = "trust_f1";
  json classifiers = json::array();
  for (const auto& c : cfg.classifiers) classifiers.push_back(c.to_json());
  report.config = {{"runs", cfg.runs},
                   {"k", cfg.k},
                   {"n_samples", cfg.n_samples},
                   {"sigma", cfg.sigma},
                   {"seed", cfg.seed},
                   {"train_frac", cfg.train_frac},
                   {"untrustworthy_fraction", cfg.untrustworthy_fraction},
                   {"classifiers", classifiers},
                   {"corpus", corpus.name},
                   {"vocab_size", ws.vocab.size()}};

  std::vector<std::vector<json>> rows(cfg.runs);
  parallel_for(cfg.runs, cfg.threads, [&](std::size_t run) {
    const std::uint64_t run_seed = derive_seed(cfg.seed, 1'000'000 + run);
    const auto untrusted = pick_untrustworthy(ws.vocab.size(), cfg.untrustworthy_fraction, run_seed);
    const auto& bad = untrusted.feature_ids;
    for (const auto& p : prepared) {
      std::vector<bool> oracle;
      std::vector<bool> lime;
      std::vector<bool> greedy;
      std::vector<bool> random;
      for (std::size_t i = 0; i < n_test; ++i) {
        if (!p.usable[i]) continue;
        const auto& x = ws.test.rows[i];
        oracle.push_back(trust_oracle(*p.model, x, bad));
        lime.push_back(simulated_user_trusts(p.lime[i], bad));
        greedy.push_back(simulated_user_trusts(p.greedy[i], bad));
        random.push_back(simulated_user_trusts(random_explain(presence(x), cfg.k, derive_seed(run_seed, i)), bad));
      }
      const auto n_trust = static_cast<std::size_t>(std::count(oracle.begin(), oracle.end(), true));
      rows[run].push_back(json{{"run", run},
                           {"classifier", p.name},
                           {"oracle_trustworthy", n_trust},
                           {"instances", oracle.size()},
                           {"lime", trust_f1(oracle, lime)},
                           {"greedy", trust_f1(oracle, greedy)},
                           {"random", trust_f1(oracle, random)}});
    }
  });

  std::map<std::string, std::vector<double>> values;
  for (auto& run_rows : rows) {
    for (auto& r : run_rows) {
      for (const char* e : {"lime", "greedy", "random"}) {
        values[r["classifier"].get<std::string>() + "/" + e].push_back(r[e].get<double>());
      }
      report.runs.push_back(std::move(r));
    }
  }
  for (const auto& [k, v] : values) report.aggregate[k] = summarize(v);
  return report;
}

// --------------------------------------------------------- model selection

SelectionConfig SelectionConfig::full_scale() {
  SelectionConfig c;
  c.n_pairs = 800;
  c.val_gap = 0.001;
  c.test_gap = 0.05;
  c.n_samples = 15000;
  c.max_attempts = 2000;
  return c;
}

namespace {

struct Forest {
  ModelPtr model;
  double val_acc = 0.0;
  double test_acc = 0.0;
  std::uint64_t seed = 0;
};

std::pair<Forest, Forest> find_pair(const FeatureData& train, const FeatureData& val,
                                    const FeatureData& test, const SelectionConfig& cfg,
                                    std::uint64_t pair_seed) {
  std::vector<Forest> pool;
  for (std::size_t attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    ForestParams fp;
    fp.n_trees = cfg.n_trees;
    fp.seed = derive_seed(pair_seed, attempt);
    Forest f{train_random_forest(train, fp), 0.0, 0.0, fp.seed};
    f.val_acc = accuracy(*f.model, val);
    f.test_acc = accuracy(*f.model, test);
    for (const auto& other : pool) {
      if (std::abs(other.val_acc - f.val_acc) <= cfg.val_gap + 1e-12 &&
          std::abs(other.test_acc - f.test_acc) >= cfg.test_gap - 1e-12) {
        return {other, f};
      }
    }
    pool.push_back(std::move(f));
  }
  throw Error(ErrorKind::kPairSearchTimeout,
              "no classifier pair met the accuracy thresholds within " + std::to_string(cfg.max_attempts) +
                  " forests");
}

std::size_t count_untrustworthy(const ProbabilityModel& f, const FeatureData& val,
                                std::span<const Column> marked) {
  if (marked.empty()) return 0;
  std::size_t n = 0;
  for (const auto& x : val.rows) n += trust_oracle(f, x, marked) ? 0 : 1;
  return n;
}

std::vector<Column> marked_features(const PickResult& pick, std::span<const std::vector<Column>> features,
                                    std::span<const Column> noisy) {
  std::vector<Column> out;
  for (auto i : pick.selected) {
    for (Column c : features[i]) {
      if (std::binary_search(noisy.begin(), noisy.end(), c)) out.push_back(c);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace

ExperimentReport model_selection_experiment(const LabeledCorpus& corpus, const SelectionConfig& cfg) {
  if (cfg.n_pairs == 0 || cfg.budgets.empty()) throw Error(ErrorKind::kConfig, "selection needs pairs and budgets");
  const auto outer = split(corpus, cfg.train_frac, cfg.seed);
  const auto inner = split(outer.train, 1.0 - cfg.val_frac, derive_seed(cfg.seed, 1));
  const auto spec = NoisyFeatureSpec::standard();
  // Shared column layout: every corpus word plus the noisy words.
  std::vector<Document> all = corpus.docs;
  Document extra;
  for (const auto& t : spec.feature_tokens) extra.append_token(t);
  all.push_back(std::move(extra));
  const Vocabulary vocab = build_vocabulary(all);
  std::vector<Column> noisy_cols;
  for (const auto& t : spec.feature_tokens) noisy_cols.push_back(*vocab.find(t));
  std::sort(noisy_cols.begin(), noisy_cols.end());

  const std::vector<std::string> picks{"SP", "RP"};
  const std::vector<std::string> explainers{"lime", "greedy"};
  std::vector<json> rows(cfg.n_pairs);

  parallel_for(cfg.n_pairs, cfg.threads, [&](std::size_t pair) {
    const std::uint64_t pair_seed = derive_seed(cfg.seed, 10'000 + pair);
    const auto noisy = inject_noisy_features(inner.train, inner.test, outer.test, spec, derive_seed(pair_seed, 2));
    const auto train = to_features(noisy.train.docs, vocab);
    const auto val = to_features(noisy.val.docs, vocab);
    const auto test = to_features(noisy.test.docs, vocab);
    const auto [a, b] = find_pair(train, val, test, cfg, pair_seed);
    const std::array<const Forest*, 2> forests{&a, &b};

    // Explanations of every validation instance, per classifier.
    std::array<std::vector<Explanation>, 2> lime;
    std::array<std::vector<std::vector<Column>>, 2> lime_cols;
    std::array<std::vector<std::vector<Column>>, 2> greedy;
    for (std::size_t c = 0; c < 2; ++c) {
      for (std::size_t i = 0; i < val.size(); ++i) {
        const auto& x = val.rows[i];
        if (x.entries.empty()) {
          lime[c].emplace_back();
          lime_cols[c].emplace_back();
          greedy[c].emplace_back();
          continue;
        }
        lime[c].push_back(explain_instance(*forests[c]->model, x, vocab,
                                           explanation_config(cfg.k, cfg.n_samples, cfg.sigma,
                                                              derive_seed(pair_seed, i))));
        lime_cols[c].push_back(lime[c].back().columns());
        greedy[c].push_back(greedy_explain(*forests[c]->model, x, cfg.k));
      }
    }
    std::array<ExplanationMatrix, 2> lime_w{build_matrix(lime[0], vocab.size()),
                                            build_matrix(lime[1], vocab.size())};
    std::array<ExplanationMatrix, 2> greedy_w{build_matrix(greedy[0], vocab.size()),
                                              build_matrix(greedy[1], vocab.size())};

    const int better = a.test_acc > b.test_acc ? 0 : 1;
    json row{{"pair", pair},
             {"val_acc_a", a.val_acc},
             {"val_acc_b", b.val_acc},
             {"test_acc_a", a.test_acc},
             {"test_acc_b", b.test_acc},
             {"seed_a", a.seed},
             {"seed_b", b.seed}};
    for (std::size_t budget : cfg.budgets) {
      for (const auto& pick : picks) {
        for (const auto& expl : explainers) {
          std::array<std::size_t, 2> untrusted{};
          for (std::size_t c = 0; c < 2; ++c) {
            const auto& w = expl == "lime" ? lime_w[c] : greedy_w[c];
            const auto& feats = expl == "lime" ? lime_cols[c] : greedy[c];
            const auto chosen = pick == "SP" ? submodular_pick(w, budget)
                                             : random_pick(w, budget, derive_seed(pair_seed, 100 * budget + c));
            untrusted[c] = count_untrustworthy(*forests[c]->model, val, marked_features(chosen, feats, noisy_cols));
          }
          double credit = 0.5;
          if (untrusted[0] != untrusted[1]) credit = (untrusted[0] < untrusted[1] ? 0 : 1) == better ? 1.0 : 0.0;
          row[pick + "-" + expl + "@" + std::to_string(budget)] = credit;
        }
      }
    }
    rows[pair] = std::move(row);
  });

  ExperimentReport report;
  report.kind = "model_selection";
  report.config = {{"n_pairs", cfg.n_pairs},
                   {"budgets", cfg.budgets},
                   {"k", cfg.k},
                   {"n_samples", cfg.n_samples},
                   {"sigma", cfg.sigma},
                   {"seed", cfg.seed},
                   {"val_gap", cfg.val_gap},
                   {"test_gap", cfg.test_gap},
                   {"max_attempts", cfg.max_attempts},
                   {"n_trees", cfg.n_trees},
                   {"train_frac", cfg.train_frac},
                   {"val_frac", cfg.val_frac},
                   {"corpus", corpus.name},
                   {"vocab_size", vocab.size()},
                   {"n_val", inner.test.size()},
                   {"n_test", outer.test.size()}};
  std::map<std::string, std::vector<double>> values;
  for (auto& r : rows) {
    for (const auto& [k, v] : r.items()) {
      if (k.find('@') != std::string::npos) values[k].push_back(v.get<double>());
    }
    report.runs.push_back(std::move(r));
  }
  for (const auto& [k, v] : values) report.aggregate[k] = summarize(v);
  return report;
}

std::string selection_plot_csv(const ExperimentReport& report) {
  std::ostringstream out;
  out.precision(17);
  out << "method,B,mean,std_error\n";
  for (const auto& [key, s] : report.aggregate) {
    const auto at = key.find('@');
    if (at == std::string::npos) continue;
    out << key.substr(0, at) << ',' << key.substr(at + 1) << ',' << s.mean << ',' << s.std_error << '\n';
  }
  return out.str();
}

}  // namespace locex
