// locex command-line front end.
#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "locex/data.hpp"
#include "locex/error.hpp"
#include "locex/eval.hpp"
#include "locex/explain.hpp"
#include "locex/models.hpp"
#include "locex/pick.hpp"
#include "locex/rng.hpp"
#include "locex/service.hpp"

namespace fs = std::filesystem;
using locex::Json;

namespace {

constexpr std::size_t kDefaultSamples = 15000;
constexpr std::size_t kFastSamples = 5000;

struct Common {
  std::string dataset;
  std::size_t k = 10;
  std::size_t n_samples = kDefaultSamples;
  bool fast = false;
  double sigma = 0.25;
  std::uint64_t seed = 0;
  std::string out;
  unsigned threads = 0;

  std::size_t samples() const { return fast ? kFastSamples : n_samples; }
};

void add_explain_flags(CLI::App* cmd, Common& c) {
  cmd->add_option("--k", c.k, "words per explanation")->capture_default_str();
  cmd->add_option("--n-samples", c.n_samples, "perturbation samples per explanation")->capture_default_str();
  cmd->add_flag("--fast", c.fast, "use 5000 samples");
  cmd->add_option("--sigma", c.sigma, "kernel width")->capture_default_str();
}

void log_config(const std::string& command, const Json& cfg) {
  std::cerr << "locex " << command << " config=" << cfg.dump() << '\n';
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw locex::Error(locex::ErrorKind::kIo, "cannot write " + path.string());
  out << content;
}

Json read_file_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw locex::Error(locex::ErrorKind::kIo, "cannot read " + path.string());
  return Json::parse(in);
}

// Default experiment corpus when --dataset is not given.
locex::LabeledCorpus corpus_for(const Common& c) {
  if (!c.dataset.empty()) {
    auto corpus = locex::load_jsonl(c.dataset);
    corpus.name = fs::path(c.dataset).stem().string();
    return corpus;
  }
  auto corpus = locex::synth_corpus(locex::SynthConfig::sparse_signal(c.seed)).corpus;
  corpus.name = "synthetic";
  return corpus;
}

struct Prepared {
  locex::LabeledCorpus corpus;
  locex::Vocabulary vocab;
  locex::FeatureData train;
  locex::FeatureData heldout;
  locex::LabeledCorpus heldout_docs;
};

Prepared prepare(const Common& c, std::uint64_t split_seed) {
  Prepared p;
  p.corpus = corpus_for(c);
  auto parts = locex::split(p.corpus, 0.8, split_seed);
  p.vocab = locex::build_vocabulary(p.corpus.docs);
  p.train = locex::to_features(parts.train.docs, p.vocab);
  p.heldout = locex::to_features(parts.test.docs, p.vocab);
  p.heldout_docs = std::move(parts.test);
  return p;
}

locex::ModelPtr load_model(const std::string& path, const locex::Vocabulary& vocab) {
  const auto doc = read_file_json(path);
  const auto expected = doc.at("vocab_hash").get<std::string>();
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(vocab.hash()));
  if (expected != buf) {
    throw locex::Error(locex::ErrorKind::kSchema, "model " + path + " was trained on a different vocabulary");
  }
  return locex::model_from_document(doc);
}

void write_report(const locex::ExperimentReport& report, const std::string& out_dir) {
  const fs::path dir = out_dir.empty() ? fs::path(report.kind) : fs::path(out_dir);
  write_file(dir / "report.json", report.to_json().dump(2) + "\n");
  write_file(dir / "runs.csv", report.runs_csv());
  write_file(dir / "aggregate.csv", report.aggregate_csv());
  if (report.kind == "model_selection") write_file(dir / "selection_plot.csv", locex::selection_plot_csv(report));
  for (const auto& [name, s] : report.aggregate) {
    std::cout << name << " mean=" << s.mean << " se=" << s.std_error << " n=" << s.count << '\n';
  }
  std::cout << report.kind << ": wrote " << dir.string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"locex: local explanations for black-box text classifiers"};
  app.require_subcommand(1);
  Common c;

  // synth-data
  auto* synth = app.add_subcommand("synth-data", "write a synthetic labeled corpus as JSONL");
  locex::SynthConfig synth_cfg;
  synth->add_option("--n-docs", synth_cfg.n_docs)->capture_default_str();
  synth->add_option("--vocab-size", synth_cfg.vocab_size)->capture_default_str();
  synth->add_option("--signal-tokens", synth_cfg.signal.n_tokens)->capture_default_str();
  synth->add_option("--seed", c.seed)->capture_default_str();
  synth->add_option("--out", c.out, "output .jsonl")->required();

  // train
  auto* train = app.add_subcommand("train", "train a classifier and save its model document");
  std::string kind = "logreg";
  std::string params = "{}";
  train->add_option("--dataset", c.dataset, "JSONL corpus")->required();
  train->add_option("--kind", kind, "logreg|sparse_logreg|decision_tree|knn|random_forest")->capture_default_str();
  train->add_option("--params", params, "hyperparameters as JSON")->capture_default_str();
  train->add_option("--seed", c.seed)->capture_default_str();
  train->add_option("--out", c.out, "model document path")->required();

  // explain
  auto* explain = app.add_subcommand("explain", "explain one held-out instance or a text");
  std::string model_path;
  std::size_t index = 0;
  std::string text;
  explain->add_option("--dataset", c.dataset, "JSONL corpus the model was trained on")->required();
  explain->add_option("--model", model_path, "model document")->required();
  explain->add_option("--index", index, "held-out instance index")->capture_default_str();
  explain->add_option("--text", text, "explain this text instead of a held-out instance");
  add_explain_flags(explain, c);
  explain->add_option("--seed", c.seed)->capture_default_str();
  explain->add_option("--out", c.out, "explanation JSON path (stdout when absent)");

  // pick
  auto* pick = app.add_subcommand("pick", "submodular pick over held-out explanations");
  std::size_t budget = 10;
  std::size_t pool = 100;
  pick->add_option("--dataset", c.dataset, "JSONL corpus the model was trained on")->required();
  pick->add_option("--model", model_path, "model document")->required();
  pick->add_option("--budget", budget, "instances to pick")->capture_default_str();
  pick->add_option("--pool", pool, "first held-out instances to explain")->capture_default_str();
  add_explain_flags(pick, c);
  pick->add_option("--seed", c.seed)->capture_default_str();
  pick->add_option("--out", c.out, "pick JSON path (stdout when absent)");

  // experiments
  std::size_t runs = 0;
  bool full_scale = false;
  auto* faith = app.add_subcommand("eval-faithfulness", "gold-feature recall of explainers");
  auto* trust = app.add_subcommand("eval-trust", "simulated-user trust F1");
  auto* select = app.add_subcommand("eval-select", "model selection with picked explanations");
  for (auto* cmd : {faith, trust, select}) {
    cmd->add_option("--dataset", c.dataset, "JSONL corpus (synthetic when absent)");
    add_explain_flags(cmd, c);
    cmd->add_option("--seed", c.seed)->capture_default_str();
    cmd->add_option("--out", c.out, "output directory");
    cmd->add_option("--threads", c.threads, "worker threads (0 = all cores)");
  }
  trust->add_option("--runs", runs, "runs (default 25)");
  select->add_option("--runs", runs, "classifier pairs (default 100)");
  select->add_option("--budget", budget, "only this B (default: 5..30)");
  select->add_flag("--full-scale", full_scale, "800 pairs, 0.1%/5% accuracy gaps");

  // serve
  auto* serve = app.add_subcommand("serve", "run the HTTP API");
  std::string listen = "127.0.0.1:8080";
  std::string data_dir = "locex-data";
  std::vector<std::string> extra_datasets;
  serve->add_option("--listen", listen, "host:port")->capture_default_str();
  serve->add_option("--data-dir", data_dir, "model/session store; datasets/*.jsonl autoload")
      ->envname("LOCEX_DATA_DIR")
      ->capture_default_str();
  serve->add_option("--dataset", extra_datasets, "extra JSONL corpora to register");
  serve->add_option("--k", c.k, "default words per explanation")->capture_default_str();
  std::size_t serve_samples = kFastSamples;
  serve->add_option("--n-samples", serve_samples, "default samples")->capture_default_str();
  serve->add_option("--sigma", c.sigma, "default kernel width")->capture_default_str();
  serve->add_option("--seed", c.seed, "master seed")->envname("LOCEX_SEED")->capture_default_str();

  if (argc <= 1) {
    std::cerr << app.help();
    return 2;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    const auto started = std::chrono::steady_clock::now();
    if (*synth) {
      synth_cfg.seed = c.seed;
      log_config("synth-data", {{"n_docs", synth_cfg.n_docs},
                                {"vocab_size", synth_cfg.vocab_size},
                                {"signal_tokens", synth_cfg.signal.n_tokens},
                                {"seed", c.seed},
                                {"out", c.out}});
      auto s = locex::synth_corpus(synth_cfg);
      locex::save_jsonl(s.corpus, c.out);
      std::cout << "synth-data: " << s.corpus.size() << " docs -> " << c.out << '\n';
    } else if (*train) {
      locex::ModelSpec spec{kind, Json::parse(params), c.seed};
      log_config("train", {{"dataset", c.dataset}, {"spec", spec.to_json()}, {"seed", c.seed}, {"out", c.out}});
      const auto p = prepare(c, 0);
      const auto model = locex::train_model(spec, p.train);
      auto doc = locex::model_document(*model, p.vocab.hash());
      doc["spec"] = spec.to_json();
      write_file(c.out, doc.dump(2) + "\n");
      std::cout << "train: " << kind << " train_acc=" << locex::accuracy(*model, p.train)
                << " heldout_acc=" << locex::accuracy(*model, p.heldout) << " -> " << c.out << '\n';
    } else if (*explain) {
      locex::ExplanationConfig cfg;
      cfg.k = c.k;
      cfg.n = c.samples();
      cfg.kernel.sigma = c.sigma;
      cfg.seed = c.seed;
      log_config("explain", {{"dataset", c.dataset}, {"model", model_path}, {"index", index}, {"text", text},
                             {"k", cfg.k}, {"n_samples", cfg.n}, {"sigma", cfg.kernel.sigma}, {"seed", c.seed}});
      const auto p = prepare(c, 0);
      const auto model = load_model(model_path, p.vocab);
      locex::Explanation e;
      if (!text.empty()) {
        e = locex::explain_instance(*model, locex::Document::from_text("text", text), p.vocab, cfg);
      } else {
        if (index >= p.heldout.size()) throw locex::Error(locex::ErrorKind::kRange, "--index outside held-out set");
        e = locex::explain_instance(*model, p.heldout.rows[index], p.vocab, cfg, p.heldout_docs.docs[index].id);
      }
      const auto body = e.to_json().dump(2) + "\n";
      if (c.out.empty()) {
        std::cout << body;
      } else {
        write_file(c.out, body);
        std::cout << "explain: " << e.features.size() << " words, fidelity=" << e.fidelity << " -> " << c.out << '\n';
      }
    } else if (*pick) {
      log_config("pick", {{"dataset", c.dataset}, {"model", model_path}, {"budget", budget}, {"pool", pool},
                          {"k", c.k}, {"n_samples", c.samples()}, {"sigma", c.sigma}, {"seed", c.seed}});
      const auto p = prepare(c, 0);
      const auto model = load_model(model_path, p.vocab);
      locex::ExplanationConfig cfg;
      cfg.k = c.k;
      cfg.n = c.samples();
      cfg.kernel.sigma = c.sigma;
      std::vector<locex::Explanation> explanations;
      std::vector<std::size_t> rows;
      for (std::size_t i = 0; i < std::min(pool, p.heldout.size()); ++i) {
        if (p.heldout.rows[i].entries.empty()) continue;
        cfg.seed = locex::derive_seed(c.seed, i);
        explanations.push_back(locex::explain_instance(*model, p.heldout.rows[i], p.vocab, cfg,
                                                       p.heldout_docs.docs[i].id));
        rows.push_back(i);
      }
      const auto w = locex::build_matrix(explanations, p.vocab.size());
      const auto result = locex::submodular_pick(w, budget);
      Json out{{"selected", Json::array()}, {"coverage_trace", result.coverage_trace}, {"explanations", Json::array()}};
      for (auto r : result.selected) {
        out["selected"].push_back(rows[r]);
        out["explanations"].push_back(explanations[r].to_json());
      }
      if (c.out.empty()) {
        std::cout << out.dump(2) << '\n';
      } else {
        write_file(c.out, out.dump(2) + "\n");
        std::cout << "pick: " << result.selected.size() << " instances, coverage="
                  << (result.coverage_trace.empty() ? 0.0 : result.coverage_trace.back()) << " -> " << c.out << '\n';
      }
    } else if (*faith) {
      locex::FaithfulnessConfig cfg;
      cfg.k = c.k;
      cfg.n_samples = c.samples();
      cfg.sigma = c.sigma;
      cfg.seed = c.seed;
      cfg.threads = c.threads;
      const auto corpus = corpus_for(c);
      log_config("eval-faithfulness", {{"dataset", corpus.name}, {"k", cfg.k}, {"n_samples", cfg.n_samples},
                                       {"sigma", cfg.sigma}, {"seed", cfg.seed}});
      write_report(locex::faithfulness_experiment(corpus, cfg), c.out);
    } else if (*trust) {
      locex::TrustConfig cfg;
      if (runs > 0) cfg.runs = runs;
      cfg.k = c.k;
      cfg.n_samples = c.samples();
      cfg.sigma = c.sigma;
      cfg.seed = c.seed;
      cfg.threads = c.threads;
      const auto corpus = corpus_for(c);
      log_config("eval-trust", {{"dataset", corpus.name}, {"runs", cfg.runs}, {"k", cfg.k},
                                {"n_samples", cfg.n_samples}, {"sigma", cfg.sigma}, {"seed", cfg.seed}});
      write_report(locex::trust_f1_experiment(corpus, cfg), c.out);
    } else if (*select) {
      auto cfg = full_scale ? locex::SelectionConfig::full_scale() : locex::SelectionConfig::desk();
      if (runs > 0) cfg.n_pairs = runs;
      if (select->count("--budget") > 0) cfg.budgets = {budget};
      cfg.k = c.k;
      if (select->count("--n-samples") > 0 || c.fast) cfg.n_samples = c.samples();
      cfg.sigma = c.sigma;
      cfg.seed = c.seed;
      cfg.threads = c.threads;
      const auto corpus = corpus_for(c);
      log_config("eval-select", {{"dataset", corpus.name}, {"n_pairs", cfg.n_pairs}, {"budgets", cfg.budgets},
                                 {"k", cfg.k}, {"n_samples", cfg.n_samples}, {"sigma", cfg.sigma},
                                 {"val_gap", cfg.val_gap}, {"test_gap", cfg.test_gap}, {"seed", cfg.seed}});
      write_report(locex::model_selection_experiment(corpus, cfg), c.out);
    } else if (*serve) {
      const auto colon = listen.rfind(':');
      if (colon == std::string::npos) throw locex::Error(locex::ErrorKind::kConfig, "--listen wants host:port");
      locex::service::ServiceConfig cfg;
      cfg.data_dir = data_dir;
      cfg.default_k = c.k;
      cfg.default_n = serve_samples;
      cfg.default_sigma = c.sigma;
      cfg.master_seed = c.seed;
      log_config("serve", {{"listen", listen}, {"data_dir", data_dir}, {"k", cfg.default_k},
                           {"n_samples", cfg.default_n}, {"sigma", cfg.default_sigma}, {"seed", cfg.master_seed}});
      locex::service::Service service(cfg);
      for (const auto& path : extra_datasets) {
        auto corpus = locex::load_jsonl(path);
        corpus.name = fs::path(path).stem().string();
        service.register_dataset(std::move(corpus));
      }
      std::cout << "serving on " << listen << '\n' << std::flush;
      locex::service::serve(service, listen.substr(0, colon), std::stoi(listen.substr(colon + 1)));
    }
    const auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    std::cerr << "done in " << secs << " s\n";
    return 0;
  } catch (const locex::Error& e) {
    std::cerr << "error: " << locex::to_string(e.kind()) << ": " << e.what() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
  }
  return 1;
}
