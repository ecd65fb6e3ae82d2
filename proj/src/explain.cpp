#include "locex/explain.hpp"

#include <algorithm>
#include <cmath>

#include "locex/error.hpp"
#include "locex/rng.hpp"

namespace locex {

double kernel_weight(double distance, const KernelConfig& cfg) {
  if (!(cfg.sigma > 0.0)) throw Error(ErrorKind::kConfig, "kernel width must be > 0");
  if (!(distance >= 0.0)) throw Error(ErrorKind::kRange, "distance must be >= 0");
  return std::exp(-(distance * distance) / (cfg.sigma * cfg.sigma));
}

PerturbedSample SurrogateDataset::sample(std::size_t row) const {
  const std::size_t m = width();
  std::vector<Column> support;
  for (std::size_t i = 0; i < m; ++i) {
    if (masks.at(row * m + i) != 0.0) support.push_back(xprime.support[i]);
  }
  return {InterpretableVector::from_support(xprime.dim(), std::move(support)), labels.at(row),
          weights.at(row), distances.at(row)};
}

SurrogateDataset build_surrogate(const ProbabilityModel& f, const CountVector& x, std::size_t n,
                                 const KernelConfig& cfg, std::uint64_t seed, int target_class) {
  if (n == 0) throw Error(ErrorKind::kConfig, "number of samples must be >= 1");
  if (!(cfg.sigma > 0.0)) throw Error(ErrorKind::kConfig, "kernel width must be > 0");
  if (target_class != 0 && target_class != 1) throw Error(ErrorKind::kConfig, "target class must be 0 or 1");
  const auto ignored = f.ignored_columns();
  CountVector base = ignored.empty() ? x : drop_columns(x, ignored);
  std::erase_if(base.entries, [](const CountVector::Entry& e) { return e.count == 0; });

  SurrogateDataset z;
  z.xprime = presence(base);
  const std::size_t m = z.xprime.active();
  z.masks = sample_keep_masks(m, n, seed);
  z.labels = f.predict_masked(base, z.masks);
  if (target_class == 0) {
    for (auto& p : z.labels) p = 1.0 - p;
  }
  z.distances.resize(n);
  z.weights.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t kept = 0;
    for (std::size_t i = 0; i < m; ++i) kept += z.masks[r * m + i] != 0.0 ? 1 : 0;
    z.distances[r] = binary_cosine_distance(kept, m, kept);
    z.weights[r] = kernel_weight(z.distances[r], cfg);
  }
  return z;
}

SurrogateDataset build_surrogate(const ProbabilityModel& f, const Document& doc,
                                 const Vocabulary& vocab, std::size_t n, const KernelConfig& cfg,
                                 std::uint64_t seed, int target_class) {
  return build_surrogate(f, count_vector(doc, vocab), n, cfg, seed, target_class);
}

LinearFit k_lasso(const SurrogateDataset& z, std::size_t k) { return k_lasso(z.design(), k); }

double Explanation::evaluate(const InterpretableVector& zprime) const {
  double v = intercept;
  for (const auto& f : features) {
    if (f.column < zprime.dim() && zprime.bits[f.column] != 0) v += f.weight;
  }
  return v;
}

double Explanation::evaluate_without(std::span<const Column> removed) const {
  double v = intercept;
  for (const auto& f : features) {
    if (std::find(removed.begin(), removed.end(), f.column) == removed.end()) v += f.weight;
  }
  return v;
}

std::vector<Column> Explanation::columns() const {
  std::vector<Column> out;
  out.reserve(features.size());
  for (const auto& f : features) out.push_back(f.column);
  return out;
}

nlohmann::json Explanation::to_json() const {
  nlohmann::json feats = nlohmann::json::array();
  for (const auto& f : features) {
    feats.push_back({{"token", f.token}, {"column", f.column}, {"weight", f.weight}});
  }
  return {{"instance_id", instance_id},
          {"target_class", target_class},
          {"intercept", intercept},
          {"fidelity", fidelity},
          {"features", feats},
          {"config",
           {{"k", config.k},
            {"n", config.n},
            {"sigma", config.kernel.sigma},
            {"seed", config.seed},
            {"distance", "cosine"}}}};
}

Explanation Explanation::from_json(const nlohmann::json& j) {
  try {
    Explanation e;
    e.instance_id = j.at("instance_id").get<std::string>();
    e.target_class = j.at("target_class").get<int>();
    e.intercept = j.at("intercept").get<double>();
    e.fidelity = j.at("fidelity").get<double>();
    for (const auto& f : j.at("features")) {
      e.features.push_back(
          {f.at("column").get<Column>(), f.at("token").get<std::string>(), f.at("weight").get<double>()});
    }
    const auto& c = j.at("config");
    e.config.k = c.at("k").get<std::size_t>();
    e.config.n = c.at("n").get<std::size_t>();
    e.config.kernel.sigma = c.at("sigma").get<double>();
    e.config.seed = c.at("seed").get<std::uint64_t>();
    e.config.target_class = e.target_class;
    if (c.value("distance", "cosine") != "cosine") throw Error(ErrorKind::kSchema, "unknown distance");
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorKind::kSchema, std::string("malformed explanation: ") + ex.what());
  }
}

Explanation explain_instance(const ProbabilityModel& f, const CountVector& x, const Vocabulary& vocab,
                             const ExplanationConfig& cfg, std::string instance_id) {
  if (cfg.k == 0) throw Error(ErrorKind::kConfig, "k must be >= 1");
  const auto z = build_surrogate(f, x, cfg.n, cfg.kernel, cfg.seed, cfg.target_class);
  const auto design = z.design();
  const auto fit = k_lasso(design, cfg.k);

  Explanation e;
  e.instance_id = std::move(instance_id);
  e.target_class = cfg.target_class;
  e.intercept = fit.intercept;
  e.fidelity = weighted_r2(design, fit);
  e.config = cfg;
  e.warnings = fit.warnings;
  for (std::size_t i = 0; i < fit.selected.size(); ++i) {
    const Column col = z.xprime.support[fit.selected[i]];
    e.features.push_back({col, col < vocab.size() ? vocab.token(col) : std::string{}, fit.coef[i]});
  }
  std::sort(e.features.begin(), e.features.end(), [](const auto& a, const auto& b) {
    const double wa = std::abs(a.weight);
    const double wb = std::abs(b.weight);
    return wa != wb ? wa > wb : a.column < b.column;
  });
  return e;
}

Explanation explain_instance(const ProbabilityModel& f, const Document& doc, const Vocabulary& vocab,
                             const ExplanationConfig& cfg) {
  return explain_instance(f, count_vector(doc, vocab), vocab, cfg, doc.id);
}

std::vector<Column> greedy_explain(const ProbabilityModel& f, const CountVector& x, std::size_t k) {
  const auto ignored = f.ignored_columns();
  CountVector current = ignored.empty() ? x : drop_columns(x, ignored);
  std::erase_if(current.entries, [](const CountVector::Entry& e) { return e.count == 0; });
  if (current.entries.empty()) throw Error(ErrorKind::kDegenerateInstance, "instance has no active features");

  const int cls = predicted_class(f.predict_prob(current));
  auto class_prob = [cls](double p) { return cls == 1 ? p : 1.0 - p; };
  std::vector<Column> removed;
  while (removed.size() < k && !current.entries.empty()) {
    const std::size_t m = current.entries.size();
    // Row i drops entry i.
    std::vector<double> masks(m * m, 1.0);
    for (std::size_t i = 0; i < m; ++i) masks[i * m + i] = 0.0;
    const auto probs = f.predict_masked(current, masks);
    std::size_t best = 0;
    for (std::size_t i = 1; i < m; ++i) {
      if (class_prob(probs[i]) < class_prob(probs[best])) best = i;
    }
    removed.push_back(current.entries[best].column);
    const double after = probs[best];
    current.entries.erase(current.entries.begin() + static_cast<std::ptrdiff_t>(best));
    if (predicted_class(after) != cls) break;
  }
  return removed;
}

std::vector<Column> random_explain(const InterpretableVector& xprime, std::size_t k, std::uint64_t seed) {
  const std::size_t m = xprime.active();
  if (m == 0) throw Error(ErrorKind::kDegenerateInstance, "instance has no active features");
  Rng rng(seed);
  std::vector<Column> out;
  for (auto i : sample_without_replacement(m, std::min(k, m), rng)) out.push_back(xprime.support[i]);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace locex
