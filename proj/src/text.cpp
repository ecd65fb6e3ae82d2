#include "locex/text.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "locex/error.hpp"
#include "locex/rng.hpp"

namespace locex {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    const auto uc = static_cast<unsigned char>(ch);
    if (std::isalnum(uc) != 0) {
      current.push_back(static_cast<char>(std::tolower(uc)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
  tokens_.reserve(tokens.size());
  for (auto& t : tokens) {
    if (index_.contains(t)) continue;
    index_.emplace(t, static_cast<Column>(tokens_.size()));
    tokens_.push_back(std::move(t));
  }
}

Vocabulary Vocabulary::build(std::span<const std::vector<std::string>> token_lists) {
  std::set<std::string> unique;
  for (const auto& list : token_lists) unique.insert(list.begin(), list.end());
  return Vocabulary(std::vector<std::string>(unique.begin(), unique.end()));
}

std::optional<Column> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::uint64_t Vocabulary::hash() const noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](unsigned char byte) {
    h ^= byte;
    h *= 0x100000001b3ULL;
  };
  for (const auto& t : tokens_) {
    for (char ch : t) mix(static_cast<unsigned char>(ch));
    mix(0);
  }
  return h;
}

Document Document::from_text(std::string id, std::string text, std::optional<int> label) {
  Document doc{std::move(id), std::move(text), label, {}};
  for (auto& t : tokenize(doc.text)) ++doc.counts[std::move(t)];
  return doc;
}

void Document::append_token(const std::string& token) {
  if (!text.empty()) text.push_back(' ');
  text += token;
  ++counts[token];
}

std::uint32_t CountVector::count(Column c) const noexcept {
  auto it = std::lower_bound(entries.begin(), entries.end(), c,
                             [](const Entry& e, Column col) { return e.column < col; });
  return (it != entries.end() && it->column == c) ? it->count : 0;
}

double CountVector::squared_norm() const noexcept {
  double acc = 0.0;
  for (const auto& e : entries) acc += static_cast<double>(e.count) * e.count;
  return acc;
}

CountVector count_vector(const Document& doc, const Vocabulary& vocab) {
  CountVector out;
  out.dim = vocab.size();
  for (const auto& [token, n] : doc.counts) {
    if (n <= 0) continue;
    if (auto col = vocab.find(token)) out.entries.push_back({*col, static_cast<std::uint32_t>(n)});
  }
  std::sort(out.entries.begin(), out.entries.end(),
            [](const auto& a, const auto& b) { return a.column < b.column; });
  return out;
}

InterpretableVector InterpretableVector::from_support(std::size_t dim, std::vector<Column> support) {
  std::sort(support.begin(), support.end());
  support.erase(std::unique(support.begin(), support.end()), support.end());
  InterpretableVector v;
  v.bits.assign(dim, 0);
  for (Column c : support) {
    if (c >= dim) throw Error(ErrorKind::kShape, "support column out of range");
    v.bits[c] = 1;
  }
  v.support = std::move(support);
  return v;
}

InterpretableVector presence(const CountVector& counts) {
  std::vector<Column> support;
  support.reserve(counts.entries.size());
  for (const auto& e : counts.entries) {
    if (e.count > 0) support.push_back(e.column);
  }
  return InterpretableVector::from_support(counts.dim, std::move(support));
}

InterpretableVector vectorize(const Document& doc, const Vocabulary& vocab) {
  return presence(count_vector(doc, vocab));
}

std::vector<double> sample_keep_masks(std::size_t m, std::size_t n, std::uint64_t seed) {
  if (m == 0) throw Error(ErrorKind::kDegenerateInstance, "instance has no active features");
  if (n == 0) return {};
  std::vector<double> masks(n * m, 0.0);
  std::fill_n(masks.begin(), m, 1.0);
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> draw_k(1, m);
  for (std::size_t row = 1; row < n; ++row) {
    const std::size_t k = draw_k(rng);
    double* out = masks.data() + row * m;
    for (std::size_t idx : sample_without_replacement(m, k, rng)) out[idx] = 1.0;
  }
  return masks;
}

std::vector<InterpretableVector> sample_perturbations(const InterpretableVector& xprime,
                                                      std::size_t n, std::uint64_t seed) {
  const std::size_t m = xprime.active();
  const auto masks = sample_keep_masks(m, n, seed);
  std::vector<InterpretableVector> out;
  out.reserve(n);
  for (std::size_t row = 0; row < n; ++row) {
    std::vector<Column> support;
    for (std::size_t i = 0; i < m; ++i) {
      if (masks[row * m + i] != 0.0) support.push_back(xprime.support[i]);
    }
    out.push_back(InterpretableVector::from_support(xprime.dim(), std::move(support)));
  }
  return out;
}

double cosine_distance(const InterpretableVector& a, const InterpretableVector& b) {
  if (a.dim() != b.dim()) throw Error(ErrorKind::kShape, "cosine_distance: dimension mismatch");
  const std::size_t na = a.active();
  const std::size_t nb = b.active();
  if (na == 0 && nb == 0) {
    throw Error(ErrorKind::kUndefinedDistance, "cosine distance of two zero vectors");
  }
  std::size_t common = 0;
  auto ia = a.support.begin();
  auto ib = b.support.begin();
  while (ia != a.support.end() && ib != b.support.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++common;
      ++ia;
      ++ib;
    }
  }
  return binary_cosine_distance(common, na, nb);
}

double binary_cosine_distance(std::size_t common, std::size_t na, std::size_t nb) {
  if (na == 0 && nb == 0) {
    throw Error(ErrorKind::kUndefinedDistance, "cosine distance of two zero vectors");
  }
  if (na == 0 || nb == 0) return 1.0;
  const double sim = static_cast<double>(common) / std::sqrt(static_cast<double>(na) * nb);
  return std::clamp(1.0 - sim, 0.0, 1.0);
}

CountVector mask_counts(const CountVector& counts, const InterpretableVector& keep) {
  CountVector out;
  out.dim = counts.dim;
  for (const auto& e : counts.entries) {
    if (e.column < keep.dim() && keep.bits[e.column] != 0) out.entries.push_back(e);
  }
  return out;
}

CountVector mask_counts(const Document& doc, const InterpretableVector& keep,
                        const Vocabulary& vocab) {
  return mask_counts(count_vector(doc, vocab), keep);
}

CountVector drop_columns(const CountVector& counts, std::span<const Column> sorted_columns) {
  CountVector out;
  out.dim = counts.dim;
  for (const auto& e : counts.entries) {
    if (!std::binary_search(sorted_columns.begin(), sorted_columns.end(), e.column)) {
      out.entries.push_back(e);
    }
  }
  return out;
}

}  // namespace locex
