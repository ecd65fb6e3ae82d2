#pragma once

// Bag-of-words plumbing: tokens, vocabulary, count vectors, and the binary
// presence vectors that explanations are expressed over.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace locex {

using Column = std::uint32_t;

// Lowercased maximal runs of ASCII alphanumerics, in order, duplicates kept.
std::vector<std::string> tokenize(std::string_view text);

class Vocabulary {
 public:
  Vocabulary() = default;
  // Duplicates are collapsed; column order follows first appearance.
  explicit Vocabulary(std::vector<std::string> tokens);

  // Sorted unique tokens across all given token lists.
  static Vocabulary build(std::span<const std::vector<std::string>> token_lists);

  std::size_t size() const noexcept { return tokens_.size(); }
  const std::string& token(Column c) const { return tokens_.at(c); }
  std::optional<Column> find(std::string_view token) const;
  bool contains(std::string_view token) const { return find(token).has_value(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  // FNV-1a over the ordered tokens; identifies the column layout.
  std::uint64_t hash() const noexcept;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, Column> index_;
};

struct Document {
  std::string id;
  std::string text;
  std::optional<int> label;
  std::map<std::string, int> counts;

  static Document from_text(std::string id, std::string text, std::optional<int> label = {});
  // Appends one occurrence of `token` to text and counts.
  void append_token(const std::string& token);
};

// Sparse token counts over a vocabulary, sorted by column.
struct CountVector {
  struct Entry {
    Column column;
    std::uint32_t count;
    bool operator==(const Entry&) const = default;
  };
  std::vector<Entry> entries;
  std::size_t dim = 0;

  std::uint32_t count(Column c) const noexcept;
  double squared_norm() const noexcept;
  bool operator==(const CountVector&) const = default;
};

CountVector count_vector(const Document& doc, const Vocabulary& vocab);

// Binary presence vector x' over the vocabulary.
struct InterpretableVector {
  std::vector<std::uint8_t> bits;
  std::vector<Column> support;

  static InterpretableVector from_support(std::size_t dim, std::vector<Column> support);
  std::size_t dim() const noexcept { return bits.size(); }
  std::size_t active() const noexcept { return support.size(); }
  bool operator==(const InterpretableVector&) const = default;
};

InterpretableVector vectorize(const Document& doc, const Vocabulary& vocab);
InterpretableVector presence(const CountVector& counts);

struct PerturbedSample {
  InterpretableVector zprime;
  double label = 0.0;
  double weight = 1.0;
  double distance = 0.0;
};

// Sample 0 is x' itself. Each further sample keeps k ~ Uniform{1..m} of the
// m active columns, chosen uniformly without replacement.
std::vector<InterpretableVector> sample_perturbations(const InterpretableVector& xprime,
                                                      std::size_t n, std::uint64_t seed);

// Same law, expressed as an n x m row-major 0/1 matrix over x'.support
// (column i of a row refers to x'.support[i]). Row 0 is all ones.
std::vector<double> sample_keep_masks(std::size_t m, std::size_t n, std::uint64_t seed);

double cosine_distance(const InterpretableVector& a, const InterpretableVector& b);

// Cosine distance of two binary vectors from their support sizes and overlap.
double binary_cosine_distance(std::size_t common, std::size_t na, std::size_t nb);

// Counts of `doc` with every word outside `keep` zeroed.
CountVector mask_counts(const Document& doc, const InterpretableVector& keep,
                        const Vocabulary& vocab);
CountVector mask_counts(const CountVector& counts, const InterpretableVector& keep);

// Counts with the given columns zeroed (entries removed).
CountVector drop_columns(const CountVector& counts, std::span<const Column> sorted_columns);

}  // namespace locex
