#include <utility>

#include "locex/error.hpp"
#include "locex/rng.hpp"

namespace locex {

std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count, Rng& rng) {
  if (count > n) throw Error(ErrorKind::kRange, "sample larger than population");
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(count);
  return pool;
}

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDegenerateInstance: return "DegenerateInstance";
    case ErrorKind::kUndefinedDistance: return "UndefinedDistance";
    case ErrorKind::kParse: return "ParseError";
    case ErrorKind::kSchema: return "SchemaError";
    case ErrorKind::kStratification: return "StratificationError";
    case ErrorKind::kCollision: return "CollisionError";
    case ErrorKind::kRange: return "RangeError";
    case ErrorKind::kConfig: return "ConfigError";
    case ErrorKind::kDegenerateLabels: return "DegenerateLabels";
    case ErrorKind::kConvergence: return "ConvergenceError";
    case ErrorKind::kDegenerateFeatures: return "DegenerateFeatures";
    case ErrorKind::kInsufficientSamples: return "InsufficientSamples";
    case ErrorKind::kShape: return "ShapeError";
    case ErrorKind::kSize: return "SizeError";
    case ErrorKind::kPairSearchTimeout: return "PairSearchTimeout";
    case ErrorKind::kNotFound: return "NotFound";
    case ErrorKind::kIo: return "IoError";
  }
  return "Unknown";
}

}  // namespace locex
