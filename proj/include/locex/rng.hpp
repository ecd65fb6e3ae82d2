#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace locex {

using Rng = std::mt19937_64;

/// splitmix64 finalizer. Used to derive independent seed substreams
/// (per run, per pair, per tree) from one master seed.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) noexcept {
  return splitmix64(master ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

// Uniform sample of `count` distinct values from [0, n), in draw order.
// Partial Fisher-Yates; requires count <= n.
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count, Rng& rng);

}  // namespace locex
