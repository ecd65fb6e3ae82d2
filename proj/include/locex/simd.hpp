#pragma once

// Data-parallel inner loops behind a runtime-selected kernel table.
//
// The scalar table is the reference; the AVX2 table is compiled in its own
// translation unit with -mavx2 -mfma and only installed when the CPU reports
// support. Set LOCEX_SIMD=scalar in the environment to force the reference
// kernels (results then match across machines bit for bit).

#include <cstddef>
#include <span>
#include <string_view>

namespace locex::simd {

struct KernelTable {
  std::string_view name;
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum)(const double* x, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // x[i] = (x[i] - shift) * scale[i]
  void (*center_scale)(double* x, double shift, const double* scale, std::size_t n);
};

const KernelTable& scalar_kernels() noexcept;

// nullptr when the build has no AVX2 variant or the CPU lacks AVX2/FMA.
const KernelTable* avx2_kernels() noexcept;

// Table chosen once at first use.
const KernelTable& active_kernels() noexcept;

inline double dot(std::span<const double> a, std::span<const double> b) noexcept {
  return active_kernels().dot(a.data(), b.data(), a.size() < b.size() ? a.size() : b.size());
}

inline double sum(std::span<const double> x) noexcept {
  return active_kernels().sum(x.data(), x.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) noexcept {
  active_kernels().axpy(alpha, x.data(), y.data(), x.size() < y.size() ? x.size() : y.size());
}

inline void center_scale(std::span<double> x, double shift, std::span<const double> scale) noexcept {
  active_kernels().center_scale(x.data(), shift, scale.data(),
                                x.size() < scale.size() ? x.size() : scale.size());
}

}  // namespace locex::simd
