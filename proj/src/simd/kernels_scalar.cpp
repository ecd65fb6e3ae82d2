#include "locex/simd.hpp"

namespace locex::simd {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double sum_scalar(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void center_scale_scalar(double* x, double shift, const double* scale, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] = (x[i] - shift) * scale[i];
}

}  // namespace

const KernelTable& scalar_kernels() noexcept {
  static const KernelTable table{"scalar", dot_scalar, sum_scalar, axpy_scalar,
                                 center_scale_scalar};
  return table;
}

}  // namespace locex::simd
