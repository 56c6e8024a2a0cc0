// SPDX-License-Identifier: Apache-2.0
#include "saeforge/simd.hpp"

namespace saeforge::simd::detail {
namespace {

template <typename Real>
Real dot_scalar(const Real* a, const Real* b, std::size_t len) {
  Real acc = 0;
  for (std::size_t i = 0; i < len; ++i) acc += a[i] * b[i];
  return acc;
}

template <typename Real>
void axpy_scalar(Real alpha, const Real* x, Real* y, std::size_t len) {
  for (std::size_t i = 0; i < len; ++i) y[i] += alpha * x[i];
}

template <typename Real>
Real squared_distance_scalar(const Real* a, const Real* b, std::size_t len) {
  Real acc = 0;
  for (std::size_t i = 0; i < len; ++i) {
    const Real diff = a[i] - b[i];
    acc += diff * diff;
  }
  return acc;
}

template <typename Real>
void matvec_scalar(const Real* matrix, const Real* x, const Real* bias, Real* out,
                   std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    out[r] = dot_scalar(matrix + r * cols, x, cols) + (bias ? bias[r] : Real(0));
  }
}

}  // namespace

template <typename Real>
KernelTable<Real> scalar_table() {
  return {&dot_scalar<Real>, &axpy_scalar<Real>, &squared_distance_scalar<Real>,
          &matvec_scalar<Real>};
}

template KernelTable<float> scalar_table<float>();
template KernelTable<double> scalar_table<double>();

}  // namespace saeforge::simd::detail
