// SPDX-License-Identifier: Apache-2.0
#pragma once

// Dense vector kernels used by every inner loop of the autoencoder.
//
// Each kernel has a scalar reference implementation and, on x86-64, an
// AVX2+FMA variant. The variant is chosen once at startup from CPUID and can
// be forced with the SAEFORGE_SIMD environment variable ("scalar" or "avx2")
// or with set_simd_level(). Results of the two paths agree to rounding error
// only; the scalar path is the bitwise-reproducible reference.

#include <cstddef>
#include <span>
#include <string_view>

namespace saeforge::simd {

enum class Level { kScalar, kAvx2 };

Level active_level();
bool level_supported(Level level);
// Returns false (and leaves the level unchanged) if the CPU lacks support.
bool set_simd_level(Level level);
std::string_view level_name(Level level);

template <typename Real>
struct KernelTable {
  Real (*dot)(const Real* a, const Real* b, std::size_t len);
  // y += alpha * x
  void (*axpy)(Real alpha, const Real* x, Real* y, std::size_t len);
  Real (*squared_distance)(const Real* a, const Real* b, std::size_t len);
  // out[r] = dot(rows + r*cols, x) + (bias ? bias[r] : 0) for r in [0, rows)
  void (*matvec)(const Real* matrix, const Real* x, const Real* bias, Real* out,
                 std::size_t rows, std::size_t cols);
};

template <typename Real>
const KernelTable<Real>& kernels();
template <typename Real>
const KernelTable<Real>& kernels(Level level);

template <typename Real>
inline Real dot(std::span<const Real> a, std::span<const Real> b) {
  return kernels<Real>().dot(a.data(), b.data(), a.size());
}

template <typename Real>
inline void axpy(Real alpha, std::span<const Real> x, std::span<Real> y) {
  kernels<Real>().axpy(alpha, x.data(), y.data(), x.size());
}

template <typename Real>
inline Real squared_distance(std::span<const Real> a, std::span<const Real> b) {
  return kernels<Real>().squared_distance(a.data(), b.data(), a.size());
}

template <typename Real>
inline Real squared_norm(std::span<const Real> a) {
  return kernels<Real>().dot(a.data(), a.data(), a.size());
}

template <typename Real>
inline void matvec(std::span<const Real> matrix, std::span<const Real> x,
                   std::span<const Real> bias, std::span<Real> out) {
  kernels<Real>().matvec(matrix.data(), x.data(),
                         bias.empty() ? nullptr : bias.data(), out.data(),
                         out.size(), x.size());
}

namespace detail {
template <typename Real>
KernelTable<Real> scalar_table();
template <typename Real>
KernelTable<Real> avx2_table();
}  // namespace detail

}  // namespace saeforge::simd
