// SPDX-License-Identifier: Apache-2.0
// AVX2 + FMA variants. This translation unit is the only one compiled with
// -mavx2 -mfma; nothing here may be called unless CPUID reports both.
#include <immintrin.h>

#include "saeforge/simd.hpp"

namespace saeforge::simd::detail {
namespace {

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 shuf = _mm_movehdup_ps(lo);
  __m128 sums = _mm_add_ps(lo, shuf);
  shuf = _mm_movehl_ps(shuf, sums);
  sums = _mm_add_ss(sums, shuf);
  return _mm_cvtss_f32(sums);
}

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d high64 = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, high64));
}

// ---- float ------------------------------------------------------------------

float dot_f32(const float* a, const float* b, std::size_t len) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= len; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), acc1);
  }
  for (; i + 8 <= len; i += 8) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
  }
  float acc = hsum(_mm256_add_ps(acc0, acc1));
  for (; i < len; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_f32(float alpha, const float* x, float* y, std::size_t len) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= len; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  }
  for (; i < len; ++i) y[i] += alpha * x[i];
}

float squared_distance_f32(const float* a, const float* b, std::size_t len) {
  __m256 acc = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= len; i += 8) {
    const __m256 diff = _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i));
    acc = _mm256_fmadd_ps(diff, diff, acc);
  }
  float total = hsum(acc);
  for (; i < len; ++i) {
    const float diff = a[i] - b[i];
    total += diff * diff;
  }
  return total;
}

void matvec_f32(const float* matrix, const float* x, const float* bias, float* out,
                std::size_t rows, std::size_t cols) {
  std::size_t r = 0;
  for (; r + 4 <= rows; r += 4) {
    const float* m0 = matrix + r * cols;
    const float* m1 = m0 + cols;
    const float* m2 = m1 + cols;
    const float* m3 = m2 + cols;
    __m256 a0 = _mm256_setzero_ps(), a1 = _mm256_setzero_ps();
    __m256 a2 = _mm256_setzero_ps(), a3 = _mm256_setzero_ps();
    std::size_t c = 0;
    for (; c + 8 <= cols; c += 8) {
      const __m256 vx = _mm256_loadu_ps(x + c);
      a0 = _mm256_fmadd_ps(_mm256_loadu_ps(m0 + c), vx, a0);
      a1 = _mm256_fmadd_ps(_mm256_loadu_ps(m1 + c), vx, a1);
      a2 = _mm256_fmadd_ps(_mm256_loadu_ps(m2 + c), vx, a2);
      a3 = _mm256_fmadd_ps(_mm256_loadu_ps(m3 + c), vx, a3);
    }
    float s0 = hsum(a0), s1 = hsum(a1), s2 = hsum(a2), s3 = hsum(a3);
    for (; c < cols; ++c) {
      s0 += m0[c] * x[c];
      s1 += m1[c] * x[c];
      s2 += m2[c] * x[c];
      s3 += m3[c] * x[c];
    }
    out[r] = s0 + (bias ? bias[r] : 0.0f);
    out[r + 1] = s1 + (bias ? bias[r + 1] : 0.0f);
    out[r + 2] = s2 + (bias ? bias[r + 2] : 0.0f);
    out[r + 3] = s3 + (bias ? bias[r + 3] : 0.0f);
  }
  for (; r < rows; ++r) {
    out[r] = dot_f32(matrix + r * cols, x, cols) + (bias ? bias[r] : 0.0f);
  }
}

// ---- double -----------------------------------------------------------------

double dot_f64(const double* a, const double* b, std::size_t len) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= len; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= len; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < len; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_f64(double alpha, const double* x, double* y, std::size_t len) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= len; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < len; ++i) y[i] += alpha * x[i];
}

double squared_distance_f64(const double* a, const double* b, std::size_t len) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= len; i += 4) {
    const __m256d diff = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc = _mm256_fmadd_pd(diff, diff, acc);
  }
  double total = hsum(acc);
  for (; i < len; ++i) {
    const double diff = a[i] - b[i];
    total += diff * diff;
  }
  return total;
}

void matvec_f64(const double* matrix, const double* x, const double* bias, double* out,
                std::size_t rows, std::size_t cols) {
  std::size_t r = 0;
  for (; r + 4 <= rows; r += 4) {
    const double* m0 = matrix + r * cols;
    const double* m1 = m0 + cols;
    const double* m2 = m1 + cols;
    const double* m3 = m2 + cols;
    __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
    __m256d a2 = _mm256_setzero_pd(), a3 = _mm256_setzero_pd();
    std::size_t c = 0;
    for (; c + 4 <= cols; c += 4) {
      const __m256d vx = _mm256_loadu_pd(x + c);
      a0 = _mm256_fmadd_pd(_mm256_loadu_pd(m0 + c), vx, a0);
      a1 = _mm256_fmadd_pd(_mm256_loadu_pd(m1 + c), vx, a1);
      a2 = _mm256_fmadd_pd(_mm256_loadu_pd(m2 + c), vx, a2);
      a3 = _mm256_fmadd_pd(_mm256_loadu_pd(m3 + c), vx, a3);
    }
    double s0 = hsum(a0), s1 = hsum(a1), s2 = hsum(a2), s3 = hsum(a3);
    for (; c < cols; ++c) {
      s0 += m0[c] * x[c];
      s1 += m1[c] * x[c];
      s2 += m2[c] * x[c];
      s3 += m3[c] * x[c];
    }
    out[r] = s0 + (bias ? bias[r] : 0.0);
    out[r + 1] = s1 + (bias ? bias[r + 1] : 0.0);
    out[r + 2] = s2 + (bias ? bias[r + 2] : 0.0);
    out[r + 3] = s3 + (bias ? bias[r + 3] : 0.0);
  }
  for (; r < rows; ++r) {
    out[r] = dot_f64(matrix + r * cols, x, cols) + (bias ? bias[r] : 0.0);
  }
}

}  // namespace

template <>
KernelTable<float> avx2_table<float>() {
  return {&dot_f32, &axpy_f32, &squared_distance_f32, &matvec_f32};
}

template <>
KernelTable<double> avx2_table<double>() {
  return {&dot_f64, &axpy_f64, &squared_distance_f64, &matvec_f64};
}

}  // namespace saeforge::simd::detail
