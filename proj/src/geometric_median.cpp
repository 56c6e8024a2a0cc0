// SPDX-License-Identifier: Apache-2.0
#include "saeforge/geometric_median.hpp"

#include <cmath>

#include "saeforge/simd.hpp"

namespace saeforge {

double sum_of_distances(const Matrix<double>& points, const std::vector<double>& center) {
  double total = 0.0;
  for (std::size_t r = 0; r < points.rows; ++r) {
    total += std::sqrt(simd::squared_distance<double>(points.row(r), center));
  }
  return total;
}

GeometricMedianResult geometric_median(const Matrix<double>& points, double tol,
                                       std::size_t max_iter) {
  GeometricMedianResult result;
  const std::size_t d = points.cols;
  if (points.rows == 0) return result;

  std::vector<double> current(d, 0.0);
  for (std::size_t r = 0; r < points.rows; ++r) {
    simd::axpy<double>(1.0, points.row(r), current);
  }
  for (auto& v : current) v /= static_cast<double>(points.rows);

  result.point = current;
  result.objective = sum_of_distances(points, current);

  std::vector<double> weighted(d), pull(d), next(d);
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    std::fill(weighted.begin(), weighted.end(), 0.0);
    std::fill(pull.begin(), pull.end(), 0.0);
    double weight_sum = 0.0;
    std::size_t coincident = 0;
    for (std::size_t r = 0; r < points.rows; ++r) {
      const auto p = points.row(r);
      const double dist = std::sqrt(simd::squared_distance<double>(p, current));
      if (dist <= 1e-12) {
        ++coincident;
        continue;
      }
      const double w = 1.0 / dist;
      weight_sum += w;
      simd::axpy<double>(w, p, weighted);
      for (std::size_t c = 0; c < d; ++c) pull[c] += (p[c] - current[c]) * w;
    }
    if (weight_sum == 0.0) {  // every point coincides with the iterate
      result.converged = true;
      result.iterations = iter;
      break;
    }
    for (std::size_t c = 0; c < d; ++c) next[c] = weighted[c] / weight_sum;
    if (coincident > 0) {
      const double pull_norm = std::sqrt(simd::squared_norm<double>(pull));
      const double ratio = pull_norm > 0.0 ? static_cast<double>(coincident) / pull_norm : 1.0;
      const double keep = std::min(1.0, ratio);
      const double move = std::max(0.0, 1.0 - ratio);
      for (std::size_t c = 0; c < d; ++c) next[c] = move * next[c] + keep * current[c];
    }
    const double step = std::sqrt(simd::squared_distance<double>(next, current));
    current.swap(next);
    const double objective = sum_of_distances(points, current);
    if (objective < result.objective) {
      result.objective = objective;
      result.point = current;
    }
    result.iterations = iter + 1;
    if (step < tol) {
      result.converged = true;
      break;
    }
  }
  return result;
}

GeometricMedianResult geometric_median(const FloatMatrix& points, double tol,
                                       std::size_t max_iter) {
  Matrix<double> copy(points.rows, points.cols);
  for (std::size_t i = 0; i < points.values.size(); ++i) copy.values[i] = points.values[i];
  return geometric_median(copy, tol, max_iter);
}

}  // namespace saeforge
