// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "saeforge/matrix.hpp"

namespace saeforge {

struct GeometricMedianResult {
  std::vector<double> point;
  double objective = 0.0;  // sum of distances to the sample
  std::size_t iterations = 0;
  bool converged = false;
};

// Weiszfeld iteration with the Vardi-Zhang step when the iterate lands on a
// sample point. Starts at the centroid, stops once a step moves less than
// `tol`, and returns the best iterate seen if `max_iter` is hit first.
GeometricMedianResult geometric_median(const Matrix<double>& points, double tol = 1e-9,
                                       std::size_t max_iter = 1000);
GeometricMedianResult geometric_median(const FloatMatrix& points, double tol = 1e-9,
                                       std::size_t max_iter = 1000);

double sum_of_distances(const Matrix<double>& points, const std::vector<double>& center);

}  // namespace saeforge
