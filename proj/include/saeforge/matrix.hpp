// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace saeforge {

// Dense row-major matrix.
template <typename Real>
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Real> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, Real fill = Real(0))
      : rows(r), cols(c), values(r * c, fill) {}

  std::span<Real> row(std::size_t r) { return {values.data() + r * cols, cols}; }
  std::span<const Real> row(std::size_t r) const {
    return {values.data() + r * cols, cols};
  }
  Real& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  Real operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  bool empty() const { return rows == 0; }
  bool operator==(const Matrix&) const = default;
};

using FloatMatrix = Matrix<float>;

// Binary matrix file: 16-byte little-endian header (magic "EMBM", version,
// rows, cols as uint32) followed by rows*cols little-endian float32 values.
inline constexpr std::uint32_t kMatrixMagic = 0x4D424D45;  // "EMBM"
inline constexpr std::uint32_t kMatrixVersion = 1;

void write_matrix(const std::filesystem::path& path, const FloatMatrix& matrix);
FloatMatrix read_matrix(const std::filesystem::path& path);

}  // namespace saeforge
