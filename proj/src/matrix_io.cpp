// SPDX-License-Identifier: Apache-2.0
#include <fstream>
#include <limits>

#include "saeforge/byteio.hpp"
#include "saeforge/error.hpp"
#include "saeforge/matrix.hpp"

namespace saeforge {

void write_matrix(const std::filesystem::path& path, const FloatMatrix& matrix) {
  if (matrix.rows > std::numeric_limits<std::uint32_t>::max() ||
      matrix.cols > std::numeric_limits<std::uint32_t>::max()) {
    throw FormatError("matrix too large for 32-bit header: " + path.string());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open for writing: " + path.string());
  byteio::put_u32(out, kMatrixMagic);
  byteio::put_u32(out, kMatrixVersion);
  byteio::put_u32(out, static_cast<std::uint32_t>(matrix.rows));
  byteio::put_u32(out, static_cast<std::uint32_t>(matrix.cols));
  byteio::put_f32s(out, matrix.values);
  if (!out) throw FormatError("write failed: " + path.string());
}

FloatMatrix read_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open: " + path.string());
  std::uint32_t magic = 0, version = 0, rows = 0, cols = 0;
  if (!byteio::get_u32(in, magic) || !byteio::get_u32(in, version) ||
      !byteio::get_u32(in, rows) || !byteio::get_u32(in, cols)) {
    throw FormatError("truncated header: " + path.string());
  }
  if (magic != kMatrixMagic) throw FormatError("bad magic in " + path.string());
  if (version != kMatrixVersion) {
    throw FormatError("unsupported matrix version " + std::to_string(version));
  }
  FloatMatrix matrix(rows, cols);
  if (!byteio::get_f32s(in, matrix.values)) {
    throw FormatError("truncated payload: " + path.string());
  }
  return matrix;
}

}  // namespace saeforge
