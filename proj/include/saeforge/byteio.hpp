// SPDX-License-Identifier: Apache-2.0
#pragma once

// Little-endian encoding helpers shared by the binary file formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>

namespace saeforge::byteio {

inline void put_u32(std::ostream& out, std::uint32_t value) {
  unsigned char bytes[4];
  for (int i = 0; i < 4; ++i) bytes[i] = static_cast<unsigned char>(value >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

inline bool get_u32(std::istream& in, std::uint32_t& value) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4)) return false;
  value = 0;
  for (int i = 0; i < 4; ++i) value |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
  return true;
}

inline void put_f32s(std::ostream& out, std::span<const float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size_bytes()));
  } else {
    for (float v : values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
}

inline bool get_f32s(std::istream& in, std::span<float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    return static_cast<bool>(in.read(reinterpret_cast<char*>(values.data()),
                                     static_cast<std::streamsize>(values.size_bytes())));
  } else {
    for (float& v : values) {
      std::uint32_t raw = 0;
      if (!get_u32(in, raw)) return false;
      v = std::bit_cast<float>(raw);
    }
    return true;
  }
}

}  // namespace saeforge::byteio
