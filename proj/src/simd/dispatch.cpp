// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cstdlib>
#include <string>

#include "saeforge/simd.hpp"

namespace saeforge::simd {
namespace {

bool cpu_has_avx2() {
#if defined(SAEFORGE_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Level detect_level() {
  if (const char* env = std::getenv("SAEFORGE_SIMD")) {
    const std::string wanted(env);
    if (wanted == "scalar") return Level::kScalar;
    if (wanted == "avx2" && cpu_has_avx2()) return Level::kAvx2;
  }
  return cpu_has_avx2() ? Level::kAvx2 : Level::kScalar;
}

std::atomic<Level>& current() {
  static std::atomic<Level> level{detect_level()};
  return level;
}

template <typename Real>
struct Tables {
  KernelTable<Real> scalar = detail::scalar_table<Real>();
#if defined(SAEFORGE_HAVE_AVX2)
  KernelTable<Real> avx2 = detail::avx2_table<Real>();
#else
  KernelTable<Real> avx2 = detail::scalar_table<Real>();
#endif
};

template <typename Real>
const Tables<Real>& tables() {
  static const Tables<Real> instance;
  return instance;
}

}  // namespace

Level active_level() { return current().load(std::memory_order_relaxed); }

bool level_supported(Level level) {
  return level == Level::kScalar || cpu_has_avx2();
}

bool set_simd_level(Level level) {
  if (!level_supported(level)) return false;
  current().store(level, std::memory_order_relaxed);
  return true;
}

std::string_view level_name(Level level) {
  return level == Level::kAvx2 ? "avx2" : "scalar";
}

template <typename Real>
const KernelTable<Real>& kernels(Level level) {
  return level == Level::kAvx2 ? tables<Real>().avx2 : tables<Real>().scalar;
}

template <typename Real>
const KernelTable<Real>& kernels() {
  return kernels<Real>(active_level());
}

template const KernelTable<float>& kernels<float>();
template const KernelTable<double>& kernels<double>();
template const KernelTable<float>& kernels<float>(Level);
template const KernelTable<double>& kernels<double>(Level);

}  // namespace saeforge::simd
