// SPDX-License-Identifier: Apache-2.0
#pragma once

// Activation matrices with planted parent/child structure: each parent fires
// whenever one of its mutually exclusive children fires, and also on its own;
// noise features fire independently.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "saeforge/activations.hpp"

namespace saeforge::testing {

struct PlantedFamilies {
  ActivationMatrix activations;
  // Feature ids after a random relabelling.
  std::vector<std::uint32_t> parents;
  std::vector<std::vector<std::uint32_t>> children;  // ascending
  std::vector<std::uint32_t> noise;
};

struct PlantedFamilyOptions {
  std::size_t families = 3;
  std::size_t children_per_family = 4;
  std::size_t noise_features = 5;
  std::size_t documents = 40000;
  // Parent density (about 0.044) stays well below the default tau of 0.1 so
  // chance co-occurrence with another family's parent is not an edge.
  double child_density = 0.01;
  double parent_alone_density = 0.004;
  double noise_density = 0.03;
};

inline PlantedFamilies make_planted_families(const PlantedFamilyOptions& options, std::uint64_t seed) {
  const std::size_t total = options.families * (1 + options.children_per_family) + options.noise_features;
  std::mt19937_64 rng(seed);
  std::vector<std::uint32_t> label(total);
  std::iota(label.begin(), label.end(), 0u);
  std::shuffle(label.begin(), label.end(), rng);

  PlantedFamilies out;
  std::size_t next = 0;
  for (std::size_t f = 0; f < options.families; ++f) {
    out.parents.push_back(label[next++]);
    std::vector<std::uint32_t> kids;
    for (std::size_t c = 0; c < options.children_per_family; ++c) kids.push_back(label[next++]);
    out.children.push_back(kids);
  }
  for (std::size_t i = 0; i < options.noise_features; ++i) out.noise.push_back(label[next++]);
  for (auto& kids : out.children) std::sort(kids.begin(), kids.end());

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<float> value(0.5f, 2.0f);
  FloatMatrix dense(options.documents, total, 0.0f);
  const double child_block = options.child_density * static_cast<double>(options.children_per_family);
  for (std::size_t r = 0; r < options.documents; ++r) {
    for (std::size_t f = 0; f < options.families; ++f) {
      const double u = unit(rng);
      if (u < child_block) {
        // Exactly one child of this family fires, along with the parent.
        const auto c = static_cast<std::size_t>(u / options.child_density);
        dense(r, out.children[f][std::min(c, options.children_per_family - 1)]) = value(rng);
        dense(r, out.parents[f]) = value(rng);
      } else if (u < child_block + options.parent_alone_density) {
        dense(r, out.parents[f]) = value(rng);
      }
    }
    for (auto n : out.noise) {
      if (unit(rng) < options.noise_density) dense(r, n) = value(rng);
    }
  }
  out.activations = ActivationMatrix::from_dense(dense);
  return out;
}

}  // namespace saeforge::testing
