// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

namespace saeforge {

struct WeightedEdge {
  std::uint32_t u = 0;
  std::uint32_t v = 0;
  double weight = 0.0;

  bool operator==(const WeightedEdge&) const = default;
};

// Kruskal on descending weight (ties by (min, max) endpoint ids). Returns a
// maximum-weight spanning forest: one tree per connected component.
std::vector<WeightedEdge> maximum_spanning_forest(std::size_t nodes,
                                                  std::vector<WeightedEdge> edges);

double total_weight(const std::vector<WeightedEdge>& edges);

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t count);
  std::size_t find(std::size_t x);
  // False when already joined.
  bool unite(std::size_t a, std::size_t b);

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> rank_;
};

}  // namespace saeforge
