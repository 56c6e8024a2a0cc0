// SPDX-License-Identifier: Apache-2.0
#include "saeforge/mst.hpp"

#include <algorithm>
#include <numeric>

#include "saeforge/error.hpp"

namespace saeforge {

DisjointSets::DisjointSets(std::size_t count) : parent_(count), rank_(count, 0) {
  std::iota(parent_.begin(), parent_.end(), std::size_t{0});
}

std::size_t DisjointSets::find(std::size_t x) {
  while (parent_[x] != x) {
    parent_[x] = parent_[parent_[x]];
    x = parent_[x];
  }
  return x;
}

bool DisjointSets::unite(std::size_t a, std::size_t b) {
  a = find(a);
  b = find(b);
  if (a == b) return false;
  if (rank_[a] < rank_[b]) std::swap(a, b);
  parent_[b] = a;
  if (rank_[a] == rank_[b]) ++rank_[a];
  return true;
}

std::vector<WeightedEdge> maximum_spanning_forest(std::size_t nodes,
                                                  std::vector<WeightedEdge> edges) {
  for (auto& e : edges) {
    if (e.u >= nodes || e.v >= nodes) throw ConfigError("edge endpoint out of range");
    if (e.u > e.v) std::swap(e.u, e.v);
  }
  std::sort(edges.begin(), edges.end(), [](const WeightedEdge& a, const WeightedEdge& b) {
    if (a.weight != b.weight) return a.weight > b.weight;
    if (a.u != b.u) return a.u < b.u;
    return a.v < b.v;
  });
  DisjointSets sets(nodes);
  std::vector<WeightedEdge> forest;
  for (const auto& e : edges) {
    if (e.u != e.v && sets.unite(e.u, e.v)) forest.push_back(e);
    if (forest.size() + 1 == nodes) break;
  }
  return forest;
}

double total_weight(const std::vector<WeightedEdge>& edges) {
  double sum = 0.0;
  for (const auto& e : edges) sum += e.weight;
  return sum;
}

}  // namespace saeforge
