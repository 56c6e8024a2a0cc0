// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "saeforge/error.hpp"
#include "saeforge/families.hpp"
#include "saeforge/feature_analysis.hpp"
#include "saeforge/mst.hpp"
#include "support/planted_families.hpp"
#include "support/temp_dir.hpp"

using namespace saeforge;

namespace {

std::vector<WeightedEdge> random_graph(std::size_t nodes, double p, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<WeightedEdge> edges;
  for (std::uint32_t u = 0; u < nodes; ++u) {
    for (std::uint32_t v = u + 1; v < nodes; ++v) {
      if (unit(rng) < p) edges.push_back({u, v, std::round(unit(rng) * 1e6) / 1e6});
    }
  }
  return edges;
}

std::size_t components(std::size_t nodes, const std::vector<WeightedEdge>& edges) {
  DisjointSets sets(nodes);
  std::size_t count = nodes;
  for (const auto& e : edges) count -= sets.unite(e.u, e.v);
  return count;
}

// Best total weight over all acyclic edge subsets with the maximal edge count.
double brute_force_forest_weight(std::size_t nodes, const std::vector<WeightedEdge>& edges) {
  const std::size_t target = nodes - components(nodes, edges);
  double best = -1.0;
  for (std::uint64_t mask = 0; mask < (1ULL << edges.size()); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcountll(mask)) != target) continue;
    DisjointSets sets(nodes);
    double weight = 0.0;
    bool acyclic = true;
    for (std::size_t i = 0; i < edges.size() && acyclic; ++i) {
      if (!(mask >> i & 1)) continue;
      acyclic = sets.unite(edges[i].u, edges[i].v);
      weight += edges[i].weight;
    }
    if (acyclic) best = std::max(best, weight);
  }
  return best;
}

ActivationMatrix random_activations(std::size_t rows, std::size_t latents, double density,
                                    std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  FloatMatrix dense(rows, latents, 0.0f);
  for (auto& v : dense.values) {
    if (unit(rng) < density) v = static_cast<float>(0.1 + unit(rng));
  }
  return ActivationMatrix::from_dense(dense);
}

FeatureCatalog random_catalog(std::size_t count, std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<float> gauss(0.0f, 1.0f);
  FeatureCatalog c;
  c.dim = dim;
  c.features.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    c.features[i].id = i;
    float norm = 0.0f;
    c.features[i].direction.resize(dim);
    for (auto& v : c.features[i].direction) {
      v = gauss(rng);
      norm += v * v;
    }
    for (auto& v : c.features[i].direction) v /= std::sqrt(norm);
  }
  return c;
}

}  // namespace

TEST_CASE("maximum spanning forest matches brute force") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t nodes = 3 + trial % 5;
    auto edges = random_graph(nodes, 0.6, rng);
    if (edges.size() > 18) edges.resize(18);
    const auto forest = maximum_spanning_forest(nodes, edges);
    CHECK(forest.size() == nodes - components(nodes, edges));
    CHECK(components(nodes, forest) == components(nodes, edges));
    CHECK(total_weight(forest) == doctest::Approx(brute_force_forest_weight(nodes, edges)).epsilon(1e-12));
  }
}

TEST_CASE("maximum spanning forest on an empty edge set") {
  CHECK(maximum_spanning_forest(5, {}).empty());
}

TEST_CASE("co-occurrence matches a triple-loop oracle") {
  const auto acts = random_activations(300, 12, 0.2, 4);
  const auto dense = acts.to_dense();
  CooccurrenceOptions opts;
  opts.tau = 0.15;
  opts.threads = 3;
  const auto g = build_cooccurrence(acts, opts);
  REQUIRE(g.latents == 12);
  REQUIRE(g.documents == 300);
  for (std::uint32_t i = 0; i < 12; ++i) {
    double fi = 0.0;
    for (std::size_t k = 0; k < 300; ++k) fi += dense(k, i) > 0.0f;
    CHECK(g.f[i] == fi);
    for (std::uint32_t j = 0; j < 12; ++j) {
      double c = 0.0, d = 0.0, ni = 0.0, nj = 0.0;
      for (std::size_t k = 0; k < 300; ++k) {
        c += (dense(k, i) > 0.0f) * (dense(k, j) > 0.0f);
        d += static_cast<double>(dense(k, i)) * dense(k, j);
        ni += static_cast<double>(dense(k, i)) * dense(k, i);
        nj += static_cast<double>(dense(k, j)) * dense(k, j);
      }
      CHECK(g.c_raw(i, j) == c);
      CHECK(g.d_raw(i, j) == doctest::Approx(d).epsilon(1e-5));
      const double cn = c / (fi + 1e-6);
      CHECK(g.c_norm_at(i, j) == doctest::Approx(cn >= 0.15 ? cn : 0.0));
      CHECK(g.d_normalized(i, j) == doctest::Approx(d / std::sqrt(ni * nj)).epsilon(1e-5));
    }
  }
}

TEST_CASE("co-occurrence does not depend on thread count") {
  const auto acts = random_activations(257, 9, 0.3, 8);
  CooccurrenceOptions one, many;
  one.threads = 1;
  many.threads = 4;
  const auto a = build_cooccurrence(acts, one);
  const auto b = build_cooccurrence(acts, many);
  CHECK(a.c_raw == b.c_raw);
  CHECK(a.c_norm == b.c_norm);
  for (std::size_t i = 0; i < a.d_raw.values.size(); ++i) {
    CHECK(a.d_raw.values[i] == doctest::Approx(b.d_raw.values[i]).epsilon(1e-12));
  }
}

TEST_CASE("feature matching matches brute force") {
  std::mt19937_64 rng(5);
  const auto small = random_catalog(20, 8, rng);
  auto large = random_catalog(40, 8, rng);
  large.features[3].direction = small.features[7].direction;  // exact recurrence
  const auto result = match_features(small, large, 0.95);
  REQUIRE(result.pairs.size() == 40);
  for (std::uint32_t j = 0; j < 40; ++j) {
    double best = -2.0;
    std::uint32_t arg = 0;
    for (std::uint32_t i = 0; i < 20; ++i) {
      double dot = 0.0;
      for (std::size_t t = 0; t < 8; ++t) dot += small.features[i].direction[t] * large.features[j].direction[t];
      if (dot > best) {
        best = dot;
        arg = i;
      }
    }
    CHECK(result.pairs[j].large_id == j);
    CHECK(result.pairs[j].best_small == arg);
    CHECK(result.pairs[j].cosine == doctest::Approx(best).epsilon(1e-5));
    CHECK((result.pairs[j].match_class == MatchClass::kRecurrent) == (best >= 0.95));
  }
  CHECK(result.pairs[3].best_small == 7);
  CHECK(result.pairs[3].match_class == MatchClass::kRecurrent);
  CHECK_FALSE(result.pairs[0].activation_similarity.has_value());
}

TEST_CASE("activation similarity of hit lists") {
  const std::vector<FeatureHit> a = {{0, 1.0f}, {2, 2.0f}, {5, 1.0f}};
  const std::vector<FeatureHit> b = {{2, 3.0f}, {5, 4.0f}, {7, 1.0f}};
  const auto s = activation_similarity(a, b);
  CHECK(s.raw == doctest::Approx(10.0));
  CHECK(s.normalized == doctest::Approx(10.0 / std::sqrt(6.0 * 26.0)));
  CHECK(activation_similarity(a, {}).normalized == 0.0);
  CHECK(activation_similarity(a, a).normalized == doctest::Approx(1.0));
}

TEST_CASE("spearman correlation against reference values") {
  const std::vector<double> x1 = {1, 2, 3, 4, 5, 6}, y1 = {2, 1, 4, 3, 6, 6};
  CHECK(spearman_correlation(x1, y1) == doctest::Approx(0.8696565534786727).epsilon(1e-12));
  const std::vector<double> x2 = {3, 1, 4, 1, 5, 9, 2}, y2 = {2, 7, 1, 8, 2, 8, 1};
  CHECK(spearman_correlation(x2, y2) == doctest::Approx(-0.08334762598987158).epsilon(1e-12));
  const std::vector<double> flat = {1, 1, 1, 1, 1, 1};
  CHECK(spearman_correlation(x1, flat) == 0.0);
}

TEST_CASE("planted families are recovered exactly") {
  const auto planted = testing::make_planted_families({}, 17);
  const auto graphs = build_cooccurrence(planted.activations);
  const auto forest = extract_families(graphs);
  REQUIRE(forest.families.size() == planted.parents.size());
  for (std::size_t f = 0; f < planted.parents.size(); ++f) {
    auto it = std::find_if(forest.families.begin(), forest.families.end(),
                           [&](const Family& fam) { return fam.parent == planted.parents[f]; });
    REQUIRE(it != forest.families.end());
    CHECK(it->children == planted.children[f]);
    CHECK(it->iteration == 1);
    CHECK(it->metrics.r_pc_infinite);
    CHECK(std::isinf(it->metrics.r_pc));
    CHECK(it->metrics.c_block_ratio > 1.0);
    CHECK(it->edges.size() == planted.children[f].size());
  }
  CHECK(forest.new_per_iteration.at(0) == planted.parents.size());
}

TEST_CASE("family forest survives a JSON round trip") {
  const auto planted = testing::make_planted_families({.families = 2, .documents = 8000}, 3);
  const auto forest = extract_families(build_cooccurrence(planted.activations));
  REQUIRE(forest.families.size() == 2);
  testing::TempDir dir;
  forest.save(dir / "forest.json");
  const auto back = FamilyForest::load(dir / "forest.json");
  REQUIRE(back.families.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back.families[i].parent == forest.families[i].parent);
    CHECK(back.families[i].children == forest.families[i].children);
    CHECK(back.families[i].metrics.r_pc_infinite);
    CHECK(std::isinf(back.families[i].metrics.r_pc));
  }
  CHECK_THROWS_AS(back.at(99), NotFound);
}

TEST_CASE("no co-occurrence yields no families") {
  FloatMatrix dense(50, 6, 0.0f);
  for (std::size_t r = 0; r < 50; ++r) dense(r, r % 6) = 1.0f;
  const auto forest = extract_families(build_cooccurrence(ActivationMatrix::from_dense(dense)));
  CHECK(forest.families.empty());
}

TEST_CASE("disallowed features are ignored") {
  const auto planted = testing::make_planted_families({.families = 2, .documents = 8000}, 9);
  const auto graphs = build_cooccurrence(planted.activations);
  FamilyOptions opts;
  opts.allowed.assign(graphs.latents, true);
  opts.allowed[planted.parents[0]] = false;
  const auto forest = extract_families(graphs, opts);
  for (const auto& fam : forest.families) {
    const auto members = fam.members();
    CHECK(std::find(members.begin(), members.end(), planted.parents[0]) == members.end());
  }
}

TEST_CASE("parent-child ratio on hand-built counts") {
  // Parent 0, children 1 and 2: C01=4, C02=3, C12=1.
  FloatMatrix dense(8, 3, 0.0f);
  for (std::size_t r = 0; r < 4; ++r) dense(r, 0) = dense(r, 1) = 1.0f;
  dense(4, 0) = dense(4, 2) = 1.0f;
  dense(5, 0) = dense(5, 2) = 1.0f;
  dense(0, 2) = 1.0f;
  const auto graphs = build_cooccurrence(ActivationMatrix::from_dense(dense));
  Family fam;
  fam.parent = 0;
  fam.children = {1, 2};
  FamilyMetrics m;
  parent_child_ratio(fam, graphs, m);
  CHECK(m.r_pc == doctest::Approx(3.5));
  CHECK_FALSE(m.r_pc_infinite);

  fam.children = {1};
  parent_child_ratio(fam, graphs, m);
  CHECK(m.r_pc_infinite);
}

TEST_CASE("jaccard overlap") {
  const std::vector<std::uint32_t> a = {1, 2, 3, 4}, b = {3, 4, 5};
  CHECK(jaccard(a, b) == doctest::Approx(2.0 / 5.0));
  CHECK(jaccard(a, a) == 1.0);
}

TEST_CASE("superfeature labelling of a planted family") {
  const auto planted = testing::make_planted_families({.families = 1, .documents = 4000}, 21);
  const auto& acts = planted.activations;
  const auto columns = acts.columns();
  EmbeddingCorpus corpus;
  corpus.embeddings = FloatMatrix(acts.rows(), 1, 0.0f);
  corpus.docs.resize(acts.rows());
  for (std::size_t r = 0; r < acts.rows(); ++r) corpus.docs[r].doc_id = "d" + std::to_string(r);
  FeatureCatalog catalog;
  catalog.features.resize(acts.latents());
  for (std::uint32_t i = 0; i < acts.latents(); ++i) catalog.features[i].id = i;
  for (auto c : planted.children[0]) catalog.features[c].label = "child " + std::to_string(c);

  Family fam;
  fam.parent = planted.parents[0];
  fam.children = planted.children[0];
  std::set<std::string> covered;
  for (auto m : fam.members()) {
    for (const auto& h : columns[m]) covered.insert("d" + std::to_string(h.row));
  }
  FunctionCompletionClient client([&](const CompletionRequest& r) {
    if (r.role == Role::kSuperfeature) return std::string("FINAL: Planted Family");
    return std::string(covered.count(*r.doc_id) ? "PREDICTION: 0.8" : "PREDICTION: -0.8");
  });
  const auto result = label_family(fam, catalog, corpus, columns, client);
  CHECK(result.label == "Planted Family");
  CHECK_FALSE(result.fallback);
  CHECK(result.score.f1 == 1.0);
  CHECK(result.score.predictions.size() == 6);

  Family single = fam;
  for (auto c : fam.children) catalog.features[c].label.reset();
  catalog.features[fam.children[0]].label = "only child";
  const auto fallback = label_family(single, catalog, corpus, columns, client);
  CHECK(fallback.fallback);
  CHECK(fallback.label == "only child");
}
