// SPDX-License-Identifier: Apache-2.0
#pragma once

// Feature families: a dense parent feature with sparser children, found from
// a maximum spanning tree over thresholded co-occurrence weights oriented from
// higher to lower density.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "saeforge/activations.hpp"
#include "saeforge/autointerp.hpp"
#include "saeforge/catalog.hpp"
#include "saeforge/completion.hpp"
#include "saeforge/feature_analysis.hpp"

namespace saeforge {

struct FamilyEdge {
  std::uint32_t from = 0;  // denser endpoint
  std::uint32_t to = 0;
  double weight = 0.0;     // max(C_norm_ij, C_norm_ji)
};

struct FamilyMetrics {
  std::size_t size = 0;
  // Mean parent-child co-occurrence over mean child-child co-occurrence.
  // +infinity (with r_pc_infinite set) when the denominator is 0 or there is
  // a single child.
  double r_pc = 0.0;
  bool r_pc_infinite = false;
  // In-block over off-block mean of C and D (diagonal excluded); NaN when the
  // block has fewer than two features after greedy assignment.
  double c_block_ratio = 0.0;
  double d_block_ratio = 0.0;
  std::optional<double> family_f1;
  std::optional<double> family_pearson;
};

struct Family {
  std::uint32_t id = 0;
  std::uint32_t parent = 0;
  std::vector<std::uint32_t> children;  // every descendant of parent, ascending
  std::size_t iteration = 1;            // 1-based iteration that found it
  std::optional<std::string> superfeature_label;
  FamilyMetrics metrics;
  std::vector<FamilyEdge> edges;        // spanning-tree edges inside the family

  std::vector<std::uint32_t> members() const;  // parent + children, ascending
};

struct FamilyForest {
  std::vector<Family> families;
  std::size_t iterations = 0;
  std::vector<std::size_t> new_per_iteration;  // families kept per iteration
  double c_block_ratio = 0.0;                  // whole-matrix ratios under the greedy permutation
  double d_block_ratio = 0.0;

  // Throws NotFound.
  const Family& at(std::uint32_t id) const;
  void save(const std::filesystem::path& path) const;
  static FamilyForest load(const std::filesystem::path& path);
};

void to_json(nlohmann::json& j, const FamilyForest& forest);
void from_json(const nlohmann::json& j, FamilyForest& forest);
void to_json(nlohmann::json& j, const Family& family);
void from_json(const nlohmann::json& j, Family& family);

struct FamilyOptions {
  std::size_t iterations = 3;
  double dedup_jaccard = 0.6;
  // Features that may take part (e.g. passing the interpretability filter);
  // all features when empty.
  std::vector<bool> allowed;
};

// Each iteration builds a maximum spanning forest over max(C_norm_ij,
// C_norm_ji) among the remaining features, orients edges from higher to lower
// density (ties to the lower id as parent), emits one family per node with
// children, then removes every parent. Families whose Jaccard overlap with an
// earlier one exceeds the dedup threshold are dropped. `densities` defaults to
// f / N.
FamilyForest extract_families(const CoActivationGraphs& graphs, std::span<const double> densities,
                              const FamilyOptions& options = {});
FamilyForest extract_families(const CoActivationGraphs& graphs, const FamilyOptions& options = {});

double jaccard(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b);

// R(p, C) from the raw co-occurrence counts.
void parent_child_ratio(const Family& family, const CoActivationGraphs& graphs,
                        FamilyMetrics& metrics);

// Greedy permutation: families by descending size (ties by id), each taking
// its not-yet-assigned members as a block, then remaining features by
// descending density as singletons. Fills every family's metrics and the
// forest-level ratios.
void compute_family_metrics(FamilyForest& forest, const CoActivationGraphs& graphs,
                            std::span<const double> densities);
std::vector<std::uint32_t> greedy_block_order(const FamilyForest& forest,
                                              std::span<const double> densities);

struct FamilyLabelOptions {
  std::string subject = "astrophysics";
  std::uint64_t seed = 0;
  std::size_t positives = 3;
  std::size_t negatives = 3;
  double top_fraction = 0.1;  // children's top decile feeds positives
};

struct FamilyLabelResult {
  std::string label;
  InterpScore score;
  bool fallback = false;  // single labelled child: label copied, no summary call
};

// Summarizes the children's labels into a superfeature label and scores it
// with the Predictor protocol: positives drawn round-robin across children
// from each child's top activations, negatives from documents where no family
// member fires.
FamilyLabelResult label_family(const Family& family, const FeatureCatalog& catalog,
                               const EmbeddingCorpus& corpus,
                               const std::vector<std::vector<FeatureHit>>& columns,
                               CompletionClient& client, const FamilyLabelOptions& options = {});

}  // namespace saeforge
