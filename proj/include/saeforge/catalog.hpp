// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "saeforge/metrics.hpp"
#include "saeforge/sae.hpp"

namespace saeforge {

struct Prediction {
  std::string doc_id;
  double confidence = 0.0;  // in [-1, 1]
  int ground_truth = -1;    // +1 active, -1 inactive

  bool operator==(const Prediction&) const = default;
};

void to_json(nlohmann::json& j, const Prediction& p);
void from_json(const nlohmann::json& j, Prediction& p);

struct CatalogEntry {
  std::uint32_t id = 0;
  std::vector<float> direction;  // unit decoder column
  double density = 0.0;
  double mean_nonzero_activation = 0.0;
  std::optional<std::string> label;
  std::optional<double> pearson;
  std::optional<double> f1;
  bool pearson_degenerate = false;
  bool f1_degenerate = false;
  std::vector<Prediction> predictions;
  std::string transcript;
  std::optional<std::string> error;  // why labelling or scoring failed

  // Both scores present and at least the thresholds (strictly above when
  // `strict`).
  bool interpretable(double min_f1, double min_pearson, bool strict = false) const;

  bool operator==(const CatalogEntry&) const = default;
};

void to_json(nlohmann::json& j, const CatalogEntry& e);
void from_json(const nlohmann::json& j, CatalogEntry& e);

struct FeatureCatalog {
  std::size_t dim = 0;
  std::vector<CatalogEntry> features;  // features[i].id == i

  // Directions from the decoder; densities from `stats` when given.
  static FeatureCatalog from_model(const SaeModel& model, const FeatureStats* stats = nullptr);

  std::size_t size() const { return features.size(); }
  // Throws NotFound.
  const CatalogEntry& at(std::uint32_t id) const;
  std::vector<float> densities() const;
  std::vector<bool> interpretable_mask(double min_f1, double min_pearson, bool strict = false) const;

  void save(const std::filesystem::path& path) const;
  static FeatureCatalog load(const std::filesystem::path& path);

  bool operator==(const FeatureCatalog&) const = default;
};

void to_json(nlohmann::json& j, const FeatureCatalog& c);
void from_json(const nlohmann::json& j, FeatureCatalog& c);

}  // namespace saeforge
