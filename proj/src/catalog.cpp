// SPDX-License-Identifier: Apache-2.0
#include "saeforge/catalog.hpp"

#include <cmath>
#include <fstream>

#include "saeforge/error.hpp"

namespace saeforge {

namespace {

template <typename T>
void put_optional(nlohmann::json& j, const char* key, const std::optional<T>& value) {
  j[key] = value ? nlohmann::json(*value) : nlohmann::json(nullptr);
}

template <typename T>
std::optional<T> get_optional(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<T>();
}

}  // namespace

void to_json(nlohmann::json& j, const Prediction& p) {
  j = nlohmann::json{{"doc_id", p.doc_id}, {"confidence", p.confidence},
                     {"ground_truth", p.ground_truth}};
}

void from_json(const nlohmann::json& j, Prediction& p) {
  p.doc_id = j.at("doc_id").get<std::string>();
  p.confidence = j.at("confidence").get<double>();
  p.ground_truth = j.at("ground_truth").get<int>();
}

bool CatalogEntry::interpretable(double min_f1, double min_pearson, bool strict) const {
  if (!f1 || !pearson) return false;
  return strict ? (*f1 > min_f1 && *pearson > min_pearson)
                : (*f1 >= min_f1 && *pearson >= min_pearson);
}

void to_json(nlohmann::json& j, const CatalogEntry& e) {
  j = nlohmann::json{{"id", e.id},
                     {"direction", e.direction},
                     {"density", e.density},
                     {"mean_nonzero_activation", e.mean_nonzero_activation},
                     {"pearson_degenerate", e.pearson_degenerate},
                     {"f1_degenerate", e.f1_degenerate},
                     {"predictions", e.predictions},
                     {"transcript", e.transcript}};
  put_optional(j, "label", e.label);
  put_optional(j, "pearson", e.pearson);
  put_optional(j, "f1", e.f1);
  put_optional(j, "error", e.error);
}

void from_json(const nlohmann::json& j, CatalogEntry& e) {
  e.id = j.at("id").get<std::uint32_t>();
  e.direction = j.at("direction").get<std::vector<float>>();
  e.density = j.value("density", 0.0);
  e.mean_nonzero_activation = j.value("mean_nonzero_activation", 0.0);
  e.label = get_optional<std::string>(j, "label");
  e.pearson = get_optional<double>(j, "pearson");
  e.f1 = get_optional<double>(j, "f1");
  e.pearson_degenerate = j.value("pearson_degenerate", false);
  e.f1_degenerate = j.value("f1_degenerate", false);
  e.predictions = j.value("predictions", std::vector<Prediction>{});
  e.transcript = j.value("transcript", std::string{});
  e.error = get_optional<std::string>(j, "error");
}

FeatureCatalog FeatureCatalog::from_model(const SaeModel& model, const FeatureStats* stats) {
  FeatureCatalog catalog;
  catalog.dim = model.dim();
  catalog.features.resize(model.latents());
  for (std::size_t i = 0; i < model.latents(); ++i) {
    auto& entry = catalog.features[i];
    entry.id = static_cast<std::uint32_t>(i);
    const auto column = model.decoder_column(i);
    entry.direction.assign(column.begin(), column.end());
    double norm = 0.0;
    for (float v : entry.direction) norm += static_cast<double>(v) * v;
    norm = std::sqrt(norm);
    if (norm > 0.0) {
      for (float& v : entry.direction) v = static_cast<float>(v / norm);
    }
    if (stats) {
      entry.density = stats->density.at(i);
      entry.mean_nonzero_activation = stats->mean_nonzero_activation.at(i);
    }
  }
  return catalog;
}

const CatalogEntry& FeatureCatalog::at(std::uint32_t id) const {
  if (id >= features.size()) throw NotFound("feature " + std::to_string(id));
  return features[id];
}

std::vector<float> FeatureCatalog::densities() const {
  std::vector<float> out;
  out.reserve(features.size());
  for (const auto& f : features) out.push_back(static_cast<float>(f.density));
  return out;
}

std::vector<bool> FeatureCatalog::interpretable_mask(double min_f1, double min_pearson,
                                                     bool strict) const {
  std::vector<bool> mask(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    mask[i] = features[i].interpretable(min_f1, min_pearson, strict);
  }
  return mask;
}

void to_json(nlohmann::json& j, const FeatureCatalog& c) {
  j = nlohmann::json{{"dim", c.dim}, {"features", c.features}};
}

void from_json(const nlohmann::json& j, FeatureCatalog& c) {
  c.dim = j.at("dim").get<std::size_t>();
  c.features = j.at("features").get<std::vector<CatalogEntry>>();
  for (std::size_t i = 0; i < c.features.size(); ++i) {
    if (c.features[i].id != i) throw FormatError("catalog entries must be ordered by id");
    if (c.features[i].direction.size() != c.dim) {
      throw FormatError("catalog direction length differs from dim");
    }
  }
}

void FeatureCatalog::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write catalog " + path.string());
  out << nlohmann::json(*this).dump(1) << '\n';
}

FeatureCatalog FeatureCatalog::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open catalog " + path.string());
  try {
    return nlohmann::json::parse(in).get<FeatureCatalog>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("catalog " + path.string() + ": " + e.what());
  }
}

}  // namespace saeforge
