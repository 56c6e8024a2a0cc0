// SPDX-License-Identifier: Apache-2.0
#pragma once

// Exact cosine retrieval over a corpus, plus steered retrieval through the
// SAE.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "saeforge/activations.hpp"
#include "saeforge/catalog.hpp"
#include "saeforge/corpus.hpp"
#include "saeforge/embedding_client.hpp"
#include "saeforge/families.hpp"
#include "saeforge/sae.hpp"

namespace saeforge {

struct SearchHit {
  std::size_t row = 0;
  std::string doc_id;
  std::string title;
  double score = 0.0;
  std::optional<int> year;
  std::optional<std::uint64_t> citation_count;
};

struct QueryFeature {
  std::uint32_t id = 0;
  std::optional<std::string> label;
  double activation = 0.0;
};

struct SearchResult {
  std::vector<SearchHit> hits;                 // score descending, doc_id ascending on ties
  std::vector<QueryFeature> query_features;    // activation descending
  std::optional<double> fidelity;              // set by steered searches
};

// Scores are rounded to 4 decimals for display.
void to_json(nlohmann::json& j, const SearchResult& r);

struct SearchIndex {
  std::shared_ptr<const EmbeddingCorpus> corpus;  // normalized rows
  std::shared_ptr<const SaeModel> model;
  std::shared_ptr<const FeatureCatalog> catalog;  // may be null
  std::shared_ptr<const FamilyForest> forest;     // may be null
  FloatMatrix unit_rows;                          // corpus rows scaled to unit norm
  ActivationMatrix activations;                   // SAE codes of the corpus
  std::vector<std::vector<FeatureHit>> columns;   // per-feature hit lists

  std::size_t size() const { return unit_rows.rows; }
  std::optional<std::string> label_of(std::uint32_t feature) const;
};

// Throws ConfigError on a dimension mismatch or a zero row (naming its doc).
std::shared_ptr<SearchIndex> build_index(std::shared_ptr<const EmbeddingCorpus> corpus,
                                         std::shared_ptr<const SaeModel> model,
                                         std::shared_ptr<const FeatureCatalog> catalog = nullptr,
                                         std::shared_ptr<const FamilyForest> forest = nullptr);

// Exhaustive cosine scoring of every row against q.
SearchResult search(const SearchIndex& index, std::span<const float> q, std::size_t top_k = 10);

struct SteerRequest {
  std::optional<std::string> query;
  std::optional<std::vector<float>> vector;  // normalized embedding; wins over `query`
  std::map<std::uint32_t, double> edits;
  std::map<std::uint32_t, double> family_edits;  // every member gets the weight
  std::size_t top_k = 10;
};

void from_json(const nlohmann::json& j, SteerRequest& r);

// Family edits are expanded first (parent included); explicit feature edits
// override them. The modified embedding decode(h') is searched, and the
// result carries fidelity = cos(decode(h), decode(h')). Query features are
// those of the unedited query. Throws NotFound for unknown ids and ConfigError
// when neither query nor vector is present.
SearchResult steer_search(const SearchIndex& index, const SteerRequest& request,
                          QueryEmbedder* embedder = nullptr);

// Normalized query vector for a request (embedding `query` when needed).
std::vector<float> resolve_query(const SearchIndex& index, const SteerRequest& request,
                                 QueryEmbedder* embedder);

// Feature page: label, scores, density, top activating docs, top
// co-occurring features and nearest decoder directions.
nlohmann::json feature_detail(const SearchIndex& index, std::uint32_t feature,
                              std::size_t top = 5);
// Label search: case-insensitive substring over catalog labels.
nlohmann::json find_features(const SearchIndex& index, const std::string& needle,
                             std::size_t limit = 50);

}  // namespace saeforge
