// SPDX-License-Identifier: Apache-2.0
#include "saeforge/search.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include "saeforge/error.hpp"
#include "saeforge/simd.hpp"
#include "saeforge/steering.hpp"

namespace saeforge {

namespace {

double round4(double v) { return std::round(v * 1e4) / 1e4; }

bool ranks_before(const SearchIndex& index, const std::vector<float>& scores, std::size_t a,
                  std::size_t b) {
  if (scores[a] != scores[b]) return scores[a] > scores[b];
  return index.corpus->docs[a].doc_id < index.corpus->docs[b].doc_id;
}

std::vector<QueryFeature> describe(const SearchIndex& index, const SparseCode& code) {
  std::vector<QueryFeature> out;
  for (std::size_t s = 0; s < code.size(); ++s) {
    out.push_back({code.indices[s], index.label_of(code.indices[s]), code.values[s]});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const QueryFeature& a, const QueryFeature& b) { return a.activation > b.activation; });
  return out;
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

nlohmann::json optional_json(const auto& value) {
  return value ? nlohmann::json(*value) : nlohmann::json(nullptr);
}

}  // namespace

void to_json(nlohmann::json& j, const SearchResult& r) {
  nlohmann::json hits = nlohmann::json::array();
  for (const auto& h : r.hits) {
    hits.push_back({{"doc_id", h.doc_id},
                    {"title", h.title},
                    {"score", round4(h.score)},
                    {"year", optional_json(h.year)},
                    {"citation_count", optional_json(h.citation_count)}});
  }
  nlohmann::json features = nlohmann::json::array();
  for (const auto& f : r.query_features) {
    features.push_back({{"id", f.id}, {"label", optional_json(f.label)}, {"activation", f.activation}});
  }
  j = nlohmann::json{{"results", hits}, {"query_features", features}};
  if (r.fidelity) j["fidelity"] = *r.fidelity;
}

std::optional<std::string> SearchIndex::label_of(std::uint32_t feature) const {
  if (!catalog || feature >= catalog->size()) return std::nullopt;
  return catalog->features[feature].label;
}

std::shared_ptr<SearchIndex> build_index(std::shared_ptr<const EmbeddingCorpus> corpus,
                                         std::shared_ptr<const SaeModel> model,
                                         std::shared_ptr<const FeatureCatalog> catalog,
                                         std::shared_ptr<const FamilyForest> forest) {
  if (!corpus || !model) throw ConfigError("index needs a corpus and a model");
  if (corpus->dim() != model->dim()) {
    throw ConfigError("corpus dimension " + std::to_string(corpus->dim()) +
                      " does not match model dimension " + std::to_string(model->dim()));
  }
  if (catalog && catalog->size() != model->latents()) {
    throw ConfigError("catalog size does not match model latents");
  }
  auto index = std::make_shared<SearchIndex>();
  index->unit_rows = corpus->embeddings;
  for (std::size_t r = 0; r < corpus->size(); ++r) {
    auto row = index->unit_rows.row(r);
    const double norm = std::sqrt(simd::squared_norm<float>(row));
    if (!(norm > 0.0)) throw ConfigError("document " + corpus->docs[r].doc_id + " has a zero embedding");
    for (float& v : row) v = static_cast<float>(v / norm);
  }
  index->activations = encode_corpus(*model, *corpus);
  index->columns = index->activations.columns();
  index->corpus = std::move(corpus);
  index->model = std::move(model);
  index->catalog = std::move(catalog);
  index->forest = std::move(forest);
  return index;
}

SearchResult search(const SearchIndex& index, std::span<const float> q, std::size_t top_k) {
  if (q.size() != index.unit_rows.cols) throw ConfigError("query dimension does not match index");
  for (float v : q) {
    if (!std::isfinite(v)) throw ConfigError("query has non-finite entries");
  }
  const std::size_t n = index.size();
  std::vector<float> unit(q.begin(), q.end());
  const double norm = std::sqrt(simd::squared_norm<float>(unit));
  if (norm > 0.0) {
    for (float& v : unit) v = static_cast<float>(v / norm);
  }
  std::vector<float> scores(n);
  const std::vector<float> zero(n, 0.0f);
  simd::matvec<float>(index.unit_rows.values, unit, zero, scores);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t k = std::min(top_k, n);
  auto cmp = [&](std::size_t a, std::size_t b) { return ranks_before(index, scores, a, b); };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), cmp);

  SearchResult result;
  for (std::size_t i = 0; i < k; ++i) {
    const auto& doc = index.corpus->docs[order[i]];
    result.hits.push_back({order[i], doc.doc_id, doc.title, scores[order[i]], doc.year, doc.citation_count});
  }
  result.query_features = describe(index, index.model->encode(q));
  return result;
}

void from_json(const nlohmann::json& j, SteerRequest& r) {
  if (j.contains("query") && !j["query"].is_null()) r.query = j["query"].get<std::string>();
  if (j.contains("vector") && !j["vector"].is_null()) r.vector = j["vector"].get<std::vector<float>>();
  auto read_map = [&](const char* key, std::map<std::uint32_t, double>& out) {
    if (!j.contains(key)) return;
    for (const auto& [k, v] : j[key].items()) {
      std::size_t used = 0;
      unsigned long id = 0;
      try {
        id = std::stoul(k, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != k.size()) throw ConfigError(std::string(key) + " key '" + k + "' is not an id");
      out[static_cast<std::uint32_t>(id)] = v.get<double>();
    }
  };
  read_map("edits", r.edits);
  read_map("family_edits", r.family_edits);
  r.top_k = j.value("top_k", std::size_t{10});
  if (r.top_k == 0) throw ConfigError("top_k must be at least 1");
}

std::vector<float> resolve_query(const SearchIndex& index, const SteerRequest& request,
                                 QueryEmbedder* embedder) {
  if (request.vector) {
    if (request.vector->size() != index.unit_rows.cols) throw ConfigError("vector dimension does not match index");
    return *request.vector;
  }
  if (!request.query) throw ConfigError("request needs a query or a vector");
  if (!embedder) throw EmbedUnavailable("no embedding service configured for text queries");
  return embedder->embed_query(*request.query);
}

SearchResult steer_search(const SearchIndex& index, const SteerRequest& request,
                          QueryEmbedder* embedder) {
  Intervention iv;
  for (const auto& [family_id, weight] : request.family_edits) {
    if (!index.forest) throw NotFound("family " + std::to_string(family_id));
    for (auto member : index.forest->at(family_id).members()) iv.edits[member] = weight;
  }
  for (const auto& [feature, weight] : request.edits) {
    if (feature >= index.model->latents()) throw NotFound("feature " + std::to_string(feature));
    iv.edits[feature] = weight;
  }
  const auto q = resolve_query(index, request, embedder);
  const auto steered = apply_intervention(*index.model, q, iv);
  auto result = search(index, steered.modified, request.top_k);
  result.query_features = describe(index, steered.code);
  result.fidelity = steered.fidelity;
  return result;
}

nlohmann::json feature_detail(const SearchIndex& index, std::uint32_t feature, std::size_t top) {
  if (feature >= index.model->latents()) throw NotFound("feature " + std::to_string(feature));
  nlohmann::json out{{"id", feature}};
  if (index.catalog) {
    const auto& e = index.catalog->at(feature);
    out["label"] = optional_json(e.label);
    out["pearson"] = optional_json(e.pearson);
    out["f1"] = optional_json(e.f1);
    out["density"] = e.density;
    out["mean_nonzero_activation"] = e.mean_nonzero_activation;
  } else {
    out["label"] = nullptr;
  }
  const auto& hits = index.columns[feature];
  if (!index.catalog) out["density"] = index.size() ? static_cast<double>(hits.size()) / index.size() : 0.0;

  std::vector<FeatureHit> sorted = hits;
  std::sort(sorted.begin(), sorted.end(), [](const FeatureHit& a, const FeatureHit& b) {
    return a.value != b.value ? a.value > b.value : a.row < b.row;
  });
  nlohmann::json docs = nlohmann::json::array();
  for (std::size_t i = 0; i < std::min(top, sorted.size()); ++i) {
    const auto& doc = index.corpus->docs[sorted[i].row];
    docs.push_back({{"doc_id", doc.doc_id}, {"title", doc.title}, {"activation", sorted[i].value}});
  }
  out["top_documents"] = docs;

  // Co-occurrence counts restricted to this feature's documents.
  std::map<std::uint32_t, std::size_t> counts;
  for (const auto& h : hits) {
    for (auto other : index.activations.row_features(h.row)) {
      if (other != feature) ++counts[other];
    }
  }
  std::vector<std::pair<std::uint32_t, std::size_t>> co(counts.begin(), counts.end());
  std::stable_sort(co.begin(), co.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  nlohmann::json cooccurring = nlohmann::json::array();
  for (std::size_t i = 0; i < std::min(top, co.size()); ++i) {
    cooccurring.push_back({{"id", co[i].first},
                           {"label", optional_json(index.label_of(co[i].first))},
                           {"count", co[i].second},
                           {"fraction", hits.empty() ? 0.0 : static_cast<double>(co[i].second) / hits.size()}});
  }
  out["cooccurring"] = cooccurring;

  const auto column = index.model->decoder_column(feature);
  std::vector<std::pair<double, std::uint32_t>> sims;
  for (std::uint32_t j = 0; j < index.model->latents(); ++j) {
    if (j != feature) sims.emplace_back(simd::dot<float>(column, index.model->decoder_column(j)), j);
  }
  const std::size_t keep = std::min(top, sims.size());
  std::partial_sort(sims.begin(), sims.begin() + static_cast<std::ptrdiff_t>(keep), sims.end(),
                    [](const auto& a, const auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
  nlohmann::json similar = nlohmann::json::array();
  for (std::size_t i = 0; i < keep; ++i) {
    similar.push_back({{"id", sims[i].second},
                       {"label", optional_json(index.label_of(sims[i].second))},
                       {"cosine", sims[i].first}});
  }
  out["similar"] = similar;
  return out;
}

nlohmann::json find_features(const SearchIndex& index, const std::string& needle, std::size_t limit) {
  nlohmann::json out = nlohmann::json::array();
  if (!index.catalog) return out;
  const auto want = lower(needle);
  for (const auto& e : index.catalog->features) {
    if (!e.label) continue;
    if (lower(*e.label).find(want) == std::string::npos) continue;
    out.push_back({{"id", e.id}, {"label", *e.label}, {"density", e.density},
                   {"pearson", optional_json(e.pearson)}, {"f1", optional_json(e.f1)}});
    if (out.size() >= limit) break;
  }
  return out;
}

}  // namespace saeforge
