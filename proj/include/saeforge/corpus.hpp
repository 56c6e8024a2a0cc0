// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "saeforge/matrix.hpp"

namespace saeforge {

enum class CorpusTag { kAstro, kCs, kOther };

std::string to_string(CorpusTag tag);
CorpusTag corpus_tag_from_string(const std::string& text);

struct DocumentRecord {
  std::string doc_id;
  std::string title;
  std::string abstract_text;
  std::optional<int> year;
  std::optional<std::uint64_t> citation_count;
  CorpusTag corpus_tag = CorpusTag::kOther;

  bool operator==(const DocumentRecord&) const = default;
};

void to_json(nlohmann::json& j, const DocumentRecord& doc);
void from_json(const nlohmann::json& j, DocumentRecord& doc);

// Per-dimension statistics of the data a corpus was normalized with.
// Population convention: std = sqrt(sum (x - mean)^2 / N).
struct NormStats {
  std::vector<double> mean;
  std::vector<double> std;

  std::size_t dim() const { return mean.size(); }
  std::vector<float> normalize(std::span<const float> raw) const;
  std::vector<float> denormalize(std::span<const float> normalized) const;

  bool operator==(const NormStats&) const = default;
};

void to_json(nlohmann::json& j, const NormStats& stats);
void from_json(const nlohmann::json& j, NormStats& stats);

struct EmbeddingCorpus {
  FloatMatrix embeddings;  // one row per document
  std::vector<DocumentRecord> docs;
  std::optional<NormStats> norm_stats;

  std::size_t size() const { return embeddings.rows; }
  std::size_t dim() const { return embeddings.cols; }
  std::span<const float> row(std::size_t i) const { return embeddings.row(i); }

  // Throws IngestError when rows and documents disagree, values are
  // non-finite, ids repeat, or an abstract is empty.
  void validate() const;
  // Rows in the given order, norm_stats carried over.
  EmbeddingCorpus subset(std::span<const std::size_t> indices) const;
};

EmbeddingCorpus ingest_corpus(const std::filesystem::path& embedding_file,
                              const std::filesystem::path& metadata_file);

// Writes <embedding_file>, <metadata_file>, and when norm_stats is set a
// "<embedding_file>.stats.json" sidecar that load_corpus picks up.
void save_corpus(const EmbeddingCorpus& corpus,
                 const std::filesystem::path& embedding_file,
                 const std::filesystem::path& metadata_file);
EmbeddingCorpus load_corpus(const std::filesystem::path& embedding_file,
                            const std::filesystem::path& metadata_file);

NormStats compute_norm_stats(const FloatMatrix& embeddings);

// Normalizes with statistics of this corpus and records them in norm_stats.
EmbeddingCorpus normalize_corpus(const EmbeddingCorpus& corpus);
// Normalizes with externally supplied statistics (validation split, queries).
EmbeddingCorpus apply_normalization(const EmbeddingCorpus& corpus, const NormStats& stats);

struct CorpusSplit {
  EmbeddingCorpus train;
  EmbeddingCorpus val;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> val_rows;
};

CorpusSplit split_corpus(const EmbeddingCorpus& corpus, double val_fraction,
                         std::uint64_t seed);

// Mean squared distance of rows to the row mean, i.e. the error of always
// predicting the mean.
double mean_squared_deviation(const FloatMatrix& rows);

}  // namespace saeforge
