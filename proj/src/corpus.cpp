// SPDX-License-Identifier: Apache-2.0
#include "saeforge/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <unordered_set>

#include "saeforge/error.hpp"

namespace saeforge {

std::string to_string(CorpusTag tag) {
  switch (tag) {
    case CorpusTag::kAstro: return "astro";
    case CorpusTag::kCs: return "cs";
    case CorpusTag::kOther: break;
  }
  return "other";
}

CorpusTag corpus_tag_from_string(const std::string& text) {
  if (text == "astro") return CorpusTag::kAstro;
  if (text == "cs") return CorpusTag::kCs;
  if (text == "other" || text.empty()) return CorpusTag::kOther;
  throw IngestError("unknown corpus_tag '" + text + "'");
}

void to_json(nlohmann::json& j, const DocumentRecord& doc) {
  j = nlohmann::json{{"doc_id", doc.doc_id},
                     {"title", doc.title},
                     {"abstract_text", doc.abstract_text},
                     {"corpus_tag", to_string(doc.corpus_tag)}};
  j["year"] = doc.year ? nlohmann::json(*doc.year) : nlohmann::json(nullptr);
  j["citation_count"] =
      doc.citation_count ? nlohmann::json(*doc.citation_count) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, DocumentRecord& doc) {
  doc.doc_id = j.at("doc_id").get<std::string>();
  doc.title = j.value("title", std::string{});
  doc.abstract_text = j.at("abstract_text").get<std::string>();
  doc.year.reset();
  doc.citation_count.reset();
  if (auto it = j.find("year"); it != j.end() && !it->is_null()) doc.year = it->get<int>();
  if (auto it = j.find("citation_count"); it != j.end() && !it->is_null()) {
    if (it->is_number_integer() && it->get<std::int64_t>() < 0) {
      throw IngestError("negative citation_count for " + doc.doc_id);
    }
    doc.citation_count = it->get<std::uint64_t>();
  }
  doc.corpus_tag = corpus_tag_from_string(j.value("corpus_tag", std::string{"other"}));
}

void to_json(nlohmann::json& j, const NormStats& stats) {
  j = nlohmann::json{{"mean", stats.mean}, {"std", stats.std}};
}

void from_json(const nlohmann::json& j, NormStats& stats) {
  stats.mean = j.at("mean").get<std::vector<double>>();
  stats.std = j.at("std").get<std::vector<double>>();
  if (stats.mean.size() != stats.std.size()) {
    throw FormatError("norm stats mean/std length mismatch");
  }
}

std::vector<float> NormStats::normalize(std::span<const float> raw) const {
  if (raw.size() != dim()) throw ConfigError("vector dimension does not match norm stats");
  std::vector<float> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    out[i] = static_cast<float>((raw[i] - mean[i]) / std[i]);
  }
  return out;
}

std::vector<float> NormStats::denormalize(std::span<const float> normalized) const {
  if (normalized.size() != dim()) throw ConfigError("vector dimension does not match norm stats");
  std::vector<float> out(normalized.size());
  for (std::size_t i = 0; i < normalized.size(); ++i) {
    out[i] = static_cast<float>(normalized[i] * std[i] + mean[i]);
  }
  return out;
}

void EmbeddingCorpus::validate() const {
  if (embeddings.rows != docs.size()) {
    throw IngestError("embedding rows (" + std::to_string(embeddings.rows) +
                      ") do not match metadata records (" + std::to_string(docs.size()) + ")");
  }
  for (std::size_t i = 0; i < embeddings.values.size(); ++i) {
    if (!std::isfinite(embeddings.values[i])) {
      throw IngestError("non-finite value at row " + std::to_string(i / embeddings.cols));
    }
  }
  std::unordered_set<std::string> seen;
  for (const auto& doc : docs) {
    if (doc.abstract_text.empty()) throw IngestError("empty abstract for " + doc.doc_id);
    if (!seen.insert(doc.doc_id).second) throw IngestError("duplicate doc_id " + doc.doc_id);
  }
}

EmbeddingCorpus EmbeddingCorpus::subset(std::span<const std::size_t> indices) const {
  EmbeddingCorpus out;
  out.embeddings = FloatMatrix(indices.size(), dim());
  out.docs.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto src = row(indices[r]);
    std::copy(src.begin(), src.end(), out.embeddings.row(r).begin());
    out.docs.push_back(docs[indices[r]]);
  }
  out.norm_stats = norm_stats;
  return out;
}

namespace {

std::vector<DocumentRecord> read_metadata(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open metadata file " + path.string());
  std::vector<DocumentRecord> docs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      docs.push_back(nlohmann::json::parse(line).get<DocumentRecord>());
    } catch (const nlohmann::json::exception& e) {
      throw IngestError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return docs;
}

std::filesystem::path stats_path(const std::filesystem::path& embedding_file) {
  return embedding_file.string() + ".stats.json";
}

}  // namespace

EmbeddingCorpus ingest_corpus(const std::filesystem::path& embedding_file,
                              const std::filesystem::path& metadata_file) {
  EmbeddingCorpus corpus;
  try {
    corpus.embeddings = read_matrix(embedding_file);
  } catch (const FormatError& e) {
    throw IngestError(e.what());
  }
  corpus.docs = read_metadata(metadata_file);
  corpus.validate();
  return corpus;
}

void save_corpus(const EmbeddingCorpus& corpus, const std::filesystem::path& embedding_file,
                 const std::filesystem::path& metadata_file) {
  write_matrix(embedding_file, corpus.embeddings);
  std::ofstream meta(metadata_file, std::ios::trunc);
  if (!meta) throw FormatError("cannot open for writing: " + metadata_file.string());
  for (const auto& doc : corpus.docs) meta << nlohmann::json(doc).dump() << '\n';
  const auto sidecar = stats_path(embedding_file);
  if (corpus.norm_stats) {
    std::ofstream stats(sidecar, std::ios::trunc);
    stats << nlohmann::json(*corpus.norm_stats).dump() << '\n';
  } else {
    std::filesystem::remove(sidecar);
  }
}

EmbeddingCorpus load_corpus(const std::filesystem::path& embedding_file,
                            const std::filesystem::path& metadata_file) {
  EmbeddingCorpus corpus = ingest_corpus(embedding_file, metadata_file);
  const auto sidecar = stats_path(embedding_file);
  if (std::filesystem::exists(sidecar)) {
    std::ifstream in(sidecar);
    corpus.norm_stats = nlohmann::json::parse(in).get<NormStats>();
  }
  return corpus;
}

NormStats compute_norm_stats(const FloatMatrix& embeddings) {
  if (embeddings.rows < 2) throw ConfigError("normalization needs at least 2 rows");
  const std::size_t d = embeddings.cols;
  NormStats stats{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
  for (std::size_t r = 0; r < embeddings.rows; ++r) {
    const auto row = embeddings.row(r);
    for (std::size_t c = 0; c < d; ++c) stats.mean[c] += row[c];
  }
  const double n = static_cast<double>(embeddings.rows);
  for (auto& m : stats.mean) m /= n;
  for (std::size_t r = 0; r < embeddings.rows; ++r) {
    const auto row = embeddings.row(r);
    for (std::size_t c = 0; c < d; ++c) {
      const double diff = row[c] - stats.mean[c];
      stats.std[c] += diff * diff;
    }
  }
  for (std::size_t c = 0; c < d; ++c) {
    stats.std[c] = std::sqrt(stats.std[c] / n);
    // Relative floor so float round-off on a constant column still counts as constant.
    if (!(stats.std[c] > 1e-7 * std::max(1.0, std::abs(stats.mean[c])))) {
      throw DegenerateDimension("dimension " + std::to_string(c) + " has zero variance");
    }
  }
  return stats;
}

EmbeddingCorpus apply_normalization(const EmbeddingCorpus& corpus, const NormStats& stats) {
  if (stats.dim() != corpus.dim()) throw ConfigError("norm stats dimension mismatch");
  EmbeddingCorpus out = corpus;
  for (std::size_t r = 0; r < out.size(); ++r) {
    auto row = out.embeddings.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      row[c] = static_cast<float>((row[c] - stats.mean[c]) / stats.std[c]);
    }
  }
  out.norm_stats = stats;
  return out;
}

EmbeddingCorpus normalize_corpus(const EmbeddingCorpus& corpus) {
  return apply_normalization(corpus, compute_norm_stats(corpus.embeddings));
}

CorpusSplit split_corpus(const EmbeddingCorpus& corpus, double val_fraction,
                         std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ConfigError("val_fraction must lie in (0, 1)");
  }
  const std::size_t n = corpus.size();
  const auto val_count =
      static_cast<std::size_t>(std::floor(static_cast<double>(n) * val_fraction + 1e-9));
  if (val_count < 1 || val_count >= n) {
    throw ConfigError("val_fraction yields an empty train or validation split");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  CorpusSplit split;
  split.val_rows.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(val_count));
  split.train_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(val_count), order.end());
  std::sort(split.val_rows.begin(), split.val_rows.end());
  std::sort(split.train_rows.begin(), split.train_rows.end());
  split.train = corpus.subset(split.train_rows);
  split.val = corpus.subset(split.val_rows);
  return split;
}

double mean_squared_deviation(const FloatMatrix& rows) {
  if (rows.rows == 0) return 0.0;
  std::vector<double> mean(rows.cols, 0.0);
  for (std::size_t r = 0; r < rows.rows; ++r) {
    const auto row = rows.row(r);
    for (std::size_t c = 0; c < rows.cols; ++c) mean[c] += row[c];
  }
  for (auto& m : mean) m /= static_cast<double>(rows.rows);
  double total = 0.0;
  for (std::size_t r = 0; r < rows.rows; ++r) {
    const auto row = rows.row(r);
    for (std::size_t c = 0; c < rows.cols; ++c) {
      const double diff = row[c] - mean[c];
      total += diff * diff;
    }
  }
  return total / static_cast<double>(rows.rows);
}

}  // namespace saeforge
