// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <list>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "saeforge/completion.hpp"
#include "saeforge/corpus.hpp"

namespace saeforge {

class EmbeddingClient {
 public:
  virtual ~EmbeddingClient() = default;
  // Raw (unnormalized) embedding. Throws ClientError on transport failure.
  virtual std::vector<float> embed(const std::string& text) = 0;
};

// POST {model, input} to an embeddings endpoint; vector read from
// data[0].embedding.
class HttpEmbeddingClient : public EmbeddingClient {
 public:
  explicit HttpEmbeddingClient(HttpEndpoint endpoint);
  std::vector<float> embed(const std::string& text) override;

 private:
  HttpEndpoint endpoint_;
};

// Fixed text -> vector table, with an optional fallback function. Unknown
// text (or any text while offline) throws ClientError.
class MockEmbeddingClient : public EmbeddingClient {
 public:
  using Fallback = std::function<std::vector<float>(const std::string&)>;
  explicit MockEmbeddingClient(std::map<std::string, std::vector<float>> table = {},
                               Fallback fallback = nullptr);
  std::vector<float> embed(const std::string& text) override;
  void set_offline(bool offline);
  std::size_t calls() const;

 private:
  std::map<std::string, std::vector<float>> table_;
  Fallback fallback_;
  mutable std::mutex mutex_;
  bool offline_ = false;
  std::size_t calls_ = 0;
};

// 64-bit FNV-1a of the text, as 16 lowercase hex digits.
std::string text_hash(const std::string& text);

// Thread-safe LRU of raw embeddings keyed by text hash.
class EmbeddingCache {
 public:
  explicit EmbeddingCache(std::size_t capacity = 4096);

  std::optional<std::vector<float>> get(const std::string& text);
  void put(const std::string& text, std::vector<float> embedding);
  std::size_t size() const;
  std::size_t capacity() const { return capacity_; }

  // JSON object {hash: vector}, most recently used last.
  void save(const std::filesystem::path& path) const;
  // Missing file is not an error.
  void load(const std::filesystem::path& path);

 private:
  using Entry = std::pair<std::string, std::vector<float>>;
  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::list<Entry> order_;  // front = most recently used
  std::unordered_map<std::string, std::list<Entry>::iterator> index_;

  void insert_locked(std::string key, std::vector<float> embedding);
};

// Raw embedding via cache then client, normalized with the corpus statistics.
class QueryEmbedder {
 public:
  QueryEmbedder(EmbeddingClient* client, NormStats stats, std::size_t cache_capacity = 4096);

  // Throws EmbedUnavailable when the text is uncached and the client fails
  // (or there is no client).
  std::vector<float> embed_query(const std::string& text);
  std::vector<float> embed_raw(const std::string& text);
  const NormStats& stats() const { return stats_; }
  EmbeddingCache& cache() { return cache_; }

 private:
  EmbeddingClient* client_;
  NormStats stats_;
  EmbeddingCache cache_;
};

}  // namespace saeforge
