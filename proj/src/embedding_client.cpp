// SPDX-License-Identifier: Apache-2.0
#include "saeforge/embedding_client.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "http_util.hpp"
#include "saeforge/error.hpp"

namespace saeforge {

HttpEmbeddingClient::HttpEmbeddingClient(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}

std::vector<float> HttpEmbeddingClient::embed(const std::string& text) {
  const auto reply = detail::post_json(endpoint_, {{"model", endpoint_.model}, {"input", text}});
  try {
    return reply.at("data").at(0).at("embedding").get<std::vector<float>>();
  } catch (const nlohmann::json::exception& e) {
    throw ClientError(std::string("unexpected embedding payload: ") + e.what());
  }
}

MockEmbeddingClient::MockEmbeddingClient(std::map<std::string, std::vector<float>> table,
                                         Fallback fallback)
    : table_(std::move(table)), fallback_(std::move(fallback)) {}

std::vector<float> MockEmbeddingClient::embed(const std::string& text) {
  std::lock_guard lock(mutex_);
  ++calls_;
  if (offline_) throw ClientError("embedding endpoint offline");
  if (auto it = table_.find(text); it != table_.end()) return it->second;
  if (fallback_) return fallback_(text);
  throw ClientError("no mock embedding for '" + text + "'");
}

void MockEmbeddingClient::set_offline(bool offline) {
  std::lock_guard lock(mutex_);
  offline_ = offline;
}

std::size_t MockEmbeddingClient::calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

std::string text_hash(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

EmbeddingCache::EmbeddingCache(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw ConfigError("cache capacity must be positive");
}

std::optional<std::vector<float>> EmbeddingCache::get(const std::string& text) {
  std::lock_guard lock(mutex_);
  auto it = index_.find(text_hash(text));
  if (it == index_.end()) return std::nullopt;
  order_.splice(order_.begin(), order_, it->second);
  return it->second->second;
}

void EmbeddingCache::put(const std::string& text, std::vector<float> embedding) {
  std::lock_guard lock(mutex_);
  insert_locked(text_hash(text), std::move(embedding));
}

void EmbeddingCache::insert_locked(std::string key, std::vector<float> embedding) {
  if (auto it = index_.find(key); it != index_.end()) {
    it->second->second = std::move(embedding);
    order_.splice(order_.begin(), order_, it->second);
    return;
  }
  order_.emplace_front(key, std::move(embedding));
  index_[std::move(key)] = order_.begin();
  while (order_.size() > capacity_) {
    index_.erase(order_.back().first);
    order_.pop_back();
  }
}

std::size_t EmbeddingCache::size() const {
  std::lock_guard lock(mutex_);
  return order_.size();
}

void EmbeddingCache::save(const std::filesystem::path& path) const {
  nlohmann::json entries = nlohmann::json::array();
  {
    std::lock_guard lock(mutex_);
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
      entries.push_back({{"hash", it->first}, {"embedding", it->second}});
    }
  }
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw FormatError("cannot write embedding cache " + path.string());
    out << entries.dump() << '\n';
  }
  std::filesystem::rename(tmp, path);
}

void EmbeddingCache::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) return;
  std::ifstream in(path);
  nlohmann::json entries;
  try {
    entries = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("embedding cache " + path.string() + ": " + e.what());
  }
  std::lock_guard lock(mutex_);
  for (const auto& e : entries) {
    insert_locked(e.at("hash").get<std::string>(), e.at("embedding").get<std::vector<float>>());
  }
}

QueryEmbedder::QueryEmbedder(EmbeddingClient* client, NormStats stats, std::size_t cache_capacity)
    : client_(client), stats_(std::move(stats)), cache_(cache_capacity) {}

std::vector<float> QueryEmbedder::embed_raw(const std::string& text) {
  if (auto hit = cache_.get(text)) return *hit;
  if (!client_) throw EmbedUnavailable("no embedding client configured and '" + text + "' is not cached");
  std::vector<float> raw;
  try {
    raw = client_->embed(text);
  } catch (const ClientError& e) {
    throw EmbedUnavailable(std::string("query not cached and endpoint failed: ") + e.what());
  }
  if (raw.size() != stats_.mean.size()) {
    throw EmbedUnavailable("endpoint returned dimension " + std::to_string(raw.size()) +
                           ", expected " + std::to_string(stats_.mean.size()));
  }
  for (float v : raw) {
    if (!std::isfinite(v)) throw EmbedUnavailable("endpoint returned non-finite values");
  }
  cache_.put(text, raw);
  return raw;
}

std::vector<float> QueryEmbedder::embed_query(const std::string& text) {
  return stats_.normalize(embed_raw(text));
}

}  // namespace saeforge
