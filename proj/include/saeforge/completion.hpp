// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>

#include "json.hpp"

namespace saeforge {

enum class Role { kInterpreter, kPredictor, kSuperfeature, kJudge, kRewriter };

const char* to_string(Role role);
Role role_from_string(const std::string& text);

struct CompletionRequest {
  Role role = Role::kInterpreter;
  std::optional<std::uint32_t> feature_id;
  std::optional<std::string> doc_id;
  std::string prompt;
  double temperature = 0.0;
  // Free-form request context. Remote endpoints never see it; scripted
  // clients may use it to pick a response.
  nlohmann::json context = nlohmann::json::object();
};

class CompletionClient {
 public:
  virtual ~CompletionClient() = default;
  // Throws ClientError when the endpoint cannot be reached.
  virtual std::string complete(const CompletionRequest& request) = 0;
};

// Shared HTTP settings for the completion and embedding endpoints.
struct HttpEndpoint {
  std::string base_url;  // e.g. "https://api.example.com"
  std::string path;
  std::string model;
  std::string token_env;  // environment variable holding the bearer token
  int max_retries = 3;
  double backoff_seconds = 0.5;  // doubled after every failed attempt
  double timeout_seconds = 60.0;
};

void to_json(nlohmann::json& j, const HttpEndpoint& e);
// `default_path` fills `path` when the document omits it.
HttpEndpoint endpoint_from_json(const nlohmann::json& j, const std::string& default_path);

// Chat-completion style endpoint: POST {model, messages, temperature}, reply
// text read from choices[0].message.content.
class HttpCompletionClient : public CompletionClient {
 public:
  explicit HttpCompletionClient(HttpEndpoint endpoint);
  std::string complete(const CompletionRequest& request) override;

 private:
  HttpEndpoint endpoint_;
};

// Scripted responses. The script is a JSON object keyed by role name; each
// role maps feature ids (or "*") to a response, where a response is
//   - a string,
//   - an array of strings served in order (the last one repeats), or
//   - an object keyed by doc id (or "*") whose values are responses.
// Lookups fall back from the exact feature/doc to "*". Missing entries throw
// ClientError.
class MockCompletionClient : public CompletionClient {
 public:
  explicit MockCompletionClient(nlohmann::json script);
  static MockCompletionClient from_file(const std::filesystem::path& path);

  std::string complete(const CompletionRequest& request) override;
  std::size_t calls() const;

 private:
  nlohmann::json script_;
  mutable std::mutex mutex_;
  std::map<std::string, std::size_t> cursor_;
  std::size_t calls_ = 0;
};

// Wraps a callable; handy for scripted tests that need request context.
class FunctionCompletionClient : public CompletionClient {
 public:
  using Fn = std::function<std::string(const CompletionRequest&)>;
  explicit FunctionCompletionClient(Fn fn) : fn_(std::move(fn)) {}
  std::string complete(const CompletionRequest& request) override;

 private:
  Fn fn_;
  std::mutex mutex_;
};

}  // namespace saeforge
