// SPDX-License-Identifier: Apache-2.0
#include "saeforge/completion.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "httplib.h"
#include "http_util.hpp"
#include "saeforge/error.hpp"

namespace saeforge {

const char* to_string(Role role) {
  switch (role) {
    case Role::kInterpreter: return "interpreter";
    case Role::kPredictor: return "predictor";
    case Role::kSuperfeature: return "superfeature";
    case Role::kJudge: return "judge";
    case Role::kRewriter: return "rewriter";
  }
  return "unknown";
}

Role role_from_string(const std::string& text) {
  for (Role r : {Role::kInterpreter, Role::kPredictor, Role::kSuperfeature, Role::kJudge,
                 Role::kRewriter}) {
    if (text == to_string(r)) return r;
  }
  throw ConfigError("unknown completion role '" + text + "'");
}

void to_json(nlohmann::json& j, const HttpEndpoint& e) {
  j = nlohmann::json{{"base_url", e.base_url},       {"path", e.path},
                     {"model", e.model},             {"token_env", e.token_env},
                     {"max_retries", e.max_retries}, {"backoff_seconds", e.backoff_seconds},
                     {"timeout_seconds", e.timeout_seconds}};
}

HttpEndpoint endpoint_from_json(const nlohmann::json& j, const std::string& default_path) {
  HttpEndpoint e;
  e.base_url = j.value("base_url", std::string{});
  e.path = j.value("path", default_path);
  e.model = j.value("model", std::string{});
  e.token_env = j.value("token_env", std::string{});
  e.max_retries = j.value("max_retries", e.max_retries);
  e.backoff_seconds = j.value("backoff_seconds", e.backoff_seconds);
  e.timeout_seconds = j.value("timeout_seconds", e.timeout_seconds);
  if (e.base_url.empty()) throw ConfigError("endpoint needs a base_url");
  if (e.max_retries < 0) throw ConfigError("max_retries must be non-negative");
  return e;
}

namespace detail {

nlohmann::json post_json(const HttpEndpoint& endpoint, const nlohmann::json& body) {
  httplib::Client client(endpoint.base_url);
  const auto timeout = std::chrono::duration<double>(endpoint.timeout_seconds);
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  httplib::Headers headers;
  if (!endpoint.token_env.empty()) {
    if (const char* token = std::getenv(endpoint.token_env.c_str())) {
      headers.emplace("Authorization", std::string("Bearer ") + token);
    }
  }
  const std::string payload = body.dump();
  double backoff = endpoint.backoff_seconds;
  std::string last_error;
  for (int attempt = 0; attempt <= endpoint.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
      backoff *= 2.0;
    }
    auto result = client.Post(endpoint.path, headers, payload, "application/json");
    if (!result) {
      last_error = "transport error: " + httplib::to_string(result.error());
      continue;
    }
    const int status = result->status;
    if (status == 429 || status >= 500) {
      last_error = "HTTP " + std::to_string(status);
      continue;
    }
    if (status < 200 || status >= 300) {
      throw ClientError(endpoint.base_url + endpoint.path + " returned HTTP " +
                        std::to_string(status) + ": " + result->body.substr(0, 200));
    }
    try {
      return nlohmann::json::parse(result->body);
    } catch (const nlohmann::json::exception& e) {
      throw ClientError(std::string("malformed JSON response: ") + e.what());
    }
  }
  throw ClientError(endpoint.base_url + endpoint.path + " failed after " +
                    std::to_string(endpoint.max_retries + 1) + " attempts (" + last_error + ")");
}

}  // namespace detail

HttpCompletionClient::HttpCompletionClient(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}

std::string HttpCompletionClient::complete(const CompletionRequest& request) {
  const nlohmann::json body{
      {"model", endpoint_.model},
      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", request.prompt}}})},
      {"temperature", request.temperature}};
  const auto reply = detail::post_json(endpoint_, body);
  try {
    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ClientError(std::string("unexpected completion payload: ") + e.what());
  }
}

MockCompletionClient::MockCompletionClient(nlohmann::json script) : script_(std::move(script)) {
  if (!script_.is_object()) throw ConfigError("mock completion script must be a JSON object");
}

MockCompletionClient MockCompletionClient::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open mock script " + path.string());
  try {
    return MockCompletionClient(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("mock script " + path.string() + ": " + e.what());
  }
}

namespace {

const nlohmann::json* lookup(const nlohmann::json& table, const std::string& key) {
  if (!table.is_object()) return nullptr;
  if (auto it = table.find(key); it != table.end()) return &*it;
  if (auto it = table.find("*"); it != table.end()) return &*it;
  return nullptr;
}

}  // namespace

std::string MockCompletionClient::complete(const CompletionRequest& request) {
  const std::string role = to_string(request.role);
  const std::string feature = request.feature_id ? std::to_string(*request.feature_id) : "*";
  const std::string doc = request.doc_id.value_or("*");
  std::lock_guard lock(mutex_);
  ++calls_;
  static const nlohmann::json kEmpty = nlohmann::json::object();
  const nlohmann::json* entry = lookup(script_.contains(role) ? script_.at(role) : kEmpty, feature);
  std::string key = role + "/" + feature;
  if (entry && entry->is_object()) {
    entry = lookup(*entry, doc);
    key += "/" + doc;
  }
  if (!entry) throw ClientError("mock script has no response for " + key);
  if (entry->is_string()) return entry->get<std::string>();
  if (entry->is_array() && !entry->empty()) {
    std::size_t& next = cursor_[key];
    const std::size_t index = std::min(next, entry->size() - 1);
    ++next;
    return entry->at(index).get<std::string>();
  }
  throw ClientError("mock response for " + key + " must be a string or non-empty array");
}

std::size_t MockCompletionClient::calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

std::string FunctionCompletionClient::complete(const CompletionRequest& request) {
  std::lock_guard lock(mutex_);
  return fn_(request);
}

}  // namespace saeforge
