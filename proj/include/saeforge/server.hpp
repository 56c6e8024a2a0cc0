// SPDX-License-Identifier: Apache-2.0
#pragma once

// HTTP JSON API over a SearchIndex:
//   GET  /health
//   POST /search         {query | vector, top_k}
//   POST /steer          {query | vector, edits, family_edits, top_k}
//   GET  /features/{id}
//   GET  /features?q=    label substring search
//   GET  /families
//   GET  /families/{id}
// Errors are {"error": message} with 400 (bad request), 404 (unknown id) or
// 503 (embedding unavailable).

#include <memory>
#include <string>

#include "saeforge/search.hpp"

namespace httplib {
class Server;
}

namespace saeforge {

class SearchServer {
 public:
  // `embedder` may be null; text queries then fail with 503.
  SearchServer(std::shared_ptr<const SearchIndex> index, std::shared_ptr<QueryEmbedder> embedder);
  ~SearchServer();
  SearchServer(const SearchServer&) = delete;
  SearchServer& operator=(const SearchServer&) = delete;

  // Binds and serves until stop(); returns false if binding failed.
  bool listen(const std::string& host, int port);
  // Binds to an ephemeral port and returns it (-1 on failure); then call
  // serve() to start accepting.
  int bind_any_port(const std::string& host);
  bool serve();
  void stop();
  void wait_until_ready() const;

 private:
  std::shared_ptr<const SearchIndex> index_;
  std::shared_ptr<QueryEmbedder> embedder_;
  std::unique_ptr<httplib::Server> server_;

  void register_routes();
};

nlohmann::json family_summary(const Family& family, const SearchIndex& index);
nlohmann::json family_detail(const Family& family, const SearchIndex& index);

}  // namespace saeforge
