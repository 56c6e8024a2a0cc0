// SPDX-License-Identifier: Apache-2.0
#include "saeforge/server.hpp"

#include <cmath>

#include "httplib.h"
#include "saeforge/error.hpp"

namespace saeforge {

namespace {

void reply(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

// Maps library exceptions to HTTP statuses.
template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    reply(res, 200, fn());
  } catch (const NotFound& e) {
    reply(res, 404, {{"error", e.what()}});
  } catch (const EmbedUnavailable& e) {
    reply(res, 503, {{"error", e.what()}});
  } catch (const nlohmann::json::exception& e) {
    reply(res, 400, {{"error", std::string("malformed request: ") + e.what()}});
  } catch (const Error& e) {
    reply(res, 400, {{"error", e.what()}});
  } catch (const std::exception& e) {
    reply(res, 500, {{"error", e.what()}});
  }
}

std::uint32_t parse_id(const std::string& text) {
  std::size_t used = 0;
  unsigned long id = 0;
  try {
    id = std::stoul(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || id > 0xffffffffUL) throw NotFound("id '" + text + "'");
  return static_cast<std::uint32_t>(id);
}

nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

nlohmann::json family_summary(const Family& family, const SearchIndex& index) {
  return {{"id", family.id},
          {"parent", family.parent},
          {"parent_label", index.label_of(family.parent) ? nlohmann::json(*index.label_of(family.parent))
                                                         : nlohmann::json(nullptr)},
          {"size", family.children.size() + 1},
          {"iteration", family.iteration},
          {"superfeature_label",
           family.superfeature_label ? nlohmann::json(*family.superfeature_label) : nlohmann::json(nullptr)}};
}

nlohmann::json family_detail(const Family& family, const SearchIndex& index) {
  auto out = family_summary(family, index);
  nlohmann::json members = nlohmann::json::array();
  for (auto m : family.members()) {
    nlohmann::json entry{{"id", m}, {"role", m == family.parent ? "parent" : "child"}};
    const auto label = index.label_of(m);
    entry["label"] = label ? nlohmann::json(*label) : nlohmann::json(nullptr);
    if (index.catalog) {
      const auto& e = index.catalog->at(m);
      entry["density"] = e.density;
      entry["pearson"] = e.pearson ? nlohmann::json(*e.pearson) : nlohmann::json(nullptr);
    } else {
      entry["density"] = index.size() ? static_cast<double>(index.columns[m].size()) / index.size() : 0.0;
    }
    members.push_back(std::move(entry));
  }
  out["members"] = members;
  const auto& m = family.metrics;
  out["metrics"] = {{"size", m.size},
                    {"r_pc", finite_or_null(m.r_pc)},
                    {"r_pc_infinite", m.r_pc_infinite},
                    {"c_block_ratio", finite_or_null(m.c_block_ratio)},
                    {"d_block_ratio", finite_or_null(m.d_block_ratio)},
                    {"family_f1", m.family_f1 ? nlohmann::json(*m.family_f1) : nlohmann::json(nullptr)},
                    {"family_pearson", m.family_pearson ? nlohmann::json(*m.family_pearson) : nlohmann::json(nullptr)}};
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : family.edges) edges.push_back({{"from", e.from}, {"to", e.to}, {"weight", e.weight}});
  out["edges"] = edges;
  return out;
}

SearchServer::SearchServer(std::shared_ptr<const SearchIndex> index,
                           std::shared_ptr<QueryEmbedder> embedder)
    : index_(std::move(index)), embedder_(std::move(embedder)), server_(std::make_unique<httplib::Server>()) {
  if (!index_) throw ConfigError("server needs an index");
  register_routes();
}

SearchServer::~SearchServer() { stop(); }

void SearchServer::register_routes() {
  auto& s = *server_;
  s.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
    reply(res, 200, {{"status", "ok"},
                     {"documents", index_->size()},
                     {"latents", index_->model->latents()},
                     {"families", index_->forest ? index_->forest->families.size() : 0}});
  });
  s.Post("/search", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto body = nlohmann::json::parse(req.body);
      SteerRequest request = body.get<SteerRequest>();
      const auto q = resolve_query(*index_, request, embedder_.get());
      return nlohmann::json(search(*index_, q, request.top_k));
    });
  });
  s.Post("/steer", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto request = nlohmann::json::parse(req.body).get<SteerRequest>();
      return nlohmann::json(steer_search(*index_, request, embedder_.get()));
    });
  });
  s.Get(R"(/features/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { return feature_detail(*index_, parse_id(req.matches[1])); });
  });
  s.Get("/features", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      std::size_t limit = 50;
      if (req.has_param("limit")) limit = std::stoul(req.get_param_value("limit"));
      return nlohmann::json{{"features", find_features(*index_, req.get_param_value("q"), limit)}};
    });
  });
  s.Get("/families", [this](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] {
      nlohmann::json list = nlohmann::json::array();
      if (index_->forest) {
        for (const auto& f : index_->forest->families) list.push_back(family_summary(f, *index_));
      }
      return nlohmann::json{{"families", list}};
    });
  });
  s.Get(R"(/families/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto id = parse_id(req.matches[1]);
      if (!index_->forest) throw NotFound("family " + std::to_string(id));
      return family_detail(index_->forest->at(id), *index_);
    });
  });
}

bool SearchServer::listen(const std::string& host, int port) { return server_->listen(host, port); }

int SearchServer::bind_any_port(const std::string& host) { return server_->bind_to_any_port(host); }

bool SearchServer::serve() { return server_->listen_after_bind(); }

void SearchServer::stop() {
  if (server_ && server_->is_running()) server_->stop();
}

void SearchServer::wait_until_ready() const { server_->wait_until_ready(); }

}  // namespace saeforge
