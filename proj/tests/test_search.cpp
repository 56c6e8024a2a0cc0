// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "saeforge/embedding_client.hpp"
#include "saeforge/error.hpp"
#include "saeforge/search.hpp"
#include "saeforge/server.hpp"
#include "support/temp_dir.hpp"
#include "support/toy_model.hpp"

using namespace saeforge;

namespace {

std::shared_ptr<EmbeddingCorpus> random_corpus(std::size_t rows, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> gauss(0.0f, 1.0f);
  auto corpus = std::make_shared<EmbeddingCorpus>();
  corpus->embeddings = FloatMatrix(rows, dim);
  for (auto& v : corpus->embeddings.values) v = gauss(rng);
  corpus->docs.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    corpus->docs[r].doc_id = "doc-" + std::to_string(1000 + r);
    corpus->docs[r].title = "Title " + std::to_string(r);
    corpus->docs[r].abstract_text = "Abstract " + std::to_string(r);
  }
  NormStats stats;
  stats.mean.assign(dim, 0.0);
  stats.std.assign(dim, 1.0);
  corpus->norm_stats = stats;
  return corpus;
}

std::shared_ptr<const SaeModel> toy_model_ptr() {
  return std::make_shared<SaeModel>(testing::shared_toy_model().model);
}

// Exhaustive oracle: cosine in double, sort by score then doc id.
std::vector<std::pair<std::string, double>> oracle(const EmbeddingCorpus& corpus, std::span<const float> q,
                                                   std::size_t top_k) {
  std::vector<std::pair<std::string, double>> all;
  double qn = 0.0;
  for (float v : q) qn += static_cast<double>(v) * v;
  for (std::size_t r = 0; r < corpus.size(); ++r) {
    double dot = 0.0, rn = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) {
      dot += static_cast<double>(q[j]) * corpus.embeddings(r, j);
      rn += static_cast<double>(corpus.embeddings(r, j)) * corpus.embeddings(r, j);
    }
    all.emplace_back(corpus.docs[r].doc_id, dot / std::sqrt(qn * rn));
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  all.resize(std::min(top_k, all.size()));
  return all;
}

}  // namespace

TEST_CASE("search ranking equals an exhaustive sort") {
  const auto corpus = random_corpus(50, 16, 3);
  const auto index = build_index(corpus, toy_model_ptr());
  std::mt19937_64 rng(9);
  std::normal_distribution<float> gauss(0.0f, 1.0f);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<float> q(16);
    for (auto& v : q) v = gauss(rng);
    const auto result = search(*index, q, 10);
    const auto expected = oracle(*corpus, q, 10);
    REQUIRE(result.hits.size() == expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) {
      CHECK(result.hits[i].doc_id == expected[i].first);
      CHECK(result.hits[i].score == doctest::Approx(expected[i].second).epsilon(1e-6));
    }
  }
}

TEST_CASE("every document retrieves itself first with score 1") {
  const auto corpus = random_corpus(50, 16, 4);
  const auto index = build_index(corpus, toy_model_ptr());
  for (std::size_t r = 0; r < corpus->size(); ++r) {
    const auto result = search(*index, corpus->row(r), 1);
    REQUIRE(result.hits.size() == 1);
    CHECK(result.hits[0].doc_id == corpus->docs[r].doc_id);
    CHECK(std::abs(result.hits[0].score - 1.0) <= 1e-6);
  }
}

TEST_CASE("top_k is clamped and ties break by doc id") {
  auto corpus = random_corpus(5, 16, 5);
  std::copy(corpus->row(0).begin(), corpus->row(0).end(), corpus->embeddings.row(4).begin());
  corpus->docs[4].doc_id = "doc-0000";  // identical vector, smaller id
  const auto index = build_index(corpus, toy_model_ptr());
  const auto result = search(*index, corpus->row(0), 100);
  CHECK(result.hits.size() == 5);
  CHECK(result.hits[0].doc_id == "doc-0000");
  CHECK(result.hits[1].doc_id == "doc-1000");
  const nlohmann::json j = result;
  CHECK(j["results"].size() == 5);
  const double shown = j["results"][2]["score"].get<double>();
  CHECK(shown == std::round(shown * 1e4) / 1e4);
}

TEST_CASE("index construction rejects zero rows and dimension mismatch") {
  auto corpus = random_corpus(6, 16, 6);
  std::fill(corpus->embeddings.row(2).begin(), corpus->embeddings.row(2).end(), 0.0f);
  CHECK_THROWS_AS(build_index(corpus, toy_model_ptr()), ConfigError);
  CHECK_THROWS_AS(build_index(random_corpus(6, 8, 1), toy_model_ptr()), ConfigError);
}

TEST_CASE("steering with no edits searches the reconstruction") {
  const auto corpus = random_corpus(50, 16, 7);
  const auto index = build_index(corpus, toy_model_ptr());
  SteerRequest req;
  req.vector = std::vector<float>(corpus->row(4).begin(), corpus->row(4).end());
  const auto steered = steer_search(*index, req);
  const auto plain = search(*index, index->model->reconstruct(corpus->row(4)), 10);
  REQUIRE(steered.fidelity.has_value());
  CHECK(*steered.fidelity == doctest::Approx(1.0));
  REQUIRE(steered.hits.size() == plain.hits.size());
  for (std::size_t i = 0; i < plain.hits.size(); ++i) CHECK(steered.hits[i].doc_id == plain.hits[i].doc_id);
  CHECK_FALSE(steered.query_features.empty());
}

TEST_CASE("up-weighting a planted feature pulls in documents that express it") {
  const auto& toy = testing::shared_toy_model();
  auto corpus = std::make_shared<EmbeddingCorpus>(toy.planted.normalized);
  const auto index = build_index(corpus, toy_model_ptr());
  int improved = 0, trials = 0;
  for (std::size_t r = 0; r < 30; ++r) {
    const auto q = corpus->row(r);
    const auto code = index->model->encode(q);
    std::uint32_t feature = 0;
    while (code.value_of(feature) > 0.0f || index->columns[feature].size() < 20) ++feature;
    auto mean_activation = [&](const SearchResult& res) {
      double total = 0.0;
      for (const auto& hit : res.hits) total += index->model->encode(corpus->row(hit.row)).value_of(feature);
      return total / static_cast<double>(res.hits.size());
    };
    SteerRequest req;
    req.vector = std::vector<float>(q.begin(), q.end());
    const double before = mean_activation(steer_search(*index, req));
    req.edits[feature] = 4.0;
    const auto after_result = steer_search(*index, req);
    CHECK(*after_result.fidelity < 1.0);
    improved += mean_activation(after_result) > before;
    ++trials;
  }
  CHECK(improved == trials);
}

TEST_CASE("family edits expand to every member and explicit edits win") {
  const auto& toy = testing::shared_toy_model();
  auto corpus = std::make_shared<EmbeddingCorpus>(toy.planted.normalized);
  auto forest = std::make_shared<FamilyForest>();
  Family fam;
  fam.id = 0;
  fam.parent = 1;
  fam.children = {2, 3};
  forest->families.push_back(fam);
  const auto index = build_index(corpus, toy_model_ptr(), nullptr, forest);
  const std::vector<float> q(corpus->row(0).begin(), corpus->row(0).end());

  SteerRequest by_family;
  by_family.vector = q;
  by_family.family_edits[0] = 3.0;
  by_family.edits[3] = 0.5;
  SteerRequest by_feature;
  by_feature.vector = q;
  by_feature.edits = {{1, 3.0}, {2, 3.0}, {3, 0.5}};
  const auto a = steer_search(*index, by_family);
  const auto b = steer_search(*index, by_feature);
  CHECK(*a.fidelity == doctest::Approx(*b.fidelity));
  for (std::size_t i = 0; i < a.hits.size(); ++i) CHECK(a.hits[i].doc_id == b.hits[i].doc_id);

  SteerRequest unknown;
  unknown.vector = q;
  unknown.family_edits[7] = 1.0;
  CHECK_THROWS_AS(steer_search(*index, unknown), NotFound);
  SteerRequest missing;
  CHECK_THROWS_AS(steer_search(*index, missing), ConfigError);
}

TEST_CASE("text hash is 64-bit FNV-1a") {
  CHECK(text_hash("") == "cbf29ce484222325");
  CHECK(text_hash("a") == "af63dc4c8601ec8c");
  CHECK(text_hash("foobar") == "85944171f73967e8");
}

TEST_CASE("embedding cache evicts least recently used and persists") {
  EmbeddingCache cache(2);
  cache.put("a", {1.0f});
  cache.put("b", {2.0f});
  CHECK(cache.get("a").has_value());  // a becomes most recent
  cache.put("c", {3.0f});
  CHECK(cache.size() == 2);
  CHECK_FALSE(cache.get("b").has_value());
  CHECK(cache.get("a") == std::vector<float>{1.0f});

  testing::TempDir dir;
  cache.save(dir / "cache.json");
  EmbeddingCache loaded(2);
  loaded.load(dir / "cache.json");
  CHECK(loaded.get("a") == std::vector<float>{1.0f});
  CHECK(loaded.get("c") == std::vector<float>{3.0f});
  EmbeddingCache missing;
  CHECK_NOTHROW(missing.load(dir / "absent.json"));
}

TEST_CASE("query embedder normalizes, caches and reports outages") {
  MockEmbeddingClient client({{"dark matter", {3.0f, 5.0f}}});
  NormStats stats{{1.0, 1.0}, {2.0, 4.0}};
  QueryEmbedder embedder(&client, stats, 8);
  CHECK(embedder.embed_query("dark matter") == std::vector<float>{1.0f, 1.0f});
  CHECK(embedder.embed_raw("dark matter") == std::vector<float>{3.0f, 5.0f});
  CHECK(client.calls() == 1);
  client.set_offline(true);
  CHECK(embedder.embed_query("dark matter") == std::vector<float>{1.0f, 1.0f});
  CHECK_THROWS_AS(embedder.embed_query("exoplanets"), EmbedUnavailable);
  QueryEmbedder none(nullptr, stats);
  CHECK_THROWS_AS(none.embed_query("dark matter"), EmbedUnavailable);
}

TEST_CASE("HTTP API") {
  const auto& toy = testing::shared_toy_model();
  auto corpus = std::make_shared<EmbeddingCorpus>(toy.planted.normalized);
  auto model = toy_model_ptr();
  auto catalog = std::make_shared<FeatureCatalog>(FeatureCatalog::from_model(*model));
  catalog->features[1].label = "Planted Parent";
  catalog->features[2].label = "Planted Child";
  auto forest = std::make_shared<FamilyForest>();
  Family fam;
  fam.parent = 1;
  fam.children = {2};
  fam.edges = {{1, 2, 0.5}};
  fam.metrics.r_pc = std::numeric_limits<double>::infinity();
  fam.metrics.r_pc_infinite = true;
  forest->families.push_back(fam);
  const auto index = build_index(corpus, model, catalog, forest);

  const auto raw = toy.planted.raw.row(0);
  MockEmbeddingClient mock({{"planted query", std::vector<float>(raw.begin(), raw.end())}});
  auto embedder = std::make_shared<QueryEmbedder>(&mock, *corpus->norm_stats);
  SearchServer server(index, embedder);
  const int port = server.bind_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread thread([&] { server.serve(); });
  server.wait_until_ready();
  httplib::Client http("127.0.0.1", port);

  auto get = [&](const std::string& path) {
    auto res = http.Get(path);
    REQUIRE(res);
    return std::pair{res->status, nlohmann::json::parse(res->body)};
  };
  auto post = [&](const std::string& path, const nlohmann::json& body) {
    auto res = http.Post(path, body.dump(), "application/json");
    REQUIRE(res);
    return std::pair{res->status, nlohmann::json::parse(res->body)};
  };

  auto [hs, health] = get("/health");
  CHECK(hs == 200);
  CHECK(health["documents"] == corpus->size());

  auto [ss, searched] = post("/search", {{"query", "planted query"}, {"top_k", 3}});
  CHECK(ss == 200);
  REQUIRE(searched["results"].size() == 3);
  CHECK(searched["results"][0]["doc_id"] == corpus->docs[0].doc_id);

  auto [vs, by_vector] = post("/search", {{"vector", std::vector<float>(corpus->row(5).begin(), corpus->row(5).end())},
                                          {"top_k", 1}});
  CHECK(vs == 200);
  CHECK(by_vector["results"][0]["doc_id"] == corpus->docs[5].doc_id);

  auto [st, steered] = post("/steer", {{"query", "planted query"}, {"edits", {{"1", 3.0}}}, {"top_k", 5}});
  CHECK(st == 200);
  CHECK(steered["results"].size() == 5);
  CHECK(steered.contains("fidelity"));
  CHECK(steered["fidelity"].get<double>() < 1.0);

  CHECK(post("/steer", {{"query", "planted query"}, {"edits", {{"9999", 1.0}}}}).first == 404);
  CHECK(post("/steer", {{"query", "planted query"}, {"family_edits", {{"5", 1.0}}}}).first == 404);
  CHECK(post("/search", {{"query", "never embedded"}}).first == 503);
  CHECK(post("/search", {{"top_k", 3}}).first == 400);
  auto bad = http.Post("/search", "{not json", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);

  auto [fs, feature] = get("/features/1");
  CHECK(fs == 200);
  CHECK(feature["label"] == "Planted Parent");
  CHECK(feature.contains("top_documents"));
  CHECK(get("/features/abc").first == 404);
  CHECK(get("/features/100000").first == 404);

  auto [ls, listed] = get("/features?q=planted");
  CHECK(ls == 200);
  CHECK(listed["features"].size() == 2);

  auto [fams, families] = get("/families");
  CHECK(fams == 200);
  CHECK(families["families"].size() == 1);
  auto [fd, detail] = get("/families/0");
  CHECK(fd == 200);
  CHECK(detail["members"].size() == 2);
  CHECK(detail["metrics"]["r_pc"].is_null());
  CHECK(detail["metrics"]["r_pc_infinite"] == true);
  CHECK(detail["edges"][0]["weight"] == 0.5);
  CHECK(get("/families/3").first == 404);

  server.stop();
  thread.join();
}
