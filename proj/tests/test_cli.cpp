// SPDX-License-Identifier: Apache-2.0
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "saeforge/catalog.hpp"
#include "saeforge/checkpoint.hpp"
#include "saeforge/cli.hpp"
#include "saeforge/families.hpp"
#include "support/planted.hpp"
#include "support/temp_dir.hpp"

using namespace saeforge;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

void write_file(const std::filesystem::path& path, const json& value) {
  std::ofstream(path) << value.dump(1);
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  REQUIRE(in);
  return json::parse(in);
}

std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace

TEST_CASE("usage errors exit with 1") {
  CHECK(run({"bogus"}).code == 1);
  CHECK(run({}).code == 1);
  CHECK(run({"train", "--no-such-flag"}).code == 1);
  testing::TempDir dir;
  const auto summary = (dir / "summary.json").string();
  CHECK(run({"train", "--summary-json", summary}).code == 1);
  CHECK(read_json(summary)["status"] == "usage_error");
  CHECK(run({"--help"}).code == 0);
}

TEST_CASE("runtime errors exit with 2 and still write the summary") {
  testing::TempDir dir;
  const auto summary = (dir / "summary.json").string();
  const auto r = run({"train", "--corpus", (dir / "missing.emb").string(), "--out", (dir / "m").string(),
                      "--summary-json", summary});
  CHECK(r.code == 2);
  CHECK_FALSE(r.err.empty());
  const auto s = read_json(summary);
  CHECK(s["status"] == "error");
  CHECK(s["command"] == "train");
}

TEST_CASE("pipeline from ingest to evaluation") {
  testing::TempDir dir;
  const auto planted = testing::make_planted_corpus(16, 32, 3, 1500, 5);
  EmbeddingCorpus raw;
  raw.embeddings = planted.raw;
  raw.docs = planted.normalized.docs;
  save_corpus(raw, dir / "raw.emb", dir / "raw.jsonl");

  REQUIRE(run({"ingest", "--embeddings", (dir / "raw.emb").string(), "--metadata", (dir / "raw.jsonl").string(),
               "--out", (dir / "c").string(), "--val-fraction", "0.1", "--seed", "1"})
              .code == 0);
  const auto train_corpus = (dir / "c.train.emb").string();
  CHECK(std::filesystem::exists(dir / "c.val.emb"));
  CHECK(std::filesystem::exists(dir / "c.train.emb.stats.json"));

  write_file(dir / "config.json",
             {{"seed", 3},
              {"subject", "astrophysics"},
              {"sae", {{"k", 4}, {"n", 32}, {"epochs", 3}, {"batch_size", 128}, {"learning_rate", 0.002}}},
              {"label", {{"concurrency", 2}}},
              {"eval", {{"queries", {"q0", "q1", "q2"}}, {"trials", 6}, {"min_f1", -1.0}, {"min_pearson", -1.0}}}});
  const auto config = (dir / "config.json").string();
  const auto ckpt = (dir / "model.saek").string();

  {
    const auto summary = (dir / "train.json").string();
    const auto r = run({"train", "--config", config, "--corpus", train_corpus, "--out", ckpt, "--summary-json", summary});
    REQUIRE(r.code == 0);
    CHECK(std::filesystem::exists(ckpt + ".log.json"));
    CHECK(read_json(summary)["result"]["n"] == 32);
    const auto model = load_checkpoint(ckpt);
    CHECK(model.latents() == 32);
    CHECK(model.config().k == 4);

    // Same seed, same bytes.
    const auto again = (dir / "again.saek").string();
    REQUIRE(run({"train", "--config", config, "--corpus", train_corpus, "--out", again}).code == 0);
    CHECK(read_bytes(again) == read_bytes(ckpt));
  }

  {
    const auto r = run({"metrics", "--corpus", (dir / "c.val.emb").string(), "--checkpoint", ckpt,
                        "--out", (dir / "metrics.csv").string()});
    REQUIRE(r.code == 0);
    CHECK(r.out.rfind("k,n,", 0) == 0);
    CHECK(std::filesystem::exists(dir / "metrics.csv"));
  }

  write_file(dir / "mock.json",
             {{"interpreter", {{"*", "Reasoning.\nFINAL: Planted Concept"}}},
              {"predictor", {{"*", {{"*", "PREDICTION: 0.5"}}}}},
              {"superfeature", {{"*", "FINAL: Planted Family"}}},
              {"judge", {{"*", "ANSWER: A"}}},
              {"rewriter", {{"*", "QUERY: q1"}}}});
  const auto mock = (dir / "mock.json").string();
  const auto catalog = (dir / "catalog.json").string();
  {
    const auto summary = (dir / "label.json").string();
    const auto r = run({"label", "--config", config, "--corpus", train_corpus, "--checkpoint", ckpt,
                        "--out", catalog, "--mock-completions", mock, "--summary-json", summary});
    REQUIRE(r.code == 0);
    const auto c = FeatureCatalog::load(catalog);
    CHECK(c.size() == 32);
    std::size_t labelled = 0;
    for (const auto& e : c.features) labelled += e.label == std::optional<std::string>("Planted Concept");
    CHECK(labelled == read_json(summary)["result"]["labelled"].get<std::size_t>());
    CHECK(labelled > 0);
  }

  {
    const auto forest = (dir / "forest.json").string();
    write_file(dir / "families.json", {{"families", {{"tau", 0.05}, {"filter", false}}}});
    const auto r = run({"families", "--config", (dir / "families.json").string(), "--corpus", train_corpus,
                        "--checkpoint", ckpt, "--catalog", catalog, "--out", forest});
    REQUIRE(r.code == 0);
    CHECK_NOTHROW(FamilyForest::load(forest));
  }

  {
    const auto matches = (dir / "matches.json").string();
    REQUIRE(run({"match", "--small", catalog, "--large", catalog, "--out", matches}).code == 0);
    const auto m = read_json(matches);
    REQUIRE(m.size() == 32);
    for (const auto& p : m) {
      CHECK(p["class"] == "recurrent");
      CHECK(p["best_small"] == p["large_id"]);
    }
  }

  {
    json table;
    for (int r = 0; r < 3; ++r) {
      const auto row = planted.raw.row(static_cast<std::size_t>(r));
      table["q" + std::to_string(r)] = std::vector<float>(row.begin(), row.end());
    }
    write_file(dir / "embeddings.json", table);
    const auto summary = (dir / "eval.json").string();
    const auto r = run({"steer-eval", "--config", config, "--corpus", train_corpus, "--checkpoint", ckpt,
                        "--catalog", catalog, "--mock-completions", mock, "--mock-embeddings",
                        (dir / "embeddings.json").string(), "--out", (dir / "eval").string(),
                        "--summary-json", summary});
    REQUIRE(r.code == 0);
    CHECK(std::filesystem::exists(dir / "eval.jsonl"));
    CHECK(std::filesystem::exists(dir / "eval.csv"));
    CHECK(read_json(summary)["status"] == "ok");
  }
}
