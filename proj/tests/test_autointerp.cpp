// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <fstream>
#include <map>
#include <set>

#include "doctest.h"
#include "saeforge/autointerp.hpp"
#include "saeforge/error.hpp"
#include "saeforge/prompts.hpp"
#include "support/temp_dir.hpp"

using namespace saeforge;

namespace {

EmbeddingCorpus text_corpus(std::size_t rows) {
  EmbeddingCorpus corpus;
  corpus.embeddings = FloatMatrix(rows, 1, 0.0f);
  corpus.docs.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    corpus.docs[r].doc_id = "d" + std::to_string(r);
    corpus.docs[r].abstract_text = "abstract " + std::to_string(r);
  }
  return corpus;
}

std::vector<FeatureHit> descending_hits(std::size_t count) {
  std::vector<FeatureHit> hits;
  for (std::size_t r = 0; r < count; ++r) {
    hits.push_back({static_cast<std::uint32_t>(r), static_cast<float>(count - r)});
  }
  return hits;
}

// Scripted client that answers from the ground truth of each doc id.
// Ground truth is keyed by feature id.
using Truth = std::map<std::uint32_t, std::set<std::string>>;

FunctionCompletionClient oracle_client(Truth active, bool inverted, std::atomic<int>* calls = nullptr) {
  return FunctionCompletionClient([active = std::move(active), inverted, calls](const CompletionRequest& r) {
    if (calls) ++*calls;
    if (r.role == Role::kInterpreter) return std::string("Reasoning.\nFINAL: Planted Topic");
    const auto it = active.find(*r.feature_id);
    const bool on = it != active.end() && it->second.count(*r.doc_id) > 0;
    return std::string(on != inverted ? "PREDICTION: 0.9" : "PREDICTION: -0.8");
  });
}

}  // namespace

TEST_CASE("example selection partitions documents as required") {
  const auto corpus = text_corpus(20);
  const auto hits = descending_hits(8);
  const auto sel = select_examples(4, hits, corpus, 123);
  REQUIRE(sel.interpreter.max_activating.size() == 5);
  REQUIRE(sel.interpreter.zero_activating.size() == 5);
  REQUIRE(sel.predictor.size() == 6);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(sel.interpreter.max_activating[i].row == i);
    CHECK(sel.interpreter.max_activating[i].activation == doctest::Approx(8.0 - i));
  }
  std::set<std::size_t> shown;
  for (const auto& d : sel.interpreter.max_activating) shown.insert(d.row);
  for (const auto& d : sel.interpreter.zero_activating) {
    CHECK(d.row >= 8);
    shown.insert(d.row);
  }
  std::set<std::size_t> positives;
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(sel.predictor[i].ground_truth == 1);
    positives.insert(sel.predictor[i].doc.row);
  }
  CHECK(positives == std::set<std::size_t>{5, 6, 7});
  for (std::size_t i = 3; i < 6; ++i) {
    CHECK(sel.predictor[i].ground_truth == -1);
    CHECK(sel.predictor[i].doc.row >= 8);
    CHECK(shown.count(sel.predictor[i].doc.row) == 0);
  }
}

TEST_CASE("example selection is deterministic per seed") {
  const auto corpus = text_corpus(40);
  const auto hits = descending_hits(15);
  auto rows = [&](std::uint64_t seed) {
    std::vector<std::size_t> out;
    const auto sel = select_examples(0, hits, corpus, seed);
    for (const auto& d : sel.interpreter.zero_activating) out.push_back(d.row);
    for (const auto& p : sel.predictor) out.push_back(p.doc.row);
    return out;
  };
  CHECK(rows(7) == rows(7));
  CHECK(rows(7) != rows(8));
}

TEST_CASE("too sparse and too dense features") {
  const auto corpus = text_corpus(20);
  CHECK_THROWS_AS(select_examples(0, descending_hits(4), corpus, 1), TooSparse);
  CHECK_THROWS_AS(select_examples(0, descending_hits(7), corpus, 1), TooSparse);
  CHECK_THROWS_AS(select_examples(0, descending_hits(14), corpus, 1), TooDense);
  CHECK_NOTHROW(select_examples(0, descending_hits(12), corpus, 1));
}

TEST_CASE("interpreter label parsing with retry") {
  InterpretationInput input;
  input.feature_id = 2;
  input.max_activating.push_back({0, "d0", "text", 1.0});
  std::vector<std::string> prompts;
  FunctionCompletionClient echo([&](const CompletionRequest& r) {
    prompts.push_back(r.prompt);
    return prompts.size() == 1 ? std::string("I think it is about stars.") : std::string("FINAL: Stellar Physics");
  });
  const auto label = interpret_feature(input, echo, "astrophysics");
  CHECK(label.label == "Stellar Physics");
  REQUIRE(prompts.size() == 2);
  CHECK(prompts[1] == prompts[0] + std::string(kInterpreterRetryInstruction));

  FunctionCompletionClient never([](const CompletionRequest&) { return std::string("no label"); });
  CHECK_THROWS_AS(interpret_feature(input, never, "astrophysics"), LabelParseError);

  FunctionCompletionClient down([](const CompletionRequest&) -> std::string { throw ClientError("offline"); });
  CHECK_THROWS_AS(interpret_feature(input, down, "astrophysics"), ClientError);
}

TEST_CASE("predictions are clamped and parse failures raise") {
  FeatureLabel label{1, "Stars", ""};
  FunctionCompletionClient high([](const CompletionRequest&) { return std::string("PREDICTION: 3.5"); });
  CHECK(predict_activation(label, "abs", high, "astrophysics") == 1.0);
  FunctionCompletionClient low([](const CompletionRequest&) { return std::string("PREDICTION: -2"); });
  CHECK(predict_activation(label, "abs", low, "astrophysics") == -1.0);
  int calls = 0;
  FunctionCompletionClient bad([&](const CompletionRequest&) {
    ++calls;
    return std::string("unsure");
  });
  CHECK_THROWS_AS(predict_activation(label, "abs", bad, "astrophysics"), PredictionParseError);
  CHECK(calls == 2);
}

TEST_CASE("scoring against hand-computed values") {
  const std::vector<Prediction> mixed = {
      {"a", 0.9, 1}, {"b", 0.6, 1}, {"c", 0.2, -1}, {"d", -0.5, -1}};
  const auto s = score_feature(mixed);
  CHECK(s.f1 == doctest::Approx(0.8));  // TP 2, FP 1, FN 0
  CHECK(s.pearson == doctest::Approx(0.858116330321033).epsilon(1e-12));
  CHECK_FALSE(s.pearson_degenerate);
  CHECK_FALSE(s.f1_degenerate);

  const std::vector<Prediction> perfect = {{"a", 1, 1}, {"b", 1, 1}, {"c", -1, -1}, {"d", -1, -1}};
  CHECK(score_feature(perfect).f1 == 1.0);
  CHECK(score_feature(perfect).pearson == doctest::Approx(1.0));

  // Confidence exactly 0 counts as inactive.
  const std::vector<Prediction> zero = {{"a", 0.0, 1}, {"b", -1, -1}};
  CHECK(score_feature(zero).f1 == 0.0);

  const std::vector<Prediction> flat = {{"a", 0.5, 1}, {"b", 0.5, -1}};
  CHECK(score_feature(flat).pearson_degenerate);
  const std::vector<Prediction> one_class = {{"a", 0.5, 1}, {"b", 0.1, 1}};
  CHECK(score_feature(one_class).f1_degenerate);
  CHECK(score_feature(one_class).pearson_degenerate);
}

TEST_CASE("pearson is invariant to positive affine maps") {
  const std::vector<double> x = {0.3, -0.2, 0.9, 0.1, -0.7};
  const std::vector<double> y = {1, -1, 1, 1, -1};
  std::vector<double> z;
  for (double v : x) z.push_back(4.0 * v - 3.0);
  CHECK(pearson_correlation(z, y) == doctest::Approx(pearson_correlation(x, y)).epsilon(1e-12));
  std::vector<double> neg;
  for (double v : x) neg.push_back(-v);
  CHECK(pearson_correlation(neg, y) == doctest::Approx(-pearson_correlation(x, y)).epsilon(1e-12));
}

namespace {

struct CatalogFixture {
  EmbeddingCorpus corpus = text_corpus(30);
  ActivationMatrix activations;
  FeatureCatalog base;
  Truth truth;

  CatalogFixture() {
    FloatMatrix dense(30, 3, 0.0f);
    for (std::size_t r = 0; r < 10; ++r) {
      dense(r, 0) = static_cast<float>(10 - r);
      truth[0].insert("d" + std::to_string(r));
    }
    for (std::size_t r = 0; r < 4; ++r) dense(r, 1) = 1.0f;  // too sparse
    for (std::size_t r = 10; r < 22; ++r) {
      dense(r, 2) = 1.0f + static_cast<float>(r) * 0.01f;
      truth[2].insert("d" + std::to_string(r));
    }
    activations = ActivationMatrix::from_dense(dense);
    base.dim = 1;
    base.features.resize(3);
    for (std::uint32_t i = 0; i < 3; ++i) {
      base.features[i].id = i;
      base.features[i].direction = {1.0f};
    }
  }
};

}  // namespace

TEST_CASE("label_catalog scores planted and anti scripts") {
  CatalogFixture fx;
  LabelOptions opts;
  opts.seed = 5;
  auto perfect = oracle_client(fx.truth, false);
  const auto good = label_catalog(fx.base, fx.corpus, fx.activations, perfect, opts);
  CHECK(good.features[0].label == "Planted Topic");
  CHECK(*good.features[0].f1 == 1.0);
  CHECK(*good.features[0].pearson == doctest::Approx(1.0));
  CHECK(good.features[1].error.has_value());
  CHECK_FALSE(good.features[1].label.has_value());
  CHECK(*good.features[2].f1 == 1.0);

  auto anti = oracle_client(fx.truth, true);
  const auto bad = label_catalog(fx.base, fx.corpus, fx.activations, anti, opts);
  CHECK(*bad.features[0].f1 == 0.0);
  CHECK(*bad.features[0].pearson == doctest::Approx(-1.0));
}

TEST_CASE("label_catalog is deterministic across concurrency") {
  CatalogFixture fx;
  LabelOptions opts;
  opts.seed = 9;
  opts.concurrency = 1;
  auto c1 = oracle_client(fx.truth, false);
  const auto a = label_catalog(fx.base, fx.corpus, fx.activations, c1, opts);
  opts.concurrency = 3;
  auto c2 = oracle_client(fx.truth, false);
  const auto b = label_catalog(fx.base, fx.corpus, fx.activations, c2, opts);
  CHECK(a == b);
}

TEST_CASE("label_catalog resumes from its journal") {
  CatalogFixture fx;
  testing::TempDir dir;
  LabelOptions opts;
  opts.seed = 3;
  opts.journal = dir.path() / "journal.jsonl";
  std::atomic<int> calls{0};
  auto client = oracle_client(fx.truth, false, &calls);
  const auto first = label_catalog(fx.base, fx.corpus, fx.activations, client, opts);
  CHECK(calls.load() > 0);

  FunctionCompletionClient offline([](const CompletionRequest&) -> std::string { throw ClientError("down"); });
  const auto resumed = label_catalog(fx.base, fx.corpus, fx.activations, offline, opts);
  CHECK(resumed == first);
}

TEST_CASE("client errors abort labelling and are not journaled") {
  CatalogFixture fx;
  testing::TempDir dir;
  LabelOptions opts;
  opts.journal = dir.path() / "journal.jsonl";
  opts.features = {0};
  FunctionCompletionClient offline([](const CompletionRequest&) -> std::string { throw ClientError("down"); });
  CHECK_THROWS_AS(label_catalog(fx.base, fx.corpus, fx.activations, offline, opts), ClientError);
  std::ifstream in(*opts.journal);
  std::string line;
  CHECK_FALSE(static_cast<bool>(std::getline(in, line)));
}

TEST_CASE("feature seeds differ per feature and are stable") {
  CHECK(feature_seed(1, 0) == feature_seed(1, 0));
  CHECK(feature_seed(1, 0) != feature_seed(1, 1));
  CHECK(feature_seed(1, 0) != feature_seed(2, 0));
}
