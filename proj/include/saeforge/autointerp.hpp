// SPDX-License-Identifier: Apache-2.0
#pragma once

// Interpreter/Predictor labelling protocol: pick examples for a feature, ask
// the Interpreter for a short label, ask the Predictor to score held-out
// abstracts against it, and summarize agreement as Pearson r and F1.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "saeforge/activations.hpp"
#include "saeforge/catalog.hpp"
#include "saeforge/completion.hpp"
#include "saeforge/corpus.hpp"

namespace saeforge {

struct ExampleDoc {
  std::size_t row = 0;
  std::string doc_id;
  std::string text;
  double activation = 0.0;  // 0 for non-activating documents
};

struct InterpretationInput {
  std::uint32_t feature_id = 0;
  std::vector<ExampleDoc> max_activating;   // descending activation
  std::vector<ExampleDoc> zero_activating;
};

struct PredictorItem {
  ExampleDoc doc;
  int ground_truth = -1;  // +1 active, -1 inactive
};

struct ExampleSelection {
  InterpretationInput interpreter;
  std::vector<PredictorItem> predictor;  // positives first, then negatives
};

struct SelectionOptions {
  std::size_t top_activating = 5;
  std::size_t zero_activating = 5;
  std::size_t predictor_positive = 3;
  std::size_t predictor_negative = 3;
};

// `hits` lists the documents on which the feature fires (any order). The top
// activating documents go to the Interpreter; predictor positives are drawn
// from the remaining activating documents and predictor negatives from
// non-activating documents not shown to the Interpreter. Ties in activation
// go to the lower row. Throws TooSparse / TooDense when either pool is short.
ExampleSelection select_examples(std::uint32_t feature, std::span<const FeatureHit> hits,
                                 const EmbeddingCorpus& corpus, std::uint64_t seed,
                                 const SelectionOptions& options = {});

struct FeatureLabel {
  std::uint32_t feature_id = 0;
  std::string label;
  std::string interpreter_transcript;
};

// Throws LabelParseError when neither the first reply nor the retry carries a
// usable FINAL line; ClientError propagates.
FeatureLabel interpret_feature(const InterpretationInput& input, CompletionClient& client,
                               std::string_view subject, std::string_view type = {});

// Confidence in [-1, 1]. Throws PredictionParseError after one failed retry.
double predict_activation(const FeatureLabel& label, std::string_view abstract_text,
                          CompletionClient& client, std::string_view subject,
                          std::optional<std::string> doc_id = std::nullopt);

struct InterpScore {
  std::uint32_t feature_id = 0;
  double pearson = 0.0;
  double f1 = 0.0;
  std::vector<Prediction> predictions;
  bool pearson_degenerate = false;  // fewer than 2 points or zero variance
  bool f1_degenerate = false;       // a class is missing
};

// A prediction counts as "active" when confidence > 0.
InterpScore score_feature(std::span<const Prediction> predictions, std::uint32_t feature_id = 0);

double pearson_correlation(std::span<const double> xs, std::span<const double> ys,
                           bool* degenerate = nullptr);

struct LabelOptions {
  std::string subject = "astrophysics";
  std::string type;  // Interpreter persona, defaults to subject
  std::uint64_t seed = 0;
  std::size_t concurrency = 4;
  SelectionOptions selection;
  // Completed features are appended here as JSON lines; features already in
  // the journal are not relabelled.
  std::optional<std::filesystem::path> journal;
  // Restrict labelling to these feature ids (all when empty).
  std::vector<std::uint32_t> features;
};

// Labels and scores features. Per-feature failures are stored in
// CatalogEntry::error. Entries for features outside the filter keep the
// statistics from `base` untouched.
FeatureCatalog label_catalog(const FeatureCatalog& base, const EmbeddingCorpus& corpus,
                             const ActivationMatrix& activations, CompletionClient& client,
                             const LabelOptions& options);

// Deterministic per-feature seed.
std::uint64_t feature_seed(std::uint64_t seed, std::uint32_t feature);

}  // namespace saeforge
