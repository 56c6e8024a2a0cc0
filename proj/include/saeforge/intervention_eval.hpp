// SPDX-License-Identifier: Apache-2.0
#pragma once

// Intervention precision harness: per trial, down-weight a query feature i,
// up-weight an unrelated feature j, retrieve before/after, and ask a judge
// which concept changed (5-way multiple choice). A query-rewriting baseline
// is evaluated with the same questions.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "saeforge/completion.hpp"
#include "saeforge/embedding_client.hpp"
#include "saeforge/search.hpp"

namespace saeforge {

struct EvalOptions {
  std::size_t trials = 50;
  std::size_t top_k = 10;
  std::uint64_t seed = 0;
  double min_f1 = 0.9;        // strict thresholds for eligible features
  double min_pearson = 0.9;
  double lambda_down = 0.0;
  double lambda_up_max = 5.0;  // lambda_up ~ U[0, lambda_up_max]
  double max_pair_cosine = 0.3;
  std::size_t options = 5;
  std::size_t abstract_chars = 300;
  std::size_t fidelity_bins = 10;
  std::size_t concurrency = 1;
};

struct BaselineOutcome {
  std::string rewritten_query;
  std::vector<std::string> after;  // R' doc ids
  std::optional<char> verdict;
  bool correct = false;
  double fidelity = 0.0;
};

struct EvalRecord {
  std::size_t trial = 0;
  std::string query;
  std::string direction;  // "up" or "down"
  std::uint32_t feature_down = 0;
  std::uint32_t feature_up = 0;
  double lambda_up = 0.0;
  std::vector<std::string> before;  // R doc ids
  std::vector<std::string> after;   // R' doc ids
  std::vector<std::uint32_t> option_features;  // A, B, ... in order
  char answer = 'A';
  std::optional<char> verdict;
  bool correct = false;
  double fidelity = 0.0;
  std::optional<BaselineOutcome> baseline;
};

void to_json(nlohmann::json& j, const EvalRecord& r);

struct FidelityBin {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t sae_count = 0;
  std::size_t sae_correct = 0;
  std::size_t rewrite_count = 0;
  std::size_t rewrite_correct = 0;
};

struct EvalReport {
  std::vector<EvalRecord> records;
  std::vector<std::pair<std::size_t, std::string>> skipped;  // trial, reason
  std::vector<FidelityBin> bins;
  double sae_accuracy = 0.0;
  std::optional<double> rewrite_accuracy;

  void write_jsonl(const std::filesystem::path& path) const;
  // fidelity_bin,sae_accuracy,rewrite_accuracy,sae_count,rewrite_count
  void write_csv(const std::filesystem::path& path) const;
  nlohmann::json summary() const;
};

// `rewriter` may be null to skip the baseline. Judge or rewriter transport
// failures skip the trial. The catalog attached to the index supplies
// labels and the eligibility filter. Text queries are embedded through
// `embedder`.
EvalReport evaluate_interventions(const std::vector<std::string>& queries, const SearchIndex& index,
                                  QueryEmbedder& embedder, CompletionClient& judge,
                                  CompletionClient* rewriter, const EvalOptions& options);

}  // namespace saeforge
