// SPDX-License-Identifier: Apache-2.0
#pragma once

// Cross-model feature matching, activation similarity, co-occurrence graphs
// and encoder/decoder alignment.

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "saeforge/activations.hpp"
#include "saeforge/catalog.hpp"
#include "saeforge/matrix.hpp"
#include "saeforge/sae.hpp"

namespace saeforge {

enum class MatchClass { kRecurrent, kNovel };

struct FeatureMatch {
  std::uint32_t large_id = 0;
  std::uint32_t best_small = 0;
  double cosine = 0.0;
  std::optional<double> activation_similarity;  // normalized, when activations given
  MatchClass match_class = MatchClass::kNovel;
};

struct MatchResult {
  std::vector<FeatureMatch> pairs;  // one per large-model feature, by id
};

void to_json(nlohmann::json& j, const MatchResult& m);

// For every feature j of `large`, the feature i of `small` maximizing the
// cosine between decoder directions (ties to the lower i). Recurrent iff
// cosine >= threshold. When both activation matrices are given (same
// documents), each pair also carries its normalized activation similarity.
MatchResult match_features(const FeatureCatalog& small, const FeatureCatalog& large,
                           double recurrent_threshold = 0.95,
                           const ActivationMatrix* small_acts = nullptr,
                           const ActivationMatrix* large_acts = nullptr);

struct ActivationSimilarity {
  double raw = 0.0;         // sum_k B_ik B_jk
  double normalized = 0.0;  // raw / (||B_i|| ||B_j||), 0 for an empty column
};

// Columns as row-sorted hit lists.
ActivationSimilarity activation_similarity(std::span<const FeatureHit> a,
                                           std::span<const FeatureHit> b);
ActivationSimilarity activation_similarity(const ActivationMatrix& a, const ActivationMatrix& b,
                                           std::uint32_t i, std::uint32_t j);

struct CooccurrenceOptions {
  double epsilon = 1e-6;
  double tau = 0.1;
  std::size_t threads = 0;
};

struct CoActivationGraphs {
  std::size_t latents = 0;
  std::size_t documents = 0;
  double epsilon = 1e-6;
  double tau = 0.1;
  Matrix<double> c_raw;   // C_ij = sum_k A_ki A_kj (binary co-activation counts)
  Matrix<double> d_raw;   // D_ij = sum_k B_ki B_kj (valued activations)
  std::vector<double> f;  // activation counts, equal to diag(C)
  // Thresholded row-normalized co-occurrence C_ij / (f_i + eps), entries
  // below tau dropped; per row, sorted by column.
  std::vector<std::vector<std::pair<std::uint32_t, double>>> c_norm;

  double c_norm_at(std::uint32_t i, std::uint32_t j) const;
  double d_normalized(std::uint32_t i, std::uint32_t j) const;
};

CoActivationGraphs build_cooccurrence(const ActivationMatrix& activations,
                                      const CooccurrenceOptions& options = {});

struct EncoderDecoderSimilarity {
  std::vector<double> cosine;                // cos(W_e row i, decoder column i)
  std::vector<double> max_decoder_cosine;    // max_{j != i} cos(w_i, w_j)
  double mean_cosine = 0.0;
  double rank_correlation = 0.0;             // Spearman between the two series
};

EncoderDecoderSimilarity encoder_decoder_similarity(const SaeModel& model, std::size_t threads = 0);

// Average ranks for ties; 0 for constant input.
double spearman_correlation(std::span<const double> xs, std::span<const double> ys);

}  // namespace saeforge
