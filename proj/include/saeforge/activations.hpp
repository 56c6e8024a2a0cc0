// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "saeforge/corpus.hpp"
#include "saeforge/sae.hpp"

namespace saeforge {

struct FeatureHit {
  std::uint32_t row = 0;
  float value = 0.0f;
};

// Sparse codes of a whole corpus, one row per document (CSR layout).
class ActivationMatrix {
 public:
  ActivationMatrix() = default;
  explicit ActivationMatrix(std::size_t latents) : latents_(latents) {}

  void append_row(const SparseCode& code);

  std::size_t rows() const { return offsets_.size() - 1; }
  std::size_t latents() const { return latents_; }
  std::span<const std::uint32_t> row_features(std::size_t r) const;
  std::span<const float> row_values(std::size_t r) const;
  std::size_t nonzeros() const { return features_.size(); }

  // Per-feature hit lists, rows ascending.
  std::vector<std::vector<FeatureHit>> columns() const;
  // Keeps only the listed features (renumbered 0..m-1 in the given order).
  ActivationMatrix restrict_to(std::span<const std::uint32_t> features) const;

  FloatMatrix to_dense() const;
  static ActivationMatrix from_dense(const FloatMatrix& dense);

  bool operator==(const ActivationMatrix&) const = default;

 private:
  std::size_t latents_ = 0;
  std::vector<std::size_t> offsets_{0};
  std::vector<std::uint32_t> features_;
  std::vector<float> values_;
};

ActivationMatrix encode_corpus(const SaeModel& model, const EmbeddingCorpus& corpus,
                               std::size_t threads = 0);

}  // namespace saeforge
