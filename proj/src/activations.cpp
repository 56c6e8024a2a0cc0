// SPDX-License-Identifier: Apache-2.0
#include "saeforge/activations.hpp"

#include <algorithm>

#include "saeforge/error.hpp"
#include "saeforge/parallel.hpp"

namespace saeforge {

void ActivationMatrix::append_row(const SparseCode& code) {
  features_.insert(features_.end(), code.indices.begin(), code.indices.end());
  values_.insert(values_.end(), code.values.begin(), code.values.end());
  offsets_.push_back(features_.size());
}

std::span<const std::uint32_t> ActivationMatrix::row_features(std::size_t r) const {
  return {features_.data() + offsets_[r], offsets_[r + 1] - offsets_[r]};
}

std::span<const float> ActivationMatrix::row_values(std::size_t r) const {
  return {values_.data() + offsets_[r], offsets_[r + 1] - offsets_[r]};
}

std::vector<std::vector<FeatureHit>> ActivationMatrix::columns() const {
  std::vector<std::vector<FeatureHit>> out(latents_);
  for (std::size_t r = 0; r < rows(); ++r) {
    const auto f = row_features(r);
    const auto v = row_values(r);
    for (std::size_t s = 0; s < f.size(); ++s) {
      out[f[s]].push_back({static_cast<std::uint32_t>(r), v[s]});
    }
  }
  return out;
}

ActivationMatrix ActivationMatrix::restrict_to(std::span<const std::uint32_t> features) const {
  std::vector<std::int64_t> remap(latents_, -1);
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i] >= latents_) throw ConfigError("feature id out of range");
    remap[features[i]] = static_cast<std::int64_t>(i);
  }
  ActivationMatrix out(features.size());
  for (std::size_t r = 0; r < rows(); ++r) {
    SparseCode code;
    const auto f = row_features(r);
    const auto v = row_values(r);
    std::vector<std::pair<std::uint32_t, float>> kept;
    for (std::size_t s = 0; s < f.size(); ++s) {
      if (remap[f[s]] >= 0) kept.emplace_back(static_cast<std::uint32_t>(remap[f[s]]), v[s]);
    }
    std::sort(kept.begin(), kept.end());
    for (auto [id, value] : kept) {
      code.indices.push_back(id);
      code.values.push_back(value);
    }
    out.append_row(code);
  }
  return out;
}

FloatMatrix ActivationMatrix::to_dense() const {
  FloatMatrix dense(rows(), latents_);
  for (std::size_t r = 0; r < rows(); ++r) {
    const auto f = row_features(r);
    const auto v = row_values(r);
    for (std::size_t s = 0; s < f.size(); ++s) dense(r, f[s]) = v[s];
  }
  return dense;
}

ActivationMatrix ActivationMatrix::from_dense(const FloatMatrix& dense) {
  ActivationMatrix out(dense.cols);
  for (std::size_t r = 0; r < dense.rows; ++r) {
    SparseCode code;
    for (std::size_t c = 0; c < dense.cols; ++c) {
      if (dense(r, c) != 0.0f) {
        code.indices.push_back(static_cast<std::uint32_t>(c));
        code.values.push_back(dense(r, c));
      }
    }
    out.append_row(code);
  }
  return out;
}

ActivationMatrix encode_corpus(const SaeModel& model, const EmbeddingCorpus& corpus,
                               std::size_t threads) {
  if (corpus.dim() != model.dim()) throw ConfigError("corpus dimension does not match model");
  const std::size_t count = corpus.size();
  std::vector<SparseCode> codes(count);
  parallel_chunks(count, threads == 0 ? default_thread_count() : threads,
                  [&](std::size_t begin, std::size_t end, std::size_t) {
                    for (std::size_t r = begin; r < end; ++r) codes[r] = model.encode(corpus.row(r));
                  });
  ActivationMatrix out(model.latents());
  for (const auto& code : codes) out.append_row(code);
  return out;
}

}  // namespace saeforge
