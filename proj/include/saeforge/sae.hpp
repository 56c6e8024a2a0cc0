// SPDX-License-Identifier: Apache-2.0
#pragma once

// Top-k sparse autoencoder over dense embeddings.
//
//   pre   = W_e x + b_e
//   h     = TopK(ReLU(pre))            (k largest, ties to the lower index)
//   x_hat = W_d h + b_d
//
// Decoder columns are stored contiguously (row i of `decoder` is column w_i of
// W_d) so decoding touches |support| * d values. The model is templated on the
// scalar type: float for training and serving, double for gradient checks.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"
#include "saeforge/matrix.hpp"

namespace saeforge {

struct SaeConfig {
  std::size_t k = 16;
  std::size_t n = 3072;
  std::size_t k_aux = 0;  // 0 selects 2k
  double alpha = 1.0 / 32.0;
  // Coefficient of a generic sparsity penalty. The top-k constraint replaces
  // it, so it must stay 0.
  double lambda_sparse = 0.0;
  double learning_rate = 1e-4;
  std::size_t batch_size = 1024;
  std::size_t epochs = 1;
  double grad_clip = 1.0;
  std::uint64_t seed = 0;
  std::size_t geometric_median_sample = 2048;

  std::size_t effective_k_aux() const { return k_aux == 0 ? 2 * k : k_aux; }
  // Throws ConfigError.
  void validate() const;

  bool operator==(const SaeConfig&) const = default;
};

void to_json(nlohmann::json& j, const SaeConfig& config);
void from_json(const nlohmann::json& j, SaeConfig& config);

template <typename Real>
struct SparseActivation {
  std::vector<std::uint32_t> indices;  // strictly increasing
  std::vector<Real> values;            // positive, aligned with indices

  std::size_t size() const { return indices.size(); }
  bool empty() const { return indices.empty(); }
  // Value for a feature id, 0 when absent.
  Real value_of(std::uint32_t feature) const;
  std::vector<Real> dense(std::size_t latents) const;
};

// Keeps the k largest strictly positive entries of `scores` (ties to the lower
// index), optionally restricted to features where `allowed` is true.
template <typename Real>
SparseActivation<Real> select_topk(std::span<const Real> scores, std::size_t k,
                                   const std::vector<bool>* allowed = nullptr);

template <typename Real>
class BasicSaeModel {
 public:
  BasicSaeModel() = default;
  BasicSaeModel(SaeConfig config, std::size_t dim);

  const SaeConfig& config() const { return config_; }
  std::size_t dim() const { return decoder_bias.size(); }
  std::size_t latents() const { return encoder_bias.size(); }

  std::span<const Real> encoder_row(std::size_t i) const { return encoder.row(i); }
  std::span<const Real> decoder_column(std::size_t i) const { return decoder.row(i); }

  // W_e x + b_e into `out` (length n).
  void preactivations(std::span<const Real> x, std::span<Real> out) const;
  SparseActivation<Real> encode(std::span<const Real> x) const;
  // b_d + sum_i h_i w_i; cost proportional to |support| * d.
  void decode_into(const SparseActivation<Real>& h, std::span<Real> out) const;
  std::vector<Real> decode(const SparseActivation<Real>& h) const;
  std::vector<Real> reconstruct(std::span<const Real> x) const;

  // Rescales every decoder column to unit Euclidean norm.
  void normalize_decoder();
  // Largest | ||w_i|| - 1 | over columns.
  double max_decoder_norm_error() const;
  bool all_finite() const;

  template <typename Other>
  BasicSaeModel<Other> cast() const {
    BasicSaeModel<Other> out(config_, dim());
    auto copy = [](const auto& src, auto& dst) {
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<Other>(src[i]);
    };
    copy(encoder.values, out.encoder.values);
    copy(encoder_bias, out.encoder_bias);
    copy(decoder.values, out.decoder.values);
    copy(decoder_bias, out.decoder_bias);
    return out;
  }

  bool operator==(const BasicSaeModel&) const = default;

  Matrix<Real> encoder;            // n x d, row i is encoder direction i
  std::vector<Real> encoder_bias;  // n
  Matrix<Real> decoder;            // n x d, row i is decoder column w_i
  std::vector<Real> decoder_bias;  // d

 private:
  SaeConfig config_;
};

using SaeModel = BasicSaeModel<float>;
using SparseCode = SparseActivation<float>;

template <typename Real>
SparseActivation<Real> encode_topk(const BasicSaeModel<Real>& model, std::span<const Real> x) {
  return model.encode(x);
}

template <typename Real>
std::vector<Real> decode(const BasicSaeModel<Real>& model, const SparseActivation<Real>& h) {
  return model.decode(h);
}

// Builds a model from a normalized sample: b_d is the geometric median of a
// random subset, decoder columns are random unit directions, encoder rows are
// parallel to them and scaled so that mean ||x_hat - b_d|| matches mean
// ||x - b_d|| on the subset, b_e = 0.
template <typename Real>
BasicSaeModel<Real> init_model(const SaeConfig& config, const FloatMatrix& sample);

// ---- losses -----------------------------------------------------------------

struct LossScales {
  double main_normalizer = 1.0;  // main = mean ||e||^2 / main_normalizer
  double aux_normalizer = 1.0;   // aux  = mean ||e - e_hat||^2 / aux_normalizer
  // Replace aux_normalizer by the batch's mean ||e - mean(e)||^2, held
  // constant for differentiation.
  bool aux_per_batch = false;
};

struct LossBreakdown {
  double main = 0.0;
  double aux = 0.0;
  double total = 0.0;
};

template <typename Real>
struct SaeGradients {
  Matrix<Real> encoder;
  std::vector<Real> encoder_bias;
  Matrix<Real> decoder;
  std::vector<Real> decoder_bias;

  explicit SaeGradients(const BasicSaeModel<Real>& like);
  void zero();
  double squared_norm() const;
  void scale(Real factor);
};

// Per-latent firing flags for one batch under the main top-k.
struct BatchActivity {
  std::vector<bool> fired;
  std::size_t active_total = 0;
};

// Main reconstruction loss plus alpha times the AuxK loss, which reconstructs
// the residual e = x - x_hat from the top k_aux dead latents. With no dead
// latents aux is 0. Without `scales`, main uses the per-dimension 1/d factor
// and aux is unnormalized.
template <typename Real>
LossBreakdown compute_losses(const BasicSaeModel<Real>& model, const Matrix<Real>& batch,
                             const std::vector<bool>& dead,
                             std::optional<LossScales> scales = std::nullopt);

// Same losses, and when `grads` is non-null accumulates their exact gradient
// (summed, not overwritten). The top-k supports are treated as fixed, which is
// exact away from ties and ReLU kinks.
template <typename Real>
LossBreakdown loss_and_gradients(const BasicSaeModel<Real>& model, const Matrix<Real>& batch,
                                 const std::vector<bool>& dead, const LossScales& scales,
                                 SaeGradients<Real>* grads, BatchActivity* activity = nullptr);

// Copies float rows into the model's scalar type.
template <typename Real>
Matrix<Real> to_real_matrix(const FloatMatrix& rows);

}  // namespace saeforge
