// SPDX-License-Identifier: Apache-2.0
#include "saeforge/sae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "saeforge/error.hpp"
#include "saeforge/geometric_median.hpp"
#include "saeforge/simd.hpp"

namespace saeforge {

void SaeConfig::validate() const {
  if (k == 0 || n == 0) throw ConfigError("k and n must be positive");
  if (k > n) throw ConfigError("k must not exceed n");
  if (effective_k_aux() > n) throw ConfigError("k_aux must not exceed n");
  if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
  if (lambda_sparse != 0.0) {
    throw ConfigError("lambda_sparse must be 0 under the top-k constraint");
  }
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(grad_clip > 0.0)) throw ConfigError("grad_clip must be positive");
}

void to_json(nlohmann::json& j, const SaeConfig& c) {
  j = nlohmann::json{{"k", c.k},
                     {"n", c.n},
                     {"k_aux", c.effective_k_aux()},
                     {"alpha", c.alpha},
                     {"lambda_sparse", c.lambda_sparse},
                     {"learning_rate", c.learning_rate},
                     {"batch_size", c.batch_size},
                     {"epochs", c.epochs},
                     {"grad_clip", c.grad_clip},
                     {"seed", c.seed},
                     {"geometric_median_sample", c.geometric_median_sample}};
}

void from_json(const nlohmann::json& j, SaeConfig& c) {
  SaeConfig defaults;
  c.k = j.value("k", defaults.k);
  c.n = j.value("n", defaults.n);
  c.k_aux = j.value("k_aux", std::size_t{0});
  c.alpha = j.value("alpha", defaults.alpha);
  c.lambda_sparse = j.value("lambda_sparse", defaults.lambda_sparse);
  c.learning_rate = j.value("learning_rate", defaults.learning_rate);
  c.batch_size = j.value("batch_size", defaults.batch_size);
  c.epochs = j.value("epochs", defaults.epochs);
  c.grad_clip = j.value("grad_clip", defaults.grad_clip);
  c.seed = j.value("seed", defaults.seed);
  c.geometric_median_sample = j.value("geometric_median_sample", defaults.geometric_median_sample);
}

// ---- SparseActivation ---------------------------------------------------------

template <typename Real>
Real SparseActivation<Real>::value_of(std::uint32_t feature) const {
  auto it = std::lower_bound(indices.begin(), indices.end(), feature);
  if (it == indices.end() || *it != feature) return Real(0);
  return values[static_cast<std::size_t>(it - indices.begin())];
}

template <typename Real>
std::vector<Real> SparseActivation<Real>::dense(std::size_t latents) const {
  std::vector<Real> out(latents, Real(0));
  for (std::size_t s = 0; s < indices.size(); ++s) out[indices[s]] = values[s];
  return out;
}

template <typename Real>
SparseActivation<Real> select_topk(std::span<const Real> scores, std::size_t k,
                                   const std::vector<bool>* allowed) {
  std::vector<std::uint32_t> candidates;
  candidates.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] > Real(0) && (!allowed || (*allowed)[i])) {
      candidates.push_back(static_cast<std::uint32_t>(i));
    }
  }
  auto better = [&](std::uint32_t a, std::uint32_t b) {
    return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
  };
  if (candidates.size() > k) {
    std::nth_element(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k),
                     candidates.end(), better);
    candidates.resize(k);
  }
  std::sort(candidates.begin(), candidates.end());
  SparseActivation<Real> out;
  out.indices = std::move(candidates);
  out.values.reserve(out.indices.size());
  for (auto i : out.indices) out.values.push_back(scores[i]);
  return out;
}

// ---- BasicSaeModel ------------------------------------------------------------

template <typename Real>
BasicSaeModel<Real>::BasicSaeModel(SaeConfig config, std::size_t dim)
    : encoder(config.n, dim),
      encoder_bias(config.n, Real(0)),
      decoder(config.n, dim),
      decoder_bias(dim, Real(0)),
      config_(config) {
  config_.k_aux = config_.effective_k_aux();
}

template <typename Real>
void BasicSaeModel<Real>::preactivations(std::span<const Real> x, std::span<Real> out) const {
  simd::matvec<Real>(encoder.values, x, encoder_bias, out);
}

template <typename Real>
SparseActivation<Real> BasicSaeModel<Real>::encode(std::span<const Real> x) const {
  std::vector<Real> pre(latents());
  preactivations(x, pre);
  return select_topk<Real>(pre, config_.k);
}

template <typename Real>
void BasicSaeModel<Real>::decode_into(const SparseActivation<Real>& h, std::span<Real> out) const {
  std::copy(decoder_bias.begin(), decoder_bias.end(), out.begin());
  for (std::size_t s = 0; s < h.indices.size(); ++s) {
    simd::axpy<Real>(h.values[s], decoder.row(h.indices[s]), out);
  }
}

template <typename Real>
std::vector<Real> BasicSaeModel<Real>::decode(const SparseActivation<Real>& h) const {
  std::vector<Real> out(dim());
  decode_into(h, out);
  return out;
}

template <typename Real>
std::vector<Real> BasicSaeModel<Real>::reconstruct(std::span<const Real> x) const {
  return decode(encode(x));
}

template <typename Real>
void BasicSaeModel<Real>::normalize_decoder() {
  for (std::size_t i = 0; i < latents(); ++i) {
    auto column = decoder.row(i);
    const double norm = std::sqrt(static_cast<double>(simd::squared_norm<Real>(column)));
    if (norm > 0.0) {
      for (auto& v : column) v = static_cast<Real>(v / norm);
    }
  }
}

template <typename Real>
double BasicSaeModel<Real>::max_decoder_norm_error() const {
  double worst = 0.0;
  for (std::size_t i = 0; i < latents(); ++i) {
    double sq = 0.0;
    for (Real v : decoder.row(i)) sq += static_cast<double>(v) * v;
    worst = std::max(worst, std::abs(std::sqrt(sq) - 1.0));
  }
  return worst;
}

template <typename Real>
bool BasicSaeModel<Real>::all_finite() const {
  auto finite = [](const std::vector<Real>& values) {
    return std::all_of(values.begin(), values.end(), [](Real v) { return std::isfinite(v); });
  };
  return finite(encoder.values) && finite(encoder_bias) && finite(decoder.values) &&
         finite(decoder_bias);
}

template <typename Real>
Matrix<Real> to_real_matrix(const FloatMatrix& rows) {
  Matrix<Real> out(rows.rows, rows.cols);
  for (std::size_t i = 0; i < rows.values.size(); ++i) out.values[i] = static_cast<Real>(rows.values[i]);
  return out;
}

// ---- init -------------------------------------------------------------------

template <typename Real>
BasicSaeModel<Real> init_model(const SaeConfig& config, const FloatMatrix& sample) {
  config.validate();
  if (sample.rows == 0) throw ConfigError("init_model needs a non-empty sample");
  const std::size_t d = sample.cols;
  BasicSaeModel<Real> model(config, d);
  std::mt19937_64 rng(config.seed);

  std::normal_distribution<double> gauss(0.0, 1.0);
  for (auto& v : model.decoder.values) v = static_cast<Real>(gauss(rng));
  model.normalize_decoder();

  const std::size_t subset_size = std::min(sample.rows, std::max<std::size_t>(config.geometric_median_sample, 1));
  std::vector<std::size_t> order(sample.rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (subset_size < sample.rows) {
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(subset_size);
    std::sort(order.begin(), order.end());
  }
  Matrix<double> subset(order.size(), d);
  for (std::size_t r = 0; r < order.size(); ++r) {
    const auto src = sample.row(order[r]);
    std::copy(src.begin(), src.end(), subset.row(r).begin());
  }
  const auto median = geometric_median(subset, 1e-7, 500);
  for (std::size_t c = 0; c < d; ++c) model.decoder_bias[c] = static_cast<Real>(median.point[c]);

  model.encoder.values = model.decoder.values;

  // Match reconstruction magnitude to input magnitude around b_d. With b_e = 0
  // the code scales linearly with the encoder, so one ratio suffices.
  double input_norm = 0.0, output_norm = 0.0;
  std::vector<Real> x(d), centered(d);
  for (std::size_t r = 0; r < subset.rows; ++r) {
    for (std::size_t c = 0; c < d; ++c) x[c] = static_cast<Real>(subset(r, c));
    const auto h = model.encode(x);
    std::fill(centered.begin(), centered.end(), Real(0));
    for (std::size_t s = 0; s < h.size(); ++s) {
      simd::axpy<Real>(h.values[s], model.decoder.row(h.indices[s]), centered);
    }
    output_norm += std::sqrt(static_cast<double>(simd::squared_norm<Real>(centered)));
    double sq = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double diff = subset(r, c) - median.point[c];
      sq += diff * diff;
    }
    input_norm += std::sqrt(sq);
  }
  const double scale = (output_norm > 0.0 && input_norm > 0.0) ? input_norm / output_norm : 1.0;
  for (auto& v : model.encoder.values) v = static_cast<Real>(v * scale);
  return model;
}

// ---- losses -----------------------------------------------------------------

template <typename Real>
SaeGradients<Real>::SaeGradients(const BasicSaeModel<Real>& like)
    : encoder(like.latents(), like.dim()),
      encoder_bias(like.latents(), Real(0)),
      decoder(like.latents(), like.dim()),
      decoder_bias(like.dim(), Real(0)) {}

template <typename Real>
void SaeGradients<Real>::zero() {
  std::fill(encoder.values.begin(), encoder.values.end(), Real(0));
  std::fill(encoder_bias.begin(), encoder_bias.end(), Real(0));
  std::fill(decoder.values.begin(), decoder.values.end(), Real(0));
  std::fill(decoder_bias.begin(), decoder_bias.end(), Real(0));
}

template <typename Real>
double SaeGradients<Real>::squared_norm() const {
  double total = 0.0;
  for (const auto* block : {&encoder.values, &encoder_bias, &decoder.values, &decoder_bias}) {
    for (Real v : *block) total += static_cast<double>(v) * v;
  }
  return total;
}

template <typename Real>
void SaeGradients<Real>::scale(Real factor) {
  for (auto* block : {&encoder.values, &encoder_bias, &decoder.values, &decoder_bias}) {
    for (Real& v : *block) v *= factor;
  }
}

template <typename Real>
LossBreakdown loss_and_gradients(const BasicSaeModel<Real>& model, const Matrix<Real>& batch,
                                 const std::vector<bool>& dead, const LossScales& scales,
                                 SaeGradients<Real>* grads, BatchActivity* activity) {
  const std::size_t batch_size = batch.rows;
  const std::size_t d = model.dim();
  const std::size_t n = model.latents();
  if (batch_size == 0) throw ConfigError("loss needs a non-empty batch");
  if (batch.cols != d) throw ConfigError("batch dimension does not match model");
  if (dead.size() != n) throw ConfigError("dead mask length does not match model");

  const bool any_dead = std::any_of(dead.begin(), dead.end(), [](bool b) { return b; });
  const std::size_t k_aux = model.config().effective_k_aux();

  std::vector<SparseActivation<Real>> codes(batch_size);
  std::vector<SparseActivation<Real>> aux_codes(any_dead ? batch_size : 0);
  Matrix<Real> residual(batch_size, d);      // e = x - x_hat
  Matrix<Real> aux_residual(any_dead ? batch_size : 0, d);  // e - e_hat
  std::vector<Real> pre(n), x_hat(d);

  if (activity) {
    activity->fired.assign(n, false);
    activity->active_total = 0;
  }

  double main_sum = 0.0;
  for (std::size_t b = 0; b < batch_size; ++b) {
    const auto x = batch.row(b);
    model.preactivations(x, pre);
    codes[b] = select_topk<Real>(pre, model.config().k);
    model.decode_into(codes[b], x_hat);
    auto e = residual.row(b);
    for (std::size_t c = 0; c < d; ++c) e[c] = x[c] - x_hat[c];
    main_sum += static_cast<double>(simd::squared_norm<Real>(e));
    if (activity) {
      for (auto i : codes[b].indices) activity->fired[i] = true;
      activity->active_total += codes[b].size();
    }
    if (any_dead) {
      aux_codes[b] = select_topk<Real>(pre, k_aux, &dead);
      auto r = aux_residual.row(b);
      std::copy(e.begin(), e.end(), r.begin());
      for (std::size_t s = 0; s < aux_codes[b].size(); ++s) {
        simd::axpy<Real>(-aux_codes[b].values[s], model.decoder.row(aux_codes[b].indices[s]), r);
      }
    }
  }

  double aux_normalizer = scales.aux_normalizer;
  if (any_dead && scales.aux_per_batch) {
    std::vector<double> mean_e(d, 0.0);
    for (std::size_t b = 0; b < batch_size; ++b) {
      const auto e = residual.row(b);
      for (std::size_t c = 0; c < d; ++c) mean_e[c] += e[c];
    }
    for (auto& m : mean_e) m /= static_cast<double>(batch_size);
    double spread = 0.0;
    for (std::size_t b = 0; b < batch_size; ++b) {
      const auto e = residual.row(b);
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = e[c] - mean_e[c];
        spread += diff * diff;
      }
    }
    spread /= static_cast<double>(batch_size);
    aux_normalizer = spread > 0.0 ? spread : 1.0;
  }

  const double inv_batch = 1.0 / static_cast<double>(batch_size);
  LossBreakdown out;
  out.main = main_sum * inv_batch / scales.main_normalizer;
  if (any_dead) {
    double aux_sum = 0.0;
    for (std::size_t b = 0; b < batch_size; ++b) {
      aux_sum += static_cast<double>(simd::squared_norm<Real>(aux_residual.row(b)));
    }
    out.aux = aux_sum * inv_batch / aux_normalizer;
  }
  const double alpha = model.config().alpha;
  out.total = out.main + alpha * out.aux;
  if (!grads) return out;

  // d total / d x_hat = -main_scale * e - aux_scale * r, d total / d e_hat = -aux_scale * r
  const auto main_scale = static_cast<Real>(2.0 * inv_batch / scales.main_normalizer);
  const auto aux_scale =
      any_dead ? static_cast<Real>(2.0 * alpha * inv_batch / aux_normalizer) : Real(0);
  std::vector<Real> grad_xhat(d), grad_ehat(d);
  for (std::size_t b = 0; b < batch_size; ++b) {
    const auto x = batch.row(b);
    const auto e = residual.row(b);
    for (std::size_t c = 0; c < d; ++c) {
      grad_xhat[c] = -main_scale * e[c];
      grad_ehat[c] = Real(0);
    }
    if (any_dead) {
      const auto r = aux_residual.row(b);
      for (std::size_t c = 0; c < d; ++c) {
        grad_xhat[c] -= aux_scale * r[c];
        grad_ehat[c] = -aux_scale * r[c];
      }
    }
    simd::axpy<Real>(Real(1), grad_xhat, grads->decoder_bias);

    auto backprop = [&](const SparseActivation<Real>& code, std::span<const Real> upstream) {
      for (std::size_t s = 0; s < code.size(); ++s) {
        const auto i = code.indices[s];
        const Real grad_code = simd::dot<Real>(model.decoder.row(i), upstream);
        simd::axpy<Real>(code.values[s], upstream, grads->decoder.row(i));
        // The code equals the pre-activation on its support.
        simd::axpy<Real>(grad_code, x, grads->encoder.row(i));
        grads->encoder_bias[i] += grad_code;
      }
    };
    backprop(codes[b], grad_xhat);
    if (any_dead) backprop(aux_codes[b], grad_ehat);
  }
  return out;
}

template <typename Real>
LossBreakdown compute_losses(const BasicSaeModel<Real>& model, const Matrix<Real>& batch,
                             const std::vector<bool>& dead, std::optional<LossScales> scales) {
  LossScales effective;
  if (scales) {
    effective = *scales;
  } else {
    effective.main_normalizer = static_cast<double>(model.dim());
    effective.aux_normalizer = 1.0;
  }
  return loss_and_gradients<Real>(model, batch, dead, effective, nullptr, nullptr);
}

#define SAEFORGE_INSTANTIATE(Real)                                                        \
  template struct SparseActivation<Real>;                                                  \
  template SparseActivation<Real> select_topk<Real>(std::span<const Real>, std::size_t,    \
                                                    const std::vector<bool>*);             \
  template class BasicSaeModel<Real>;                                                      \
  template struct SaeGradients<Real>;                                                      \
  template BasicSaeModel<Real> init_model<Real>(const SaeConfig&, const FloatMatrix&);     \
  template LossBreakdown compute_losses<Real>(const BasicSaeModel<Real>&,                  \
                                              const Matrix<Real>&, const std::vector<bool>&, \
                                              std::optional<LossScales>);                  \
  template LossBreakdown loss_and_gradients<Real>(                                         \
      const BasicSaeModel<Real>&, const Matrix<Real>&, const std::vector<bool>&,           \
      const LossScales&, SaeGradients<Real>*, BatchActivity*);                             \
  template Matrix<Real> to_real_matrix<Real>(const FloatMatrix&);

SAEFORGE_INSTANTIATE(float)
SAEFORGE_INSTANTIATE(double)

#undef SAEFORGE_INSTANTIATE

}  // namespace saeforge
