// SPDX-License-Identifier: Apache-2.0
#pragma once

// Central finite-difference check of loss_and_gradients on a tiny model.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "saeforge/sae.hpp"

namespace saeforge::testing {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t parameters = 0;
  double loss = 0.0;
  double aux = 0.0;
};

inline BasicSaeModel<double> random_tiny_model(std::size_t d, std::size_t n, std::size_t k,
                                               std::size_t k_aux, std::uint64_t seed) {
  SaeConfig config;
  config.k = k;
  config.n = n;
  config.k_aux = k_aux;
  config.alpha = 1.0 / 32.0;
  BasicSaeModel<double> model(config, d);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (auto& v : model.encoder.values) v = 0.5 * gauss(rng);
  for (auto& v : model.encoder_bias) v = 0.1 * gauss(rng);
  for (auto& v : model.decoder.values) v = gauss(rng);
  for (auto& v : model.decoder_bias) v = 0.1 * gauss(rng);
  model.normalize_decoder();
  return model;
}

// Relative error per parameter is |analytic - numeric| / max(|analytic|,
// |numeric|, 1e-6); the floor keeps exactly-zero gradients of inactive
// latents from amplifying round-off.
inline GradCheckResult gradient_check(BasicSaeModel<double> model, const Matrix<double>& batch,
                                      const std::vector<bool>& dead, const LossScales& scales,
                                      double step = 1e-5) {
  SaeGradients<double> grads(model);
  const auto base = loss_and_gradients<double>(model, batch, dead, scales, &grads);
  GradCheckResult result;
  result.loss = base.total;
  result.aux = base.aux;

  auto probe = [&](std::vector<double>& params, const std::vector<double>& analytic) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double saved = params[i];
      params[i] = saved + step;
      const double plus = loss_and_gradients<double>(model, batch, dead, scales, nullptr).total;
      params[i] = saved - step;
      const double minus = loss_and_gradients<double>(model, batch, dead, scales, nullptr).total;
      params[i] = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-6});
      result.max_relative_error =
          std::max(result.max_relative_error, std::abs(analytic[i] - numeric) / denom);
      ++result.parameters;
    }
  };
  probe(model.encoder.values, grads.encoder.values);
  probe(model.encoder_bias, grads.encoder_bias);
  probe(model.decoder.values, grads.decoder.values);
  probe(model.decoder_bias, grads.decoder_bias);
  return result;
}

}  // namespace saeforge::testing
