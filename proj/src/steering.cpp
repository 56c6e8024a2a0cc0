// SPDX-License-Identifier: Apache-2.0
#include "saeforge/steering.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "saeforge/error.hpp"
#include "saeforge/simd.hpp"

namespace saeforge {

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) return (na == nb) ? 1.0 : 0.0;
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

namespace {

void check_inputs(const SaeModel& model, std::span<const float> x, const Intervention& iv) {
  if (x.size() != model.dim()) throw ConfigError("embedding dimension does not match model");
  for (float v : x) {
    if (!std::isfinite(v)) throw ConfigError("embedding has non-finite entries");
  }
  for (const auto& [feature, weight] : iv.edits) {
    if (feature >= model.latents()) throw NotFound("feature " + std::to_string(feature));
    if (!std::isfinite(weight)) throw ConfigError("edit weight must be finite");
  }
}

}  // namespace

SteeredEmbedding apply_intervention(const SaeModel& model, std::span<const float> x,
                                    const Intervention& intervention) {
  check_inputs(model, x, intervention);
  SteeredEmbedding out;
  out.input.assign(x.begin(), x.end());
  out.code = model.encode(x);
  out.original = model.decode(out.code);
  out.modified = out.original;
  // decode(h') = decode(h) + sum (lambda - h_i) w_i
  for (const auto& [feature, weight] : intervention.edits) {
    const float delta = static_cast<float>(weight - out.code.value_of(feature));
    if (delta != 0.0f) simd::axpy<float>(delta, model.decoder_column(feature), out.modified);
  }
  out.fidelity = cosine_similarity(out.original, out.modified);
  return out;
}

std::vector<float> edited_target(const SaeModel& model, std::span<const float> x,
                                 const Intervention& intervention) {
  check_inputs(model, x, intervention);
  auto target = model.encode(x).dense(model.latents());
  for (const auto& [feature, weight] : intervention.edits) target[feature] = static_cast<float>(weight);
  return target;
}

namespace {

struct Evaluation {
  double objective = 0.0;
  std::vector<float> residual;  // encode(decode(h)) - t, dense
  std::vector<bool> active;     // support of encode(decode(h))
};

Evaluation evaluate(const SaeModel& model, std::span<const float> h, std::span<const float> target) {
  std::vector<float> y(model.decoder_bias.begin(), model.decoder_bias.end());
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (h[i] != 0.0f) simd::axpy<float>(h[i], model.decoder_column(i), y);
  }
  const auto dense = model.encode(y).dense(model.latents());
  Evaluation e;
  e.residual.resize(dense.size());
  e.active.resize(dense.size());
  for (std::size_t i = 0; i < dense.size(); ++i) {
    e.active[i] = dense[i] > 0.0f;
    e.residual[i] = dense[i] - target[i];
    e.objective += static_cast<double>(e.residual[i]) * e.residual[i];
  }
  return e;
}

}  // namespace

double iterative_objective(const SaeModel& model, std::span<const float> h,
                           std::span<const float> target) {
  return evaluate(model, h, target).objective;
}

IterativeResult iterative_optimize(const SaeModel& model, std::span<const float> x,
                                   std::span<const float> target, const IterativeOptions& options) {
  const std::size_t n = model.latents();
  const std::size_t d = model.dim();
  if (x.size() != d) throw ConfigError("embedding dimension does not match model");
  if (target.size() != n) throw ConfigError("target must have one entry per latent");

  IterativeResult result;
  std::vector<float> h = model.encode(x).dense(n);
  auto current = evaluate(model, h, target);
  if (!std::isfinite(current.objective)) throw OptimizeDiverged("initial objective is not finite");
  result.trace.push_back(current.objective);

  std::vector<double> m(n, 0.0), v(n, 0.0);
  std::vector<float> back(d), grad(n), proposal(n);
  for (std::size_t step = 1; step <= options.steps; ++step) {
    // g = 2 W_d^T W_e^T (m * r) with m the current active set.
    std::fill(back.begin(), back.end(), 0.0f);
    for (std::size_t i = 0; i < n; ++i) {
      if (current.active[i] && current.residual[i] != 0.0f) {
        simd::axpy<float>(2.0f * current.residual[i], model.encoder_row(i), back);
      }
    }
    for (std::size_t i = 0; i < n; ++i) grad[i] = static_cast<float>(simd::dot<float>(model.decoder_column(i), back));

    const double lr = options.learning_rate * 0.5 *
                      (1.0 + std::cos(std::numbers::pi * static_cast<double>(step - 1) /
                                      static_cast<double>(options.steps)));
    const double bc1 = 1.0 - std::pow(options.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(options.beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = options.beta1 * m[i] + (1.0 - options.beta1) * grad[i];
      v[i] = options.beta2 * v[i] + (1.0 - options.beta2) * static_cast<double>(grad[i]) * grad[i];
      const double update = (m[i] / bc1) / (std::sqrt(v[i] / bc2) + options.eps);
      proposal[i] = static_cast<float>(h[i] - lr * (update + options.weight_decay * h[i]));
    }
    auto next = evaluate(model, proposal, target);
    if (!std::isfinite(next.objective)) {
      throw OptimizeDiverged("objective became non-finite at step " + std::to_string(step));
    }
    result.proposed.push_back(next.objective);
    if (next.objective <= current.objective) {
      h = proposal;
      current = std::move(next);
    }
    result.trace.push_back(current.objective);
  }
  result.latents = h;
  result.embedding.assign(model.decoder_bias.begin(), model.decoder_bias.end());
  for (std::size_t i = 0; i < n; ++i) {
    if (h[i] != 0.0f) simd::axpy<float>(h[i], model.decoder_column(i), result.embedding);
  }
  return result;
}

}  // namespace saeforge
