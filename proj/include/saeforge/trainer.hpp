// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "json.hpp"
#include "saeforge/corpus.hpp"
#include "saeforge/sae.hpp"

namespace saeforge {

struct TrainingStep {
  std::size_t step = 0;
  double main_loss = 0.0;
  double aux_loss = 0.0;
  std::size_t dead_latents = 0;
  double flops_cumulative = 0.0;
};

struct TrainingLog {
  std::vector<TrainingStep> steps;
  std::vector<std::uint32_t> final_dead;
  double main_normalizer = 0.0;
  std::size_t epochs_completed = 0;

  nlohmann::json summary() const;
};

void to_json(nlohmann::json& j, const TrainingStep& step);

// Training FLOPs for one step: forward plus backward over both weight
// matrices, 6 * n * d * batch.
double step_flops(std::size_t n, std::size_t d, std::size_t batch);

struct StepReport {
  LossBreakdown loss;
  std::size_t dead_latents = 0;
  double grad_norm = 0.0;  // before clipping
  // max_i |<applied decoder update_i, w_i>| measured before renormalization.
  double max_update_alignment = 0.0;
};

// Owns the optimizer state for one model. Adam (beta1 0.9, beta2 0.999) with a
// constant learning rate; decoder-column gradients and applied updates are
// projected orthogonal to their column; global-norm gradient clipping; columns
// renormalized after every step. A latent counts as dead once it has gone
// `dataset_size` samples without firing.
template <typename Real>
class SaeTrainer {
 public:
  SaeTrainer(BasicSaeModel<Real> model, double main_normalizer, std::size_t dataset_size);

  StepReport step(const Matrix<Real>& batch);

  const BasicSaeModel<Real>& model() const { return model_; }
  BasicSaeModel<Real> release() && { return std::move(model_); }
  std::vector<bool> dead_mask() const;
  std::size_t steps_taken() const { return step_; }
  const TrainingLog& log() const { return log_; }
  TrainingLog& log() { return log_; }

 private:
  struct Moments {
    std::vector<Real> first;
    std::vector<Real> second;
  };
  void adam_block(std::vector<Real>& params, const std::vector<Real>& grad, Moments& state,
                  std::vector<Real>* delta_out);

  BasicSaeModel<Real> model_;
  SaeGradients<Real> grads_;
  Moments encoder_m_, encoder_bias_m_, decoder_m_, decoder_bias_m_;
  std::vector<std::uint64_t> since_fired_;
  double main_normalizer_;
  std::uint64_t dataset_size_;
  std::size_t step_ = 0;
  double flops_ = 0.0;
  TrainingLog log_;
};

struct TrainOptions {
  std::function<void(const TrainingStep&)> on_step;
};

template <typename Real>
struct TrainResult {
  BasicSaeModel<Real> model;
  TrainingLog log;
};

// Trains on a normalized corpus. Throws TrainingDiverged on a non-finite loss.
template <typename Real = float>
TrainResult<Real> train(const EmbeddingCorpus& corpus, const SaeConfig& config,
                        const TrainOptions& options = {});

}  // namespace saeforge
