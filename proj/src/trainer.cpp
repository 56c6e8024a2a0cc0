// SPDX-License-Identifier: Apache-2.0
#include "saeforge/trainer.hpp"

#include <cmath>
#include <numeric>
#include <random>

#include "saeforge/error.hpp"
#include "saeforge/simd.hpp"

namespace saeforge {

namespace {
constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
}  // namespace

void to_json(nlohmann::json& j, const TrainingStep& s) {
  j = nlohmann::json{{"step", s.step},
                     {"main_loss", s.main_loss},
                     {"aux_loss", s.aux_loss},
                     {"dead_latents", s.dead_latents},
                     {"flops_cumulative", s.flops_cumulative}};
}

nlohmann::json TrainingLog::summary() const {
  nlohmann::json j;
  j["steps"] = steps.size();
  j["epochs_completed"] = epochs_completed;
  j["main_normalizer"] = main_normalizer;
  j["final_dead_latents"] = final_dead.size();
  j["final_dead"] = final_dead;
  if (!steps.empty()) j["last_step"] = steps.back();
  return j;
}

double step_flops(std::size_t n, std::size_t d, std::size_t batch) {
  return 6.0 * static_cast<double>(n) * static_cast<double>(d) * static_cast<double>(batch);
}

template <typename Real>
SaeTrainer<Real>::SaeTrainer(BasicSaeModel<Real> model, double main_normalizer,
                             std::size_t dataset_size)
    : model_(std::move(model)),
      grads_(model_),
      since_fired_(model_.latents(), 0),
      main_normalizer_(main_normalizer > 0.0 ? main_normalizer : 1.0),
      dataset_size_(std::max<std::size_t>(dataset_size, 1)) {
  auto init = [](Moments& m, std::size_t size) {
    m.first.assign(size, Real(0));
    m.second.assign(size, Real(0));
  };
  init(encoder_m_, model_.encoder.values.size());
  init(encoder_bias_m_, model_.encoder_bias.size());
  init(decoder_m_, model_.decoder.values.size());
  init(decoder_bias_m_, model_.decoder_bias.size());
  log_.main_normalizer = main_normalizer_;
}

template <typename Real>
std::vector<bool> SaeTrainer<Real>::dead_mask() const {
  std::vector<bool> dead(since_fired_.size());
  for (std::size_t i = 0; i < dead.size(); ++i) dead[i] = since_fired_[i] >= dataset_size_;
  return dead;
}

template <typename Real>
void SaeTrainer<Real>::adam_block(std::vector<Real>& params, const std::vector<Real>& grad,
                                  Moments& state, std::vector<Real>* delta_out) {
  const double t = static_cast<double>(step_);
  const double correction1 = 1.0 - std::pow(kBeta1, t);
  const double correction2 = 1.0 - std::pow(kBeta2, t);
  const double lr = model_.config().learning_rate;
  if (delta_out) delta_out->resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i];
    const double m = kBeta1 * state.first[i] + (1.0 - kBeta1) * g;
    const double v = kBeta2 * state.second[i] + (1.0 - kBeta2) * g * g;
    state.first[i] = static_cast<Real>(m);
    state.second[i] = static_cast<Real>(v);
    const double delta = -lr * (m / correction1) / (std::sqrt(v / correction2) + kAdamEps);
    if (delta_out) {
      (*delta_out)[i] = static_cast<Real>(delta);
    } else {
      params[i] = static_cast<Real>(params[i] + delta);
    }
  }
}

template <typename Real>
StepReport SaeTrainer<Real>::step(const Matrix<Real>& batch) {
  StepReport report;
  const auto dead = dead_mask();
  LossScales scales;
  scales.main_normalizer = main_normalizer_;
  scales.aux_per_batch = true;

  grads_.zero();
  BatchActivity activity;
  report.loss = loss_and_gradients<Real>(model_, batch, dead, scales, &grads_, &activity);
  if (!std::isfinite(report.loss.total)) {
    throw TrainingDiverged("non-finite loss at step " + std::to_string(step_ + 1));
  }

  const std::size_t n = model_.latents();
  // Remove the radial component of each decoder-column gradient.
  for (std::size_t i = 0; i < n; ++i) {
    auto g = grads_.decoder.row(i);
    const auto w = model_.decoder.row(i);
    const Real radial = simd::dot<Real>(g, w);
    simd::axpy<Real>(-radial, w, g);
  }

  report.grad_norm = std::sqrt(grads_.squared_norm());
  const double clip = model_.config().grad_clip;
  if (report.grad_norm > clip) grads_.scale(static_cast<Real>(clip / report.grad_norm));

  ++step_;
  adam_block(model_.encoder.values, grads_.encoder.values, encoder_m_, nullptr);
  adam_block(model_.encoder_bias, grads_.encoder_bias, encoder_bias_m_, nullptr);
  adam_block(model_.decoder_bias, grads_.decoder_bias, decoder_bias_m_, nullptr);

  std::vector<Real> decoder_delta;
  adam_block(model_.decoder.values, grads_.decoder.values, decoder_m_, &decoder_delta);
  const std::size_t d = model_.dim();
  for (std::size_t i = 0; i < n; ++i) {
    std::span<Real> delta(decoder_delta.data() + i * d, d);
    auto w = model_.decoder.row(i);
    // Adam's per-coordinate scaling reintroduces a radial part; drop it again.
    const Real radial = simd::dot<Real>(delta, w);
    simd::axpy<Real>(-radial, std::span<const Real>(w.data(), d), delta);
    report.max_update_alignment =
        std::max(report.max_update_alignment,
                 std::abs(static_cast<double>(simd::dot<Real>(delta, w))));
    simd::axpy<Real>(Real(1), delta, w);
  }
  model_.normalize_decoder();

  if (!model_.all_finite()) {
    throw TrainingDiverged("non-finite parameters after step " + std::to_string(step_));
  }

  for (std::size_t i = 0; i < n; ++i) {
    since_fired_[i] = activity.fired[i] ? 0 : since_fired_[i] + batch.rows;
  }
  report.dead_latents = 0;
  for (auto since : since_fired_) report.dead_latents += since >= dataset_size_ ? 1 : 0;

  flops_ += step_flops(n, d, batch.rows);
  log_.steps.push_back(TrainingStep{step_, report.loss.main, report.loss.aux,
                                    report.dead_latents, flops_});
  return report;
}

template <typename Real>
TrainResult<Real> train(const EmbeddingCorpus& corpus, const SaeConfig& config,
                        const TrainOptions& options) {
  config.validate();
  if (corpus.size() == 0) throw ConfigError("cannot train on an empty corpus");
  TrainResult<Real> result{init_model<Real>(config, corpus.embeddings), {}};
  if (config.epochs == 0) return result;

  const double normalizer = mean_squared_deviation(corpus.embeddings);
  SaeTrainer<Real> trainer(std::move(result.model), normalizer, corpus.size());

  const std::size_t total = corpus.size();
  const std::size_t d = corpus.dim();
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  Matrix<Real> batch;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < total; start += config.batch_size) {
      const std::size_t rows = std::min(config.batch_size, total - start);
      if (batch.rows != rows) batch = Matrix<Real>(rows, d);
      for (std::size_t r = 0; r < rows; ++r) {
        const auto src = corpus.row(order[start + r]);
        auto dst = batch.row(r);
        for (std::size_t c = 0; c < d; ++c) dst[c] = static_cast<Real>(src[c]);
      }
      trainer.step(batch);
      if (options.on_step) options.on_step(trainer.log().steps.back());
    }
    trainer.log().epochs_completed = epoch + 1;
  }

  const auto dead = trainer.dead_mask();
  for (std::size_t i = 0; i < dead.size(); ++i) {
    if (dead[i]) trainer.log().final_dead.push_back(static_cast<std::uint32_t>(i));
  }
  result.log = trainer.log();
  result.model = std::move(trainer).release();
  return result;
}

template class SaeTrainer<float>;
template class SaeTrainer<double>;
template TrainResult<float> train<float>(const EmbeddingCorpus&, const SaeConfig&,
                                         const TrainOptions&);
template TrainResult<double> train<double>(const EmbeddingCorpus&, const SaeConfig&,
                                           const TrainOptions&);

}  // namespace saeforge
