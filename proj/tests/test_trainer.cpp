// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "doctest.h"
#include "saeforge/error.hpp"
#include "saeforge/metrics.hpp"
#include "saeforge/trainer.hpp"
#include "support/planted.hpp"

using namespace saeforge;

namespace {

SaeConfig small_config() {
  SaeConfig config;
  config.k = 3;
  config.n = 48;
  config.learning_rate = 3e-3;
  config.batch_size = 64;
  config.epochs = 3;
  config.seed = 12;
  return config;
}

}  // namespace

TEST_CASE("epochs = 0 returns the initial model and an empty log") {
  auto planted = saeforge::testing::make_planted_corpus(16, 32, 3, 300, 1);
  auto config = small_config();
  config.epochs = 0;
  const auto result = train(planted.normalized, config);
  CHECK(result.model == init_model<float>(config, planted.normalized.embeddings));
  CHECK(result.log.steps.empty());
  CHECK(result.log.final_dead.empty());
}

TEST_CASE("every step keeps unit decoder columns and orthogonal decoder updates") {
  auto planted = saeforge::testing::make_planted_corpus(16, 32, 3, 512, 2);
  const auto config = small_config();
  SaeTrainer<float> trainer(init_model<float>(config, planted.normalized.embeddings),
                            mean_squared_deviation(planted.normalized.embeddings),
                            planted.normalized.size());
  Matrix<float> batch(64, 16);
  for (std::size_t step = 0; step < 40; ++step) {
    for (std::size_t r = 0; r < 64; ++r) {
      const auto src = planted.normalized.row((step * 64 + r) % planted.normalized.size());
      std::copy(src.begin(), src.end(), batch.row(r).begin());
    }
    const auto report = trainer.step(batch);
    CHECK(trainer.model().max_decoder_norm_error() <= 1e-6);
    CHECK(report.max_update_alignment <= 1e-6);
    CHECK(std::isfinite(report.loss.total));
  }
}

TEST_CASE("training is bitwise deterministic and the log is well formed") {
  auto planted = saeforge::testing::make_planted_corpus(16, 32, 3, 400, 3);
  const auto config = small_config();
  const auto a = train(planted.normalized, config);
  const auto b = train(planted.normalized, config);
  CHECK(a.model == b.model);
  REQUIRE(a.log.steps.size() == 3 * 7);  // ceil(400 / 64) steps per epoch
  for (std::size_t i = 1; i < a.log.steps.size(); ++i) {
    CHECK(a.log.steps[i].flops_cumulative > a.log.steps[i - 1].flops_cumulative);
    CHECK(a.log.steps[i].step == i + 1);
  }
  CHECK(a.log.steps[0].flops_cumulative == doctest::Approx(step_flops(48, 16, 64)));
  CHECK(a.log.epochs_completed == 3);
}

TEST_CASE("training lowers error below the predict-the-mean baseline") {
  auto planted = saeforge::testing::make_planted_corpus(16, 32, 3, 2000, 4);
  auto config = small_config();
  config.epochs = 8;
  const auto result = train(planted.normalized, config);
  const double nmse = normalized_mse(result.model, planted.normalized);
  CHECK(nmse < 1.0);
  CHECK(nmse < normalized_mse(init_model<float>(config, planted.normalized.embeddings),
                              planted.normalized));
}

TEST_CASE("latents go dead only after a full epoch without firing") {
  auto planted = saeforge::testing::make_planted_corpus(8, 8, 1, 128, 5);
  SaeConfig config;
  config.k = 1;
  config.n = 64;
  config.batch_size = 32;
  config.learning_rate = 1e-3;
  SaeTrainer<float> trainer(init_model<float>(config, planted.normalized.embeddings), 8.0, 128);
  Matrix<float> batch(32, 8);
  std::size_t max_dead_first_epoch = 0;
  for (std::size_t step = 0; step < 8; ++step) {
    for (std::size_t r = 0; r < 32; ++r) {
      const auto src = planted.normalized.row((step * 32 + r) % 128);
      std::copy(src.begin(), src.end(), batch.row(r).begin());
    }
    const auto report = trainer.step(batch);
    if (step < 3) max_dead_first_epoch = std::max(max_dead_first_epoch, report.dead_latents);
    if (step >= 3) CHECK(report.dead_latents > 0);  // 64 latents, k = 1, 128 rows per epoch
  }
  CHECK(max_dead_first_epoch == 0);
}

TEST_CASE("non-finite loss aborts with TrainingDiverged") {
  auto planted = saeforge::testing::make_planted_corpus(8, 8, 2, 64, 6);
  auto corpus = planted.normalized;
  corpus.embeddings(5, 3) = 3e38f;
  corpus.embeddings(6, 3) = -3e38f;
  SaeConfig config;
  config.k = 2;
  config.n = 16;
  config.batch_size = 64;
  config.epochs = 1;
  CHECK_THROWS_AS(train(corpus, config), TrainingDiverged);
}
