// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "saeforge/activations.hpp"
#include "saeforge/corpus.hpp"
#include "saeforge/sae.hpp"

namespace saeforge {

// mean ||x - x_hat||^2 / mean ||x - mean(x)||^2 over the corpus rows.
double normalized_mse(const SaeModel& model, const EmbeddingCorpus& corpus,
                      std::size_t threads = 0);

struct FeatureStats {
  std::vector<double> density;                  // active rows / N
  std::vector<double> log10_density;            // NaN where density is 0
  std::vector<double> mean_nonzero_activation;  // 0 where never active
  double normalized_mse = 0.0;
  // Mean of log10 density over features with density > 0.
  double mean_log10_density = 0.0;
  // Mean of all non-zero activation values in the corpus.
  double mean_activation = 0.0;
  std::size_t total_active = 0;
  std::size_t never_active = 0;
  std::size_t rows = 0;
};

FeatureStats feature_stats(const ActivationMatrix& activations);
FeatureStats feature_stats(const SaeModel& model, const EmbeddingCorpus& corpus,
                           std::size_t threads = 0);

struct PowerLawFit {
  double coefficient = 0.0;  // c in y = c * x^e
  double exponent = 0.0;     // e
  double r_squared = 0.0;    // of the log-log linear fit

  double predict(double x) const;
};

// Ordinary least squares of log y on log x. Throws FitError on fewer than 3
// points, mismatched lengths, or non-positive values.
PowerLawFit fit_power_law(std::span<const double> xs, std::span<const double> ys);

void to_json(nlohmann::json& j, const PowerLawFit& fit);

// One row of the per-model metrics table: k, n, MSE, LogFD, ActMean.
struct MetricsRow {
  std::size_t k = 0;
  std::size_t n = 0;
  double mse = 0.0;
  double log_fd = 0.0;
  double act_mean = 0.0;
};

MetricsRow metrics_row(const SaeModel& model, const FeatureStats& stats);
void to_json(nlohmann::json& j, const MetricsRow& row);
void from_json(const nlohmann::json& j, MetricsRow& row);
std::string metrics_csv_header();
std::string metrics_csv_line(const MetricsRow& row);
void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricsRow> rows);

}  // namespace saeforge
