// SPDX-License-Identifier: Apache-2.0
#include "saeforge/metrics.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "saeforge/error.hpp"
#include "saeforge/parallel.hpp"
#include "saeforge/simd.hpp"

namespace saeforge {

double normalized_mse(const SaeModel& model, const EmbeddingCorpus& corpus, std::size_t threads) {
  if (corpus.dim() != model.dim()) throw ConfigError("corpus dimension does not match model");
  const std::size_t count = corpus.size();
  if (count == 0) throw ConfigError("normalized_mse needs a non-empty corpus");
  threads = threads == 0 ? default_thread_count() : threads;
  std::vector<double> partial(threads, 0.0);
  parallel_chunks(count, threads, [&](std::size_t begin, std::size_t end, std::size_t t) {
    std::vector<float> x_hat(model.dim());
    double sum = 0.0;
    for (std::size_t r = begin; r < end; ++r) {
      model.decode_into(model.encode(corpus.row(r)), x_hat);
      sum += simd::squared_distance<float>(corpus.row(r), x_hat);
    }
    partial[t] = sum;
  });
  double error = 0.0;
  for (double p : partial) error += p;
  error /= static_cast<double>(count);
  const double baseline = mean_squared_deviation(corpus.embeddings);
  if (!(baseline > 0.0)) throw ConfigError("corpus has zero variance");
  return error / baseline;
}

FeatureStats feature_stats(const ActivationMatrix& activations) {
  FeatureStats stats;
  const std::size_t n = activations.latents();
  stats.rows = activations.rows();
  std::vector<std::size_t> counts(n, 0);
  std::vector<double> sums(n, 0.0);
  double value_sum = 0.0;
  for (std::size_t r = 0; r < activations.rows(); ++r) {
    const auto f = activations.row_features(r);
    const auto v = activations.row_values(r);
    for (std::size_t s = 0; s < f.size(); ++s) {
      ++counts[f[s]];
      sums[f[s]] += v[s];
      value_sum += v[s];
    }
  }
  stats.density.resize(n);
  stats.log10_density.resize(n);
  stats.mean_nonzero_activation.resize(n);
  double log_sum = 0.0;
  std::size_t live = 0;
  for (std::size_t i = 0; i < n; ++i) {
    stats.total_active += counts[i];
    stats.density[i] = stats.rows ? static_cast<double>(counts[i]) / static_cast<double>(stats.rows) : 0.0;
    if (counts[i] == 0) {
      stats.log10_density[i] = std::numeric_limits<double>::quiet_NaN();
      ++stats.never_active;
      continue;
    }
    stats.log10_density[i] = std::log10(stats.density[i]);
    stats.mean_nonzero_activation[i] = sums[i] / static_cast<double>(counts[i]);
    log_sum += stats.log10_density[i];
    ++live;
  }
  stats.mean_log10_density = live ? log_sum / static_cast<double>(live) : 0.0;
  stats.mean_activation =
      stats.total_active ? value_sum / static_cast<double>(stats.total_active) : 0.0;
  return stats;
}

FeatureStats feature_stats(const SaeModel& model, const EmbeddingCorpus& corpus,
                           std::size_t threads) {
  if (corpus.size() == 0) throw ConfigError("feature_stats needs a non-empty corpus");
  auto stats = feature_stats(encode_corpus(model, corpus, threads));
  stats.normalized_mse = normalized_mse(model, corpus, threads);
  return stats;
}

double PowerLawFit::predict(double x) const { return coefficient * std::pow(x, exponent); }

PowerLawFit fit_power_law(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw FitError("xs and ys differ in length");
  if (xs.size() < 3) throw FitError("need at least 3 points");
  const std::size_t count = xs.size();
  std::vector<double> lx(count), ly(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (!(xs[i] > 0.0) || !(ys[i] > 0.0) || !std::isfinite(xs[i]) || !std::isfinite(ys[i])) {
      throw FitError("power-law fit needs finite positive values");
    }
    lx[i] = std::log(xs[i]);
    ly[i] = std::log(ys[i]);
  }
  double mean_x = 0.0, mean_y = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    mean_x += lx[i];
    mean_y += ly[i];
  }
  mean_x /= static_cast<double>(count);
  mean_y /= static_cast<double>(count);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double dx = lx[i] - mean_x;
    const double dy = ly[i] - mean_y;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (!(sxx > 0.0)) throw FitError("all x values are equal");
  PowerLawFit fit;
  fit.exponent = sxy / sxx;
  const double intercept = mean_y - fit.exponent * mean_x;
  fit.coefficient = std::exp(intercept);
  double ss_res = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double resid = ly[i] - (intercept + fit.exponent * lx[i]);
    ss_res += resid * resid;
  }
  fit.r_squared = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 1.0;
  return fit;
}

void to_json(nlohmann::json& j, const PowerLawFit& fit) {
  j = nlohmann::json{{"coefficient", fit.coefficient},
                     {"exponent", fit.exponent},
                     {"r_squared", fit.r_squared}};
}

MetricsRow metrics_row(const SaeModel& model, const FeatureStats& stats) {
  return MetricsRow{model.config().k, model.latents(), stats.normalized_mse,
                    stats.mean_log10_density, stats.mean_activation};
}

void to_json(nlohmann::json& j, const MetricsRow& row) {
  j = nlohmann::json{{"k", row.k},
                     {"n", row.n},
                     {"mse", row.mse},
                     {"log_fd", row.log_fd},
                     {"act_mean", row.act_mean}};
}

void from_json(const nlohmann::json& j, MetricsRow& row) {
  row.k = j.at("k").get<std::size_t>();
  row.n = j.at("n").get<std::size_t>();
  row.mse = j.at("mse").get<double>();
  row.log_fd = j.value("log_fd", 0.0);
  row.act_mean = j.value("act_mean", 0.0);
}

std::string metrics_csv_header() { return "k,n,MSE,LogFD,ActMean"; }

std::string metrics_csv_line(const MetricsRow& row) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(4);
  out << row.k << ',' << row.n << ',' << row.mse << ',' << row.log_fd << ',' << row.act_mean;
  return out.str();
}

void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricsRow> rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot open for writing: " + path.string());
  out << metrics_csv_header() << '\n';
  for (const auto& row : rows) out << metrics_csv_line(row) << '\n';
}

}  // namespace saeforge
