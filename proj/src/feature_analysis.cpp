// SPDX-License-Identifier: Apache-2.0
#include "saeforge/feature_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "saeforge/autointerp.hpp"
#include "saeforge/error.hpp"
#include "saeforge/parallel.hpp"
#include "saeforge/simd.hpp"

namespace saeforge {

void to_json(nlohmann::json& j, const MatchResult& m) {
  j = nlohmann::json::array();
  for (const auto& p : m.pairs) {
    nlohmann::json row{{"large_id", p.large_id},
                       {"best_small", p.best_small},
                       {"cosine", p.cosine},
                       {"class", p.match_class == MatchClass::kRecurrent ? "recurrent" : "novel"}};
    row["activation_similarity"] =
        p.activation_similarity ? nlohmann::json(*p.activation_similarity) : nlohmann::json(nullptr);
    j.push_back(std::move(row));
  }
}

MatchResult match_features(const FeatureCatalog& small, const FeatureCatalog& large,
                           double recurrent_threshold, const ActivationMatrix* small_acts,
                           const ActivationMatrix* large_acts) {
  if (small.dim != large.dim) throw ConfigError("catalogs have different embedding dimensions");
  if (small.size() == 0) throw ConfigError("cannot match against an empty catalog");
  MatchResult result;
  result.pairs.resize(large.size());
  parallel_chunks(large.size(), default_thread_count(), [&](std::size_t begin, std::size_t end, std::size_t) {
    for (std::size_t j = begin; j < end; ++j) {
      const auto& target = large.features[j].direction;
      FeatureMatch match;
      match.large_id = static_cast<std::uint32_t>(j);
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < small.size(); ++i) {
        const double s = simd::dot<float>(small.features[i].direction, target);
        if (s > best) {
          best = s;
          match.best_small = static_cast<std::uint32_t>(i);
        }
      }
      match.cosine = std::clamp(best, -1.0, 1.0);
      match.match_class = match.cosine >= recurrent_threshold ? MatchClass::kRecurrent : MatchClass::kNovel;
      result.pairs[j] = match;
    }
  });
  if (small_acts && large_acts) {
    if (small_acts->rows() != large_acts->rows()) {
      throw ConfigError("activation matrices cover different document sets");
    }
    const auto small_cols = small_acts->columns();
    const auto large_cols = large_acts->columns();
    for (auto& p : result.pairs) {
      p.activation_similarity =
          activation_similarity(small_cols.at(p.best_small), large_cols.at(p.large_id)).normalized;
    }
  }
  return result;
}

ActivationSimilarity activation_similarity(std::span<const FeatureHit> a,
                                           std::span<const FeatureHit> b) {
  ActivationSimilarity s;
  double na = 0.0, nb = 0.0;
  for (const auto& h : a) na += static_cast<double>(h.value) * h.value;
  for (const auto& h : b) nb += static_cast<double>(h.value) * h.value;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i].row < b[j].row) {
      ++i;
    } else if (b[j].row < a[i].row) {
      ++j;
    } else {
      s.raw += static_cast<double>(a[i].value) * b[j].value;
      ++i;
      ++j;
    }
  }
  s.normalized = (na > 0.0 && nb > 0.0) ? s.raw / std::sqrt(na * nb) : 0.0;
  return s;
}

ActivationSimilarity activation_similarity(const ActivationMatrix& a, const ActivationMatrix& b,
                                           std::uint32_t i, std::uint32_t j) {
  if (a.rows() != b.rows()) throw ConfigError("activation matrices cover different document sets");
  if (i >= a.latents() || j >= b.latents()) throw NotFound("feature index out of range");
  std::vector<FeatureHit> col_a, col_b;
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const auto fa = a.row_features(r);
    const auto va = a.row_values(r);
    for (std::size_t s = 0; s < fa.size(); ++s) {
      if (fa[s] == i) col_a.push_back({static_cast<std::uint32_t>(r), va[s]});
    }
    const auto fb = b.row_features(r);
    const auto vb = b.row_values(r);
    for (std::size_t s = 0; s < fb.size(); ++s) {
      if (fb[s] == j) col_b.push_back({static_cast<std::uint32_t>(r), vb[s]});
    }
  }
  return activation_similarity(col_a, col_b);
}

double CoActivationGraphs::c_norm_at(std::uint32_t i, std::uint32_t j) const {
  const auto& row = c_norm.at(i);
  auto it = std::lower_bound(row.begin(), row.end(), j,
                             [](const auto& entry, std::uint32_t col) { return entry.first < col; });
  return (it != row.end() && it->first == j) ? it->second : 0.0;
}

double CoActivationGraphs::d_normalized(std::uint32_t i, std::uint32_t j) const {
  const double denom = std::sqrt(d_raw(i, i) * d_raw(j, j));
  return denom > 0.0 ? d_raw(i, j) / denom : 0.0;
}

CoActivationGraphs build_cooccurrence(const ActivationMatrix& activations,
                                      const CooccurrenceOptions& options) {
  if (!(options.epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  const std::size_t n = activations.latents();
  CoActivationGraphs g;
  g.latents = n;
  g.documents = activations.rows();
  g.epsilon = options.epsilon;
  g.tau = options.tau;
  g.c_raw = Matrix<double>(n, n);
  g.d_raw = Matrix<double>(n, n);

  // Per-chunk partial sums reduced in chunk order, so results depend only on
  // the thread count.
  const std::size_t threads =
      std::min<std::size_t>(options.threads == 0 ? default_thread_count() : options.threads, 4);
  const std::size_t chunks = std::max<std::size_t>(1, std::min(threads, g.documents));
  std::vector<Matrix<double>> partial_c(chunks), partial_d(chunks);
  parallel_chunks(g.documents, chunks, [&](std::size_t begin, std::size_t end, std::size_t t) {
    auto& c = partial_c[t];
    auto& d = partial_d[t];
    if (t == 0) {
      c = std::move(g.c_raw);
      d = std::move(g.d_raw);
    } else {
      c = Matrix<double>(n, n);
      d = Matrix<double>(n, n);
    }
    for (std::size_t r = begin; r < end; ++r) {
      const auto features = activations.row_features(r);
      const auto values = activations.row_values(r);
      for (std::size_t a = 0; a < features.size(); ++a) {
        for (std::size_t b = 0; b < features.size(); ++b) {
          c(features[a], features[b]) += 1.0;
          d(features[a], features[b]) += static_cast<double>(values[a]) * values[b];
        }
      }
    }
  });
  if (g.documents == 0) {
    g.c_raw = Matrix<double>(n, n);
    g.d_raw = Matrix<double>(n, n);
  } else {
    g.c_raw = std::move(partial_c[0]);
    g.d_raw = std::move(partial_d[0]);
    for (std::size_t t = 1; t < chunks; ++t) {
      if (partial_c[t].empty()) continue;
      for (std::size_t e = 0; e < g.c_raw.values.size(); ++e) {
        g.c_raw.values[e] += partial_c[t].values[e];
        g.d_raw.values[e] += partial_d[t].values[e];
      }
    }
  }

  g.f.resize(n);
  for (std::size_t i = 0; i < n; ++i) g.f[i] = g.c_raw(i, i);
  g.c_norm.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double scale = 1.0 / (g.f[i] + g.epsilon);
    for (std::size_t j = 0; j < n; ++j) {
      const double value = g.c_raw(i, j) * scale;
      if (value > 0.0 && value >= g.tau) g.c_norm[i].emplace_back(static_cast<std::uint32_t>(j), value);
    }
  }
  return g;
}

namespace {

std::vector<double> average_ranks(std::span<const double> xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t m = i; m <= j; ++m) ranks[order[m]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman_correlation(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw ConfigError("series differ in length");
  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  return pearson_correlation(rx, ry);
}

EncoderDecoderSimilarity encoder_decoder_similarity(const SaeModel& model, std::size_t threads) {
  const std::size_t n = model.latents();
  EncoderDecoderSimilarity out;
  out.cosine.resize(n);
  out.max_decoder_cosine.assign(n, 0.0);
  std::vector<double> dec_norm(n);
  for (std::size_t i = 0; i < n; ++i) {
    dec_norm[i] = std::sqrt(simd::squared_norm<float>(model.decoder_column(i)));
  }
  threads = threads == 0 ? default_thread_count() : threads;
  parallel_chunks(n, threads, [&](std::size_t begin, std::size_t end, std::size_t) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto enc = model.encoder_row(i);
      const auto dec = model.decoder_column(i);
      const double enc_norm = std::sqrt(simd::squared_norm<float>(enc));
      const double denom = enc_norm * dec_norm[i];
      out.cosine[i] = denom > 0.0 ? simd::dot<float>(enc, dec) / denom : 0.0;
      double best = -1.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double dn = dec_norm[i] * dec_norm[j];
        const double c = dn > 0.0 ? simd::dot<float>(dec, model.decoder_column(j)) / dn : 0.0;
        best = std::max(best, c);
      }
      out.max_decoder_cosine[i] = n > 1 ? best : 0.0;
    }
  });
  out.mean_cosine = n ? std::accumulate(out.cosine.begin(), out.cosine.end(), 0.0) / n : 0.0;
  out.rank_correlation = spearman_correlation(out.cosine, out.max_decoder_cosine);
  return out;
}

}  // namespace saeforge
