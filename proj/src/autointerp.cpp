// SPDX-License-Identifier: Apache-2.0
#include "saeforge/autointerp.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include "saeforge/error.hpp"
#include "saeforge/prompts.hpp"

namespace saeforge {

namespace {

ExampleDoc make_doc(const EmbeddingCorpus& corpus, std::size_t row, double activation) {
  return ExampleDoc{row, corpus.docs[row].doc_id, corpus.docs[row].abstract_text, activation};
}

// First `count` entries of a seeded shuffle.
template <typename T>
std::vector<T> draw(std::vector<T> pool, std::size_t count, std::mt19937_64& rng) {
  for (std::size_t i = 0; i < count && i < pool.size(); ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(std::min(count, pool.size()));
  return pool;
}

}  // namespace

std::uint64_t feature_seed(std::uint64_t seed, std::uint32_t feature) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(feature) + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

ExampleSelection select_examples(std::uint32_t feature, std::span<const FeatureHit> hits,
                                 const EmbeddingCorpus& corpus, std::uint64_t seed,
                                 const SelectionOptions& options) {
  std::vector<FeatureHit> active;
  for (const auto& h : hits) {
    if (h.value > 0.0f) active.push_back(h);
  }
  const std::size_t needed = options.top_activating + options.predictor_positive;
  if (active.size() < needed) {
    throw TooSparse("feature " + std::to_string(feature) + " fires on " +
                    std::to_string(active.size()) + " documents, needs " + std::to_string(needed));
  }
  std::sort(active.begin(), active.end(), [](const FeatureHit& a, const FeatureHit& b) {
    return a.value != b.value ? a.value > b.value : a.row < b.row;
  });

  std::vector<bool> is_active(corpus.size(), false);
  for (const auto& h : active) is_active.at(h.row) = true;
  std::vector<std::size_t> inactive;
  inactive.reserve(corpus.size() - active.size());
  for (std::size_t r = 0; r < corpus.size(); ++r) {
    if (!is_active[r]) inactive.push_back(r);
  }
  const std::size_t needed_neg = options.zero_activating + options.predictor_negative;
  if (inactive.size() < needed_neg) {
    throw TooDense("feature " + std::to_string(feature) + " leaves " +
                   std::to_string(inactive.size()) + " non-activating documents, needs " +
                   std::to_string(needed_neg));
  }

  std::mt19937_64 rng(seed);
  ExampleSelection out;
  out.interpreter.feature_id = feature;
  for (std::size_t i = 0; i < options.top_activating; ++i) {
    out.interpreter.max_activating.push_back(make_doc(corpus, active[i].row, active[i].value));
  }
  std::vector<FeatureHit> rest(active.begin() + static_cast<std::ptrdiff_t>(options.top_activating),
                               active.end());
  const auto positives = draw(std::move(rest), options.predictor_positive, rng);
  const auto negatives = draw(std::move(inactive), needed_neg, rng);
  for (std::size_t i = 0; i < options.zero_activating; ++i) {
    out.interpreter.zero_activating.push_back(make_doc(corpus, negatives[i], 0.0));
  }
  for (const auto& h : positives) out.predictor.push_back({make_doc(corpus, h.row, h.value), +1});
  for (std::size_t i = options.zero_activating; i < negatives.size(); ++i) {
    out.predictor.push_back({make_doc(corpus, negatives[i], 0.0), -1});
  }
  return out;
}

FeatureLabel interpret_feature(const InterpretationInput& input, CompletionClient& client,
                               std::string_view subject, std::string_view type) {
  std::vector<ActivatingText> max_examples;
  for (const auto& d : input.max_activating) max_examples.push_back({d.text, d.activation});
  std::vector<std::string> zero_examples;
  for (const auto& d : input.zero_activating) zero_examples.push_back(d.text);

  CompletionRequest request;
  request.role = Role::kInterpreter;
  request.feature_id = input.feature_id;
  request.prompt = render_interpreter_prompt(subject, type, max_examples, zero_examples);
  FeatureLabel label;
  label.feature_id = input.feature_id;
  for (int attempt = 0; attempt < 2; ++attempt) {
    if (attempt == 1) request.prompt += kInterpreterRetryInstruction;
    const std::string reply = client.complete(request);
    if (!label.interpreter_transcript.empty()) label.interpreter_transcript += "\n---\n";
    label.interpreter_transcript += reply;
    if (auto parsed = parse_final_label(reply)) {
      label.label = *parsed;
      return label;
    }
  }
  throw LabelParseError("no FINAL line for feature " + std::to_string(input.feature_id));
}

double predict_activation(const FeatureLabel& label, std::string_view abstract_text,
                          CompletionClient& client, std::string_view subject,
                          std::optional<std::string> doc_id) {
  CompletionRequest request;
  request.role = Role::kPredictor;
  request.feature_id = label.feature_id;
  request.doc_id = std::move(doc_id);
  request.prompt = render_predictor_prompt(subject, label.label, abstract_text);
  for (int attempt = 0; attempt < 2; ++attempt) {
    if (attempt == 1) request.prompt += kPredictorRetryInstruction;
    if (auto value = parse_prediction(client.complete(request))) {
      return std::clamp(*value, -1.0, 1.0);
    }
  }
  throw PredictionParseError("no PREDICTION line for feature " + std::to_string(label.feature_id));
}

double pearson_correlation(std::span<const double> xs, std::span<const double> ys,
                           bool* degenerate) {
  const std::size_t n = std::min(xs.size(), ys.size());
  auto fail = [&] {
    if (degenerate) *degenerate = true;
    return 0.0;
  };
  if (degenerate) *degenerate = false;
  if (n < 2) return fail();
  const double mx = std::accumulate(xs.begin(), xs.begin() + n, 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.begin() + n, 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) return fail();
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

InterpScore score_feature(std::span<const Prediction> predictions, std::uint32_t feature_id) {
  InterpScore score;
  score.feature_id = feature_id;
  score.predictions.assign(predictions.begin(), predictions.end());
  std::vector<double> conf, truth;
  std::size_t tp = 0, fp = 0, fn = 0, positives = 0;
  for (const auto& p : predictions) {
    conf.push_back(p.confidence);
    truth.push_back(p.ground_truth);
    const bool predicted = p.confidence > 0.0;
    const bool actual = p.ground_truth > 0;
    positives += actual;
    tp += predicted && actual;
    fp += predicted && !actual;
    fn += !predicted && actual;
  }
  score.pearson = pearson_correlation(conf, truth, &score.pearson_degenerate);
  const bool both_classes = positives > 0 && positives < predictions.size();
  if (!both_classes || predictions.size() < 2) {
    score.f1_degenerate = true;
    score.f1 = 0.0;
  } else {
    const std::size_t denom = 2 * tp + fp + fn;
    score.f1 = denom == 0 ? 0.0 : 2.0 * tp / static_cast<double>(denom);
  }
  return score;
}

namespace {

CatalogEntry label_one(const CatalogEntry& base, const std::vector<FeatureHit>& hits,
                       const EmbeddingCorpus& corpus, CompletionClient& client,
                       const LabelOptions& options) {
  CatalogEntry entry = base;
  try {
    const auto selection = select_examples(entry.id, hits, corpus,
                                           feature_seed(options.seed, entry.id), options.selection);
    const auto label = interpret_feature(selection.interpreter, client, options.subject, options.type);
    entry.label = label.label;
    entry.transcript = label.interpreter_transcript;
    std::vector<Prediction> predictions;
    for (const auto& item : selection.predictor) {
      const double confidence =
          predict_activation(label, item.doc.text, client, options.subject, item.doc.doc_id);
      predictions.push_back({item.doc.doc_id, confidence, item.ground_truth});
    }
    const auto score = score_feature(predictions, entry.id);
    entry.pearson = score.pearson;
    entry.f1 = score.f1;
    entry.pearson_degenerate = score.pearson_degenerate;
    entry.f1_degenerate = score.f1_degenerate;
    entry.predictions = score.predictions;
  } catch (const ClientError&) {
    throw;  // transient: leave the feature out of the journal
  } catch (const Error& e) {
    entry.error = e.what();
  }
  return entry;
}

std::map<std::uint32_t, CatalogEntry> read_journal(const std::filesystem::path& path) {
  std::map<std::uint32_t, CatalogEntry> done;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      auto entry = nlohmann::json::parse(line).get<CatalogEntry>();
      done[entry.id] = std::move(entry);
    } catch (const nlohmann::json::exception&) {
      break;  // torn final line from an interrupted write
    }
  }
  return done;
}

}  // namespace

FeatureCatalog label_catalog(const FeatureCatalog& base, const EmbeddingCorpus& corpus,
                             const ActivationMatrix& activations, CompletionClient& client,
                             const LabelOptions& options) {
  if (activations.rows() != corpus.size()) {
    throw ConfigError("activation rows do not match corpus size");
  }
  if (activations.latents() != base.size()) {
    throw ConfigError("activation latents do not match catalog size");
  }
  std::vector<std::uint32_t> todo = options.features;
  if (todo.empty()) {
    todo.resize(base.size());
    std::iota(todo.begin(), todo.end(), 0u);
  }
  for (auto id : todo) base.at(id);

  std::map<std::uint32_t, CatalogEntry> done;
  if (options.journal) done = read_journal(*options.journal);
  std::vector<std::uint32_t> pending;
  for (auto id : todo) {
    if (!done.count(id)) pending.push_back(id);
  }

  const auto columns = activations.columns();
  std::ofstream journal;
  if (options.journal) {
    journal.open(*options.journal, std::ios::app);
    if (!journal) throw ConfigError("cannot open journal " + options.journal->string());
  }
  std::mutex mutex;
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= pending.size()) return;
      {
        std::lock_guard lock(mutex);
        if (failure) return;
      }
      const auto id = pending[i];
      try {
        auto entry = label_one(base.features[id], columns[id], corpus, client, options);
        std::lock_guard lock(mutex);
        if (journal.is_open()) journal << nlohmann::json(entry).dump() << '\n' << std::flush;
        done[id] = std::move(entry);
      } catch (...) {
        std::lock_guard lock(mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(options.concurrency, pending.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  FeatureCatalog out = base;
  for (auto id : todo) out.features[id] = done.at(id);
  return out;
}

}  // namespace saeforge
