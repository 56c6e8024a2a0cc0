// SPDX-License-Identifier: Apache-2.0
#include "saeforge/intervention_eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <random>
#include <set>
#include <thread>

#include "saeforge/autointerp.hpp"
#include "saeforge/error.hpp"
#include "saeforge/prompts.hpp"
#include "saeforge/simd.hpp"
#include "saeforge/steering.hpp"

namespace saeforge {

namespace {

std::vector<std::string> ids_of(const SearchResult& r) {
  std::vector<std::string> out;
  for (const auto& h : r.hits) out.push_back(h.doc_id);
  return out;
}

std::vector<RetrievedText> texts_of(const SearchIndex& index, const SearchResult& r) {
  std::vector<RetrievedText> out;
  for (const auto& h : r.hits) out.push_back({h.title, index.corpus->docs[h.row].abstract_text});
  return out;
}

std::vector<float> to_raw(const SearchIndex& index, std::span<const float> v) {
  if (index.corpus->norm_stats) return index.corpus->norm_stats->denormalize(v);
  return {v.begin(), v.end()};
}

struct Question {
  std::vector<std::uint32_t> option_features;
  char answer = 'A';
};

Question make_question(std::uint32_t planted, const std::vector<std::uint32_t>& distractor_pool,
                       std::size_t count, std::mt19937_64& rng) {
  std::vector<std::uint32_t> pool = distractor_pool;
  for (std::size_t i = 0; i + 1 < count && i < pool.size(); ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(std::min(pool.size(), count - 1));
  pool.push_back(planted);
  std::shuffle(pool.begin(), pool.end(), rng);
  Question q;
  q.option_features = pool;
  const auto at = std::find(pool.begin(), pool.end(), planted) - pool.begin();
  q.answer = static_cast<char>('A' + at);
  return q;
}

std::optional<char> ask_judge(CompletionClient& judge, const SearchIndex& index, const std::string& query,
                              const SearchResult& before, const SearchResult& after, bool up,
                              const Question& question, std::size_t abstract_chars, std::size_t trial) {
  std::vector<JudgeOption> options;
  for (std::size_t i = 0; i < question.option_features.size(); ++i) {
    options.push_back({static_cast<char>('A' + i), index.label_of(question.option_features[i]).value_or("")});
  }
  const auto before_texts = texts_of(index, before);
  const auto after_texts = texts_of(index, after);
  CompletionRequest request;
  request.role = Role::kJudge;
  request.prompt = render_judge_prompt(query, before_texts, after_texts, up, options, abstract_chars);
  request.context = {{"trial", trial},
                     {"direction", up ? "up" : "down"},
                     {"answer", std::string(1, question.answer)},
                     {"options", options.size()}};
  return parse_judge_answer(judge.complete(request));
}

struct TrialOutcome {
  std::vector<EvalRecord> records;
  std::optional<std::string> skipped;
};

TrialOutcome run_trial(std::size_t trial, const std::vector<std::string>& queries, const SearchIndex& index,
                       QueryEmbedder& embedder, CompletionClient& judge, CompletionClient* rewriter,
                       const std::vector<std::uint32_t>& eligible, const EvalOptions& options) {
  TrialOutcome out;
  std::mt19937_64 rng(feature_seed(options.seed, static_cast<std::uint32_t>(trial)));
  const std::string& query = queries[trial % queries.size()];
  std::vector<float> q;
  try {
    q = embedder.embed_query(query);
  } catch (const EmbedUnavailable& e) {
    out.skipped = e.what();
    return out;
  }
  const auto& model = *index.model;
  const auto code = model.encode(q);
  const std::set<std::uint32_t> in_query(code.indices.begin(), code.indices.end());

  std::vector<std::uint32_t> downs;
  for (auto f : eligible) {
    if (in_query.count(f)) downs.push_back(f);
  }
  if (downs.empty()) {
    out.skipped = "no eligible feature among the query's active features";
    return out;
  }
  const auto i = downs[std::uniform_int_distribution<std::size_t>(0, downs.size() - 1)(rng)];
  std::vector<std::uint32_t> ups;
  for (auto f : eligible) {
    if (in_query.count(f)) continue;
    if (simd::dot<float>(model.decoder_column(i), model.decoder_column(f)) < options.max_pair_cosine) ups.push_back(f);
  }
  if (ups.empty()) {
    out.skipped = "no eligible feature outside the query's active features";
    return out;
  }
  const auto j = ups[std::uniform_int_distribution<std::size_t>(0, ups.size() - 1)(rng)];
  const double lambda_up = std::uniform_real_distribution<double>(0.0, options.lambda_up_max)(rng);

  Intervention iv;
  iv.edits[i] = options.lambda_down;
  iv.edits[j] = lambda_up;
  const auto steered = apply_intervention(model, q, iv);
  const auto before = search(index, q, options.top_k);
  const auto after = search(index, steered.modified, options.top_k);
  const double fidelity = cosine_similarity(to_raw(index, steered.original), to_raw(index, steered.modified));

  // Distractors avoid every feature active on the query or any retrieved doc.
  std::set<std::uint32_t> excluded = in_query;
  excluded.insert(j);
  for (const auto* r : {&before, &after}) {
    for (const auto& h : r->hits) {
      for (auto f : index.activations.row_features(h.row)) excluded.insert(f);
    }
  }
  std::vector<std::uint32_t> distractors;
  for (auto f : eligible) {
    if (!excluded.count(f)) distractors.push_back(f);
  }
  if (distractors.size() + 1 < options.options) {
    // Small catalogs: fall back to any other eligible feature.
    distractors.clear();
    for (auto f : eligible) {
      if (f != i && f != j) distractors.push_back(f);
    }
  }
  if (distractors.size() + 1 < options.options) {
    out.skipped = "not enough eligible features for distractors";
    return out;
  }

  std::optional<SearchResult> baseline_after;
  std::string rewritten;
  double baseline_fidelity = 0.0;
  try {
    if (rewriter) {
      CompletionRequest request;
      request.role = Role::kRewriter;
      request.prompt = render_rewriter_prompt(query, index.label_of(j).value_or(""), index.label_of(i).value_or(""));
      request.context = {{"trial", trial}, {"up", j}, {"down", i}};
      rewritten = parse_rewritten_query(rewriter->complete(request));
      const auto raw_original = embedder.embed_raw(query);
      const auto raw_rewritten = embedder.embed_raw(rewritten);
      baseline_fidelity = cosine_similarity(raw_original, raw_rewritten);
      baseline_after = search(index, embedder.embed_query(rewritten), options.top_k);
    }
    for (bool up : {true, false}) {
      const auto planted = up ? j : i;
      auto pool = distractors;
      std::erase(pool, planted);
      if (up) std::erase(pool, i);
      const auto question = make_question(planted, pool, options.options, rng);
      EvalRecord record;
      record.trial = trial;
      record.query = query;
      record.direction = up ? "up" : "down";
      record.feature_down = i;
      record.feature_up = j;
      record.lambda_up = lambda_up;
      record.before = ids_of(before);
      record.after = ids_of(after);
      record.option_features = question.option_features;
      record.answer = question.answer;
      record.fidelity = fidelity;
      record.verdict = ask_judge(judge, index, query, before, after, up, question, options.abstract_chars, trial);
      record.correct = record.verdict == question.answer;
      if (baseline_after) {
        BaselineOutcome b;
        b.rewritten_query = rewritten;
        b.after = ids_of(*baseline_after);
        b.fidelity = baseline_fidelity;
        b.verdict = ask_judge(judge, index, query, before, *baseline_after, up, question, options.abstract_chars, trial);
        b.correct = b.verdict == question.answer;
        record.baseline = std::move(b);
      }
      out.records.push_back(std::move(record));
    }
  } catch (const ClientError& e) {
    out.records.clear();
    out.skipped = e.what();
  } catch (const EmbedUnavailable& e) {
    out.records.clear();
    out.skipped = e.what();
  }
  return out;
}

std::size_t bin_of(double fidelity, std::size_t bins) {
  const double clamped = std::clamp(fidelity, 0.0, 1.0);
  return std::min(bins - 1, static_cast<std::size_t>(clamped * static_cast<double>(bins)));
}

}  // namespace

void to_json(nlohmann::json& j, const EvalRecord& r) {
  auto letter = [](std::optional<char> c) { return c ? nlohmann::json(std::string(1, *c)) : nlohmann::json(nullptr); };
  j = nlohmann::json{{"trial", r.trial},
                     {"query", r.query},
                     {"direction", r.direction},
                     {"feature_down", r.feature_down},
                     {"feature_up", r.feature_up},
                     {"lambda_up", r.lambda_up},
                     {"before", r.before},
                     {"after", r.after},
                     {"option_features", r.option_features},
                     {"answer", std::string(1, r.answer)},
                     {"verdict", letter(r.verdict)},
                     {"correct", r.correct},
                     {"fidelity", r.fidelity}};
  if (r.baseline) {
    j["baseline"] = {{"rewritten_query", r.baseline->rewritten_query},
                     {"after", r.baseline->after},
                     {"verdict", letter(r.baseline->verdict)},
                     {"correct", r.baseline->correct},
                     {"fidelity", r.baseline->fidelity}};
    j["baseline_correct"] = r.baseline->correct;
  } else {
    j["baseline"] = nullptr;
    j["baseline_correct"] = nullptr;
  }
}

EvalReport evaluate_interventions(const std::vector<std::string>& queries, const SearchIndex& index,
                                  QueryEmbedder& embedder, CompletionClient& judge,
                                  CompletionClient* rewriter, const EvalOptions& options) {
  if (queries.empty()) throw ConfigError("evaluation needs at least one query");
  if (!index.catalog) throw ConfigError("evaluation needs a labelled catalog");
  if (options.options < 2 || options.options > 26) throw ConfigError("options must be in [2, 26]");
  if (options.fidelity_bins == 0) throw ConfigError("fidelity_bins must be positive");
  std::vector<std::uint32_t> eligible;
  for (const auto& e : index.catalog->features) {
    if (e.label && e.interpretable(options.min_f1, options.min_pearson, true)) eligible.push_back(e.id);
  }

  std::vector<TrialOutcome> outcomes(options.trials);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t; (t = next.fetch_add(1)) < options.trials;) {
      outcomes[t] = run_trial(t, queries, index, embedder, judge, rewriter, eligible, options);
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(options.concurrency, options.trials));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  EvalReport report;
  report.bins.resize(options.fidelity_bins);
  for (std::size_t b = 0; b < options.fidelity_bins; ++b) {
    report.bins[b].lower = static_cast<double>(b) / options.fidelity_bins;
    report.bins[b].upper = static_cast<double>(b + 1) / options.fidelity_bins;
  }
  std::size_t sae_correct = 0, rewrite_total = 0, rewrite_correct = 0;
  for (std::size_t t = 0; t < outcomes.size(); ++t) {
    if (outcomes[t].skipped) report.skipped.emplace_back(t, *outcomes[t].skipped);
    for (auto& r : outcomes[t].records) {
      auto& bin = report.bins[bin_of(r.fidelity, options.fidelity_bins)];
      ++bin.sae_count;
      bin.sae_correct += r.correct;
      sae_correct += r.correct;
      if (r.baseline) {
        auto& bb = report.bins[bin_of(r.baseline->fidelity, options.fidelity_bins)];
        ++bb.rewrite_count;
        bb.rewrite_correct += r.baseline->correct;
        ++rewrite_total;
        rewrite_correct += r.baseline->correct;
      }
      report.records.push_back(std::move(r));
    }
  }
  if (!report.records.empty()) report.sae_accuracy = static_cast<double>(sae_correct) / report.records.size();
  if (rewrite_total > 0) report.rewrite_accuracy = static_cast<double>(rewrite_correct) / rewrite_total;
  return report;
}

void EvalReport::write_jsonl(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  for (const auto& r : records) out << nlohmann::json(r).dump() << '\n';
}

void EvalReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "fidelity_bin,sae_accuracy,rewrite_accuracy,sae_count,rewrite_count\n";
  auto cell = [](std::size_t correct, std::size_t count) {
    if (count == 0) return std::string{};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", static_cast<double>(correct) / count);
    return std::string(buf);
  };
  for (const auto& b : bins) {
    char center[32];
    std::snprintf(center, sizeof center, "%.2f", 0.5 * (b.lower + b.upper));
    out << center << ',' << cell(b.sae_correct, b.sae_count) << ',' << cell(b.rewrite_correct, b.rewrite_count)
        << ',' << b.sae_count << ',' << b.rewrite_count << '\n';
  }
}

nlohmann::json EvalReport::summary() const {
  return {{"records", records.size()},
          {"skipped_trials", skipped.size()},
          {"sae_accuracy", sae_accuracy},
          {"rewrite_accuracy", rewrite_accuracy ? nlohmann::json(*rewrite_accuracy) : nlohmann::json(nullptr)}};
}

}  // namespace saeforge
