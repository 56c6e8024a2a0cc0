// SPDX-License-Identifier: Apache-2.0
#include "saeforge/cli.hpp"

#include <csignal>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "saeforge/activations.hpp"
#include "saeforge/autointerp.hpp"
#include "saeforge/catalog.hpp"
#include "saeforge/checkpoint.hpp"
#include "saeforge/completion.hpp"
#include "saeforge/corpus.hpp"
#include "saeforge/embedding_client.hpp"
#include "saeforge/error.hpp"
#include "saeforge/families.hpp"
#include "saeforge/feature_analysis.hpp"
#include "saeforge/intervention_eval.hpp"
#include "saeforge/metrics.hpp"
#include "saeforge/search.hpp"
#include "saeforge/server.hpp"
#include "saeforge/trainer.hpp"

namespace saeforge {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

// Missing required input; reported as a usage error.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Flag values as parsed; empty strings mean "not given".
struct Flags {
  std::string config;
  std::string seed;
  std::string out;
  std::string summary_json;
  std::string corpus;
  std::string metadata;
  std::string embeddings;
  std::string checkpoint;
  std::string catalog;
  std::string forest;
  std::string small;
  std::string large;
  std::string queries;
  std::string mock_completions;
  std::string mock_embeddings;
  std::string journal;
  std::string host;
  std::string port;
  std::string val_fraction;
  std::string threshold;
  std::string trials;
  std::string epochs;
  bool grid = false;
  bool label_families = false;
};

// Config file with dotted-path lookups; flags take precedence.
class Settings {
 public:
  Settings(json config, const Flags& flags) : config_(std::move(config)), flags_(flags) {}

  const json* find(std::string_view path) const {
    const json* node = &config_;
    while (!path.empty()) {
      const auto dot = path.find('.');
      const std::string key(path.substr(0, dot));
      if (!node->is_object() || !node->contains(key)) return nullptr;
      node = &(*node)[key];
      path = dot == std::string_view::npos ? std::string_view{} : path.substr(dot + 1);
    }
    return node->is_null() ? nullptr : node;
  }

  json section(std::string_view path) const {
    const json* node = find(path);
    return node ? *node : json::object();
  }

  template <typename T>
  T get(std::string_view path, T fallback) const {
    const json* node = find(path);
    return node ? node->get<T>() : fallback;
  }

  std::string text(const std::string& flag, std::string_view path, std::string fallback = {}) const {
    if (!flag.empty()) return flag;
    return get<std::string>(path, std::move(fallback));
  }

  std::string required(const std::string& flag, std::string_view path, const std::string& name) const {
    auto value = text(flag, path);
    if (value.empty()) throw UsageError("missing " + name + " (flag or config '" + std::string(path) + "')");
    return value;
  }

  std::uint64_t seed() const {
    if (!flags_.seed.empty()) return std::stoull(flags_.seed);
    return get<std::uint64_t>("seed", 0);
  }

  const Flags& flags() const { return flags_; }

 private:
  json config_;
  const Flags& flags_;
};

fs::path metadata_for(const fs::path& embeddings, const std::string& explicit_metadata) {
  if (!explicit_metadata.empty()) return explicit_metadata;
  auto meta = embeddings;
  meta.replace_extension(".jsonl");
  return meta;
}

EmbeddingCorpus corpus_from(const Settings& s) {
  const fs::path emb = s.required(s.flags().corpus, "corpus.embeddings", "--corpus");
  const auto meta = metadata_for(emb, s.text(s.flags().metadata, "corpus.metadata"));
  auto corpus = load_corpus(emb, meta);
  if (!corpus.norm_stats) {
    throw ConfigError("corpus " + emb.string() + " has no normalization statistics; run ingest first");
  }
  return corpus;
}

SaeConfig sae_config(const Settings& s) {
  SaeConfig config = s.section("sae").get<SaeConfig>();
  config.seed = s.seed();
  if (!s.flags().epochs.empty()) config.epochs = std::stoul(s.flags().epochs);
  config.validate();
  return config;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  return json::parse(in);
}

std::unique_ptr<CompletionClient> completion_client(const Settings& s, std::string_view path) {
  if (!s.flags().mock_completions.empty()) {
    return std::make_unique<MockCompletionClient>(read_json_file(s.flags().mock_completions));
  }
  const json* section = s.find(path);
  if (!section) return nullptr;
  if (section->contains("mock")) {
    return std::make_unique<MockCompletionClient>(read_json_file((*section)["mock"].get<std::string>()));
  }
  return std::make_unique<HttpCompletionClient>(endpoint_from_json(*section, "/v1/chat/completions"));
}

std::unique_ptr<EmbeddingClient> embedding_client(const Settings& s) {
  std::string mock = s.flags().mock_embeddings;
  const json* section = s.find("embedding");
  if (mock.empty() && section && section->contains("mock")) mock = (*section)["mock"].get<std::string>();
  if (!mock.empty()) {
    return std::make_unique<MockEmbeddingClient>(
        read_json_file(mock).get<std::map<std::string, std::vector<float>>>());
  }
  if (!section) return nullptr;
  return std::make_unique<HttpEmbeddingClient>(endpoint_from_json(*section, "/v1/embeddings"));
}

void write_json(const fs::path& path, const json& value) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << value.dump(1) << '\n';
}

std::string substitute_grid(std::string pattern, std::size_t k, std::size_t n) {
  for (const auto& [key, value] : {std::pair{std::string("{k}"), k}, std::pair{std::string("{n}"), n}}) {
    for (std::size_t at; (at = pattern.find(key)) != std::string::npos;) {
      pattern.replace(at, key.size(), std::to_string(value));
    }
  }
  return pattern;
}

struct GridPoint {
  std::size_t k;
  std::size_t n;
  std::string checkpoint;
};

std::vector<GridPoint> grid_points(const Settings& s) {
  const auto ks = s.get<std::vector<std::size_t>>("grid.k", {});
  const auto ns = s.get<std::vector<std::size_t>>("grid.n", {});
  const auto pattern = s.get<std::string>("grid.checkpoint_pattern", "");
  if (ks.empty() || ns.empty() || pattern.empty()) {
    throw UsageError("--grid needs grid.k, grid.n and grid.checkpoint_pattern in the config");
  }
  std::vector<GridPoint> points;
  for (auto k : ks) {
    for (auto n : ns) points.push_back({k, n, substitute_grid(pattern, k, n)});
  }
  return points;
}

// ---- subcommands --------------------------------------------------------------

json run_ingest(const Settings& s) {
  const fs::path emb = s.required(s.flags().embeddings, "ingest.embeddings", "--embeddings");
  const fs::path meta = s.required(s.flags().metadata, "ingest.metadata", "--metadata");
  const std::string prefix = s.required(s.flags().out, "ingest.out", "--out");
  const double val_fraction = s.flags().val_fraction.empty() ? s.get<double>("ingest.val_fraction", 0.1)
                                                             : std::stod(s.flags().val_fraction);
  const auto raw = ingest_corpus(emb, meta);
  json outputs;
  if (val_fraction > 0.0) {
    const auto split = split_corpus(raw, val_fraction, s.seed());
    const auto train = normalize_corpus(split.train);
    const auto val = apply_normalization(split.val, *train.norm_stats);
    save_corpus(train, prefix + ".train.emb", prefix + ".train.jsonl");
    save_corpus(val, prefix + ".val.emb", prefix + ".val.jsonl");
    outputs = {{"train", prefix + ".train.emb"}, {"val", prefix + ".val.emb"},
               {"train_rows", train.size()}, {"val_rows", val.size()}};
  } else {
    const auto train = normalize_corpus(raw);
    save_corpus(train, prefix + ".train.emb", prefix + ".train.jsonl");
    outputs = {{"train", prefix + ".train.emb"}, {"train_rows", train.size()}};
  }
  outputs["dim"] = raw.dim();
  return outputs;
}

json train_one(const EmbeddingCorpus& corpus, const SaeConfig& config, const fs::path& out) {
  auto result = train(corpus, config);
  auto summary = result.log.summary();
  save_checkpoint(result.model, out, summary);
  json steps = json::array();
  for (const auto& step : result.log.steps) steps.push_back(step);
  write_json(out.string() + ".log.json", {{"summary", summary}, {"steps", steps}});
  const double nmse = normalized_mse(result.model, corpus);
  return {{"checkpoint", out.string()}, {"k", config.k}, {"n", config.n}, {"train_nmse", nmse},
          {"dead_latents", result.log.final_dead.size()}, {"steps", result.log.steps.size()}};
}

json run_train(const Settings& s) {
  const auto corpus = corpus_from(s);
  auto config = sae_config(s);
  if (s.flags().grid) {
    json runs = json::array();
    for (const auto& point : grid_points(s)) {
      config.k = point.k;
      config.n = point.n;
      config.k_aux = 0;
      config.validate();
      runs.push_back(train_one(corpus, config, point.checkpoint));
    }
    return {{"runs", runs}};
  }
  const fs::path out = s.required(s.flags().out, "checkpoint", "--out");
  return train_one(corpus, config, out);
}

json run_metrics(const Settings& s, std::ostream& out) {
  const auto corpus = corpus_from(s);
  std::vector<MetricsRow> rows;
  if (s.flags().grid) {
    for (const auto& point : grid_points(s)) {
      const auto model = load_checkpoint(point.checkpoint);
      rows.push_back(metrics_row(model, feature_stats(model, corpus)));
    }
  } else {
    const fs::path ckpt = s.required(s.flags().checkpoint, "checkpoint", "--checkpoint");
    const auto model = load_checkpoint(ckpt);
    rows.push_back(metrics_row(model, feature_stats(model, corpus)));
  }
  out << metrics_csv_header() << '\n';
  for (const auto& row : rows) out << metrics_csv_line(row) << '\n';
  if (!s.flags().out.empty()) write_metrics_csv(s.flags().out, rows);

  json result{{"rows", rows}};
  // Power-law fits L(n) per k over at least 3 sizes.
  std::map<std::size_t, std::pair<std::vector<double>, std::vector<double>>> by_k;
  for (const auto& row : rows) {
    by_k[row.k].first.push_back(static_cast<double>(row.n));
    by_k[row.k].second.push_back(row.mse);
  }
  json fits = json::array();
  for (const auto& [k, series] : by_k) {
    if (series.first.size() < 3) continue;
    try {
      const auto fit = fit_power_law(series.first, series.second);
      fits.push_back({{"k", k}, {"coefficient", fit.coefficient}, {"exponent", fit.exponent},
                      {"r_squared", fit.r_squared}});
    } catch (const FitError& e) {
      fits.push_back({{"k", k}, {"error", e.what()}});
    }
  }
  result["fits"] = fits;
  return result;
}

LabelOptions label_options(const Settings& s) {
  LabelOptions options;
  options.subject = s.get<std::string>("subject", options.subject);
  options.type = s.get<std::string>("type", "");
  options.seed = s.seed();
  options.concurrency = s.get<std::size_t>("label.concurrency", options.concurrency);
  const auto journal = s.text(s.flags().journal, "label.journal");
  if (!journal.empty()) options.journal = journal;
  options.features = s.get<std::vector<std::uint32_t>>("label.features", {});
  return options;
}

json run_label(const Settings& s) {
  const auto corpus = corpus_from(s);
  const auto model = load_checkpoint(s.required(s.flags().checkpoint, "checkpoint", "--checkpoint"));
  const fs::path out = s.required(s.flags().out, "catalog", "--out");
  auto client = completion_client(s, "completion");
  if (!client) throw UsageError("label needs a completion client (config 'completion' or --mock-completions)");
  const auto activations = encode_corpus(model, corpus);
  const auto stats = feature_stats(activations);
  const auto base = FeatureCatalog::from_model(model, &stats);
  const auto catalog = label_catalog(base, corpus, activations, *client, label_options(s));
  catalog.save(out);
  std::size_t labelled = 0, failed = 0;
  std::vector<double> pearsons;
  for (const auto& e : catalog.features) {
    labelled += e.label.has_value();
    failed += e.error.has_value();
    if (e.pearson) pearsons.push_back(*e.pearson);
  }
  std::sort(pearsons.begin(), pearsons.end());
  json median = pearsons.empty() ? json(nullptr) : json(pearsons[pearsons.size() / 2]);
  return {{"catalog", out.string()}, {"labelled", labelled}, {"failed", failed}, {"median_pearson", median}};
}

json run_families(const Settings& s) {
  const auto corpus = corpus_from(s);
  const auto model = load_checkpoint(s.required(s.flags().checkpoint, "checkpoint", "--checkpoint"));
  const fs::path out = s.required(s.flags().out, "forest", "--out");
  const auto catalog_path = s.text(s.flags().catalog, "catalog");
  const auto activations = encode_corpus(model, corpus);
  CooccurrenceOptions cooc;
  cooc.tau = s.get<double>("families.tau", cooc.tau);
  cooc.epsilon = s.get<double>("families.epsilon", cooc.epsilon);
  const auto graphs = build_cooccurrence(activations, cooc);
  FamilyOptions options;
  options.iterations = s.get<std::size_t>("families.iterations", options.iterations);
  options.dedup_jaccard = s.get<double>("families.dedup", options.dedup_jaccard);
  std::optional<FeatureCatalog> catalog;
  if (!catalog_path.empty()) {
    catalog = FeatureCatalog::load(catalog_path);
    if (s.get<bool>("families.filter", true)) {
      options.allowed = catalog->interpretable_mask(s.get<double>("families.min_f1", 0.8),
                                                    s.get<double>("families.min_pearson", 0.8));
    }
  }
  std::vector<double> densities(graphs.latents);
  for (std::size_t i = 0; i < graphs.latents; ++i) {
    densities[i] = graphs.documents ? graphs.f[i] / static_cast<double>(graphs.documents) : 0.0;
  }
  auto forest = extract_families(graphs, densities, options);
  std::size_t labelled = 0;
  if (s.flags().label_families) {
    if (!catalog) throw UsageError("--label-families needs --catalog");
    auto client = completion_client(s, "completion");
    if (!client) throw UsageError("--label-families needs a completion client");
    const auto columns = activations.columns();
    FamilyLabelOptions label_opts;
    label_opts.subject = s.get<std::string>("subject", label_opts.subject);
    label_opts.seed = s.seed();
    for (auto& family : forest.families) {
      try {
        const auto labelled_family = label_family(family, *catalog, corpus, columns, *client, label_opts);
        family.superfeature_label = labelled_family.label;
        family.metrics.family_f1 = labelled_family.score.f1;
        family.metrics.family_pearson = labelled_family.score.pearson;
        ++labelled;
      } catch (const ClientError&) {
        throw;
      } catch (const Error&) {
        // Recorded as unlabelled.
      }
    }
  }
  forest.save(out);
  std::vector<double> ratios;
  for (const auto& f : forest.families) {
    if (std::isfinite(f.metrics.r_pc)) ratios.push_back(f.metrics.r_pc);
  }
  std::sort(ratios.begin(), ratios.end());
  return {{"forest", out.string()},
          {"families", forest.families.size()},
          {"new_per_iteration", forest.new_per_iteration},
          {"labelled", labelled},
          {"median_finite_r_pc", ratios.empty() ? json(nullptr) : json(ratios[ratios.size() / 2])}};
}

json run_match(const Settings& s) {
  const auto small = FeatureCatalog::load(s.required(s.flags().small, "match.small", "--small"));
  const auto large = FeatureCatalog::load(s.required(s.flags().large, "match.large", "--large"));
  const fs::path out = s.required(s.flags().out, "match.out", "--out");
  const double threshold = s.flags().threshold.empty() ? s.get<double>("match.threshold", 0.95)
                                                       : std::stod(s.flags().threshold);
  const auto result = match_features(small, large, threshold);
  write_json(out, result);
  std::size_t recurrent = 0;
  for (const auto& p : result.pairs) recurrent += p.match_class == MatchClass::kRecurrent;
  return {{"matches", out.string()}, {"recurrent", recurrent}, {"novel", result.pairs.size() - recurrent}};
}

std::shared_ptr<SearchIndex> index_from(const Settings& s, bool need_catalog) {
  auto corpus = std::make_shared<EmbeddingCorpus>(corpus_from(s));
  auto model = std::make_shared<SaeModel>(load_checkpoint(s.required(s.flags().checkpoint, "checkpoint", "--checkpoint")));
  std::shared_ptr<FeatureCatalog> catalog;
  const auto catalog_path = need_catalog ? s.required(s.flags().catalog, "catalog", "--catalog")
                                         : s.text(s.flags().catalog, "catalog");
  if (!catalog_path.empty()) catalog = std::make_shared<FeatureCatalog>(FeatureCatalog::load(catalog_path));
  std::shared_ptr<FamilyForest> forest;
  const auto forest_path = s.text(s.flags().forest, "forest");
  if (!forest_path.empty()) forest = std::make_shared<FamilyForest>(FamilyForest::load(forest_path));
  return build_index(corpus, model, catalog, forest);
}

std::vector<std::string> read_queries(const Settings& s) {
  if (!s.flags().queries.empty()) {
    std::ifstream in(s.flags().queries);
    if (!in) throw ConfigError("cannot open queries " + s.flags().queries);
    std::vector<std::string> queries;
    for (std::string line; std::getline(in, line);) {
      if (!line.empty()) queries.push_back(line);
    }
    return queries;
  }
  auto queries = s.get<std::vector<std::string>>("eval.queries", {});
  if (queries.empty()) throw UsageError("steer-eval needs --queries or eval.queries");
  return queries;
}

json run_steer_eval(const Settings& s) {
  const auto index = index_from(s, true);
  const std::string prefix = s.required(s.flags().out, "eval.out", "--out");
  const auto queries = read_queries(s);
  auto embed_client = embedding_client(s);
  QueryEmbedder embedder(embed_client.get(), *index->corpus->norm_stats);
  auto judge = completion_client(s, s.find("judge") ? "judge" : "completion");
  if (!judge) throw UsageError("steer-eval needs a judge client (config 'judge' or 'completion')");
  auto rewriter = completion_client(s, s.find("rewriter") ? "rewriter" : "completion");
  EvalOptions options;
  options.trials = s.flags().trials.empty() ? s.get<std::size_t>("eval.trials", options.trials)
                                            : std::stoul(s.flags().trials);
  options.top_k = s.get<std::size_t>("eval.top_k", options.top_k);
  options.seed = s.seed();
  options.min_f1 = s.get<double>("eval.min_f1", options.min_f1);
  options.min_pearson = s.get<double>("eval.min_pearson", options.min_pearson);
  options.lambda_up_max = s.get<double>("eval.lambda_up_max", options.lambda_up_max);
  options.fidelity_bins = s.get<std::size_t>("eval.fidelity_bins", options.fidelity_bins);
  options.concurrency = s.get<std::size_t>("eval.concurrency", options.concurrency);
  const bool baseline = s.get<bool>("eval.baseline", true);
  const auto report = evaluate_interventions(queries, *index, embedder, *judge,
                                             baseline ? rewriter.get() : nullptr, options);
  report.write_jsonl(prefix + ".jsonl");
  report.write_csv(prefix + ".csv");
  auto summary = report.summary();
  summary["records_path"] = prefix + ".jsonl";
  summary["curve_path"] = prefix + ".csv";
  return summary;
}

SearchServer* g_server = nullptr;

void handle_signal(int) {
  if (g_server) g_server->stop();
}

json run_serve(const Settings& s, std::ostream& out) {
  auto index = index_from(s, false);
  auto client = embedding_client(s);
  auto embedder = std::make_shared<QueryEmbedder>(client.get(), *index->corpus->norm_stats,
                                                  s.get<std::size_t>("server.cache_capacity", 4096));
  const auto cache_path = s.get<std::string>("server.cache_path", "");
  if (!cache_path.empty()) embedder->cache().load(cache_path);
  const auto host = s.text(s.flags().host, "server.host", "127.0.0.1");
  const int port = s.flags().port.empty() ? s.get<int>("server.port", 8080) : std::stoi(s.flags().port);
  SearchServer server(index, embedder);
  g_server = &server;
  std::signal(SIGINT, handle_signal);
  std::signal(SIGTERM, handle_signal);
  out << "listening on http://" << host << ':' << port << std::endl;
  const bool ok = server.listen(host, port);
  g_server = nullptr;
  if (!cache_path.empty()) embedder->cache().save(cache_path);
  if (!ok) throw ConfigError("cannot bind " + host + ":" + std::to_string(port));
  return {{"host", host}, {"port", port}};
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sparse autoencoder toolkit for document embeddings", "saeforge"};
  app.require_subcommand(1, 1);
  Flags flags;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config, "JSON configuration file");
    sub->add_option("--seed", flags.seed, "Random seed (overrides config)");
    sub->add_option("--out", flags.out, "Primary output path or prefix");
    sub->add_option("--summary-json", flags.summary_json, "Write a machine-readable run summary here");
  };
  auto corpus_flags = [&](CLI::App* sub) {
    sub->add_option("--corpus", flags.corpus, "Normalized embedding file (metadata: same stem, .jsonl)");
    sub->add_option("--metadata", flags.metadata, "Metadata JSONL (defaults next to --corpus)");
  };

  auto* ingest = app.add_subcommand("ingest", "Validate, split and normalize a raw corpus");
  common(ingest);
  ingest->add_option("--embeddings", flags.embeddings, "Raw embedding matrix file");
  ingest->add_option("--metadata", flags.metadata, "Metadata JSONL");
  ingest->add_option("--val-fraction", flags.val_fraction, "Validation fraction (0 disables the split)");

  auto* train_cmd = app.add_subcommand("train", "Train a top-k SAE");
  common(train_cmd);
  corpus_flags(train_cmd);
  train_cmd->add_option("--epochs", flags.epochs, "Override sae.epochs");
  train_cmd->add_flag("--grid", flags.grid, "Train every (k, n) of the config grid");

  auto* metrics = app.add_subcommand("metrics", "Normalized MSE, density and activation metrics");
  common(metrics);
  corpus_flags(metrics);
  metrics->add_option("--checkpoint", flags.checkpoint, "Model checkpoint");
  metrics->add_flag("--grid", flags.grid, "Evaluate every grid checkpoint and fit power laws");

  auto* label = app.add_subcommand("label", "Label and score features with the Interpreter/Predictor protocol");
  common(label);
  corpus_flags(label);
  label->add_option("--checkpoint", flags.checkpoint, "Model checkpoint");
  label->add_option("--mock-completions", flags.mock_completions, "Scripted completion responses (JSON)");
  label->add_option("--journal", flags.journal, "Progress journal for resumable runs");

  auto* families = app.add_subcommand("families", "Extract feature families");
  common(families);
  corpus_flags(families);
  families->add_option("--checkpoint", flags.checkpoint, "Model checkpoint");
  families->add_option("--catalog", flags.catalog, "Labelled catalog (enables the interpretability filter)");
  families->add_option("--mock-completions", flags.mock_completions, "Scripted completion responses (JSON)");
  families->add_flag("--label-families", flags.label_families, "Generate and score superfeature labels");

  auto* match = app.add_subcommand("match", "Match features of a larger model to a smaller one");
  common(match);
  match->add_option("--small", flags.small, "Catalog of the smaller model");
  match->add_option("--large", flags.large, "Catalog of the larger model");
  match->add_option("--threshold", flags.threshold, "Cosine threshold for recurrent features");

  auto* steer_eval = app.add_subcommand("steer-eval", "Evaluate intervention precision against query rewriting");
  common(steer_eval);
  corpus_flags(steer_eval);
  steer_eval->add_option("--checkpoint", flags.checkpoint, "Model checkpoint");
  steer_eval->add_option("--catalog", flags.catalog, "Labelled catalog");
  steer_eval->add_option("--queries", flags.queries, "Query file, one per line");
  steer_eval->add_option("--trials", flags.trials, "Number of trials");
  steer_eval->add_option("--mock-completions", flags.mock_completions, "Scripted judge/rewriter responses");
  steer_eval->add_option("--mock-embeddings", flags.mock_embeddings, "Scripted query embeddings (JSON)");

  auto* serve = app.add_subcommand("serve", "Serve search and steering over HTTP");
  common(serve);
  corpus_flags(serve);
  serve->add_option("--checkpoint", flags.checkpoint, "Model checkpoint");
  serve->add_option("--catalog", flags.catalog, "Labelled catalog");
  serve->add_option("--forest", flags.forest, "Family forest");
  serve->add_option("--host", flags.host, "Bind address");
  serve->add_option("--port", flags.port, "Port");
  serve->add_option("--mock-embeddings", flags.mock_embeddings, "Scripted query embeddings (JSON)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  CLI::App* chosen = app.get_subcommands().front();
  const std::string command = chosen->get_name();
  json summary{{"command", command}};
  int code = 0;
  try {
    json config = json::object();
    if (!flags.config.empty()) {
      std::ifstream in(flags.config);
      if (!in) throw UsageError("cannot open config " + flags.config);
      try {
        config = json::parse(in);
      } catch (const json::parse_error& e) {
        throw UsageError("config " + flags.config + ": " + e.what());
      }
    }
    const Settings settings(std::move(config), flags);
    json result;
    if (command == "ingest") result = run_ingest(settings);
    else if (command == "train") result = run_train(settings);
    else if (command == "metrics") result = run_metrics(settings, out);
    else if (command == "label") result = run_label(settings);
    else if (command == "families") result = run_families(settings);
    else if (command == "match") result = run_match(settings);
    else if (command == "steer-eval") result = run_steer_eval(settings);
    else if (command == "serve") result = run_serve(settings, out);
    summary["status"] = "ok";
    summary["result"] = result;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    summary["status"] = "usage_error";
    summary["error"] = e.what();
    code = 1;
  } catch (const std::invalid_argument& e) {
    err << "usage error: bad numeric flag (" << e.what() << ")\n";
    summary["status"] = "usage_error";
    summary["error"] = e.what();
    code = 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    summary["status"] = "error";
    summary["error"] = e.what();
    code = 2;
  }
  if (!flags.summary_json.empty()) {
    try {
      write_json(flags.summary_json, summary);
    } catch (const std::exception& e) {
      err << "error: " << e.what() << '\n';
      code = code == 0 ? 2 : code;
    }
  }
  return code;
}

}  // namespace saeforge
