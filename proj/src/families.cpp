// SPDX-License-Identifier: Apache-2.0
#include "saeforge/families.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "saeforge/error.hpp"
#include "saeforge/mst.hpp"
#include "saeforge/prompts.hpp"

namespace saeforge {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool denser(std::span<const double> densities, std::uint32_t a, std::uint32_t b) {
  return densities[a] != densities[b] ? densities[a] > densities[b] : a < b;
}

// Non-finite values are written as null plus, for R, a flag.
nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

double read_or(const nlohmann::json& j, const char* key, double fallback) {
  auto it = j.find(key);
  return (it == j.end() || it->is_null()) ? fallback : it->get<double>();
}

}  // namespace

std::vector<std::uint32_t> Family::members() const {
  std::vector<std::uint32_t> out = children;
  out.push_back(parent);
  std::sort(out.begin(), out.end());
  return out;
}

const Family& FamilyForest::at(std::uint32_t id) const {
  if (id >= families.size()) throw NotFound("family " + std::to_string(id));
  return families[id];
}

void to_json(nlohmann::json& j, const Family& f) {
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : f.edges) edges.push_back({{"from", e.from}, {"to", e.to}, {"weight", e.weight}});
  const auto& m = f.metrics;
  nlohmann::json metrics{{"size", m.size},
                         {"r_pc", finite_or_null(m.r_pc)},
                         {"r_pc_infinite", m.r_pc_infinite},
                         {"c_block_ratio", finite_or_null(m.c_block_ratio)},
                         {"d_block_ratio", finite_or_null(m.d_block_ratio)},
                         {"family_f1", m.family_f1 ? nlohmann::json(*m.family_f1) : nlohmann::json(nullptr)},
                         {"family_pearson",
                          m.family_pearson ? nlohmann::json(*m.family_pearson) : nlohmann::json(nullptr)}};
  j = nlohmann::json{{"id", f.id},
                     {"parent", f.parent},
                     {"children", f.children},
                     {"iteration", f.iteration},
                     {"superfeature_label", f.superfeature_label ? nlohmann::json(*f.superfeature_label)
                                                                 : nlohmann::json(nullptr)},
                     {"metrics", metrics},
                     {"edges", edges}};
}

void from_json(const nlohmann::json& j, Family& f) {
  f.id = j.at("id").get<std::uint32_t>();
  f.parent = j.at("parent").get<std::uint32_t>();
  f.children = j.at("children").get<std::vector<std::uint32_t>>();
  f.iteration = j.value("iteration", std::size_t{1});
  const auto& label = j.at("superfeature_label");
  f.superfeature_label = label.is_null() ? std::nullopt : std::optional(label.get<std::string>());
  const auto& m = j.at("metrics");
  f.metrics.size = m.value("size", f.children.size() + 1);
  f.metrics.r_pc_infinite = m.value("r_pc_infinite", false);
  f.metrics.r_pc = f.metrics.r_pc_infinite ? kInf : read_or(m, "r_pc", kNaN);
  f.metrics.c_block_ratio = read_or(m, "c_block_ratio", kNaN);
  f.metrics.d_block_ratio = read_or(m, "d_block_ratio", kNaN);
  if (m.contains("family_f1") && !m["family_f1"].is_null()) f.metrics.family_f1 = m["family_f1"].get<double>();
  if (m.contains("family_pearson") && !m["family_pearson"].is_null()) {
    f.metrics.family_pearson = m["family_pearson"].get<double>();
  }
  f.edges.clear();
  for (const auto& e : j.at("edges")) {
    f.edges.push_back({e.at("from").get<std::uint32_t>(), e.at("to").get<std::uint32_t>(),
                       e.at("weight").get<double>()});
  }
}

void to_json(nlohmann::json& j, const FamilyForest& forest) {
  j = nlohmann::json{{"iterations", forest.iterations},
                     {"new_per_iteration", forest.new_per_iteration},
                     {"c_block_ratio", finite_or_null(forest.c_block_ratio)},
                     {"d_block_ratio", finite_or_null(forest.d_block_ratio)},
                     {"families", forest.families}};
}

void from_json(const nlohmann::json& j, FamilyForest& forest) {
  forest.iterations = j.value("iterations", std::size_t{0});
  forest.new_per_iteration = j.value("new_per_iteration", std::vector<std::size_t>{});
  forest.c_block_ratio = read_or(j, "c_block_ratio", kNaN);
  forest.d_block_ratio = read_or(j, "d_block_ratio", kNaN);
  forest.families = j.at("families").get<std::vector<Family>>();
}

void FamilyForest::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write family forest " + path.string());
  out << nlohmann::json(*this).dump(1) << '\n';
}

FamilyForest FamilyForest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open family forest " + path.string());
  try {
    return nlohmann::json::parse(in).get<FamilyForest>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("family forest " + path.string() + ": " + e.what());
  }
}

double jaccard(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b) {
  std::set<std::uint32_t> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::size_t common = 0;
  for (auto x : sa) common += sb.count(x);
  const std::size_t uni = sa.size() + sb.size() - common;
  return uni == 0 ? 1.0 : static_cast<double>(common) / static_cast<double>(uni);
}

FamilyForest extract_families(const CoActivationGraphs& graphs, const FamilyOptions& options) {
  std::vector<double> densities(graphs.latents, 0.0);
  if (graphs.documents > 0) {
    for (std::size_t i = 0; i < graphs.latents; ++i) densities[i] = graphs.f[i] / graphs.documents;
  }
  return extract_families(graphs, densities, options);
}

FamilyForest extract_families(const CoActivationGraphs& graphs, std::span<const double> densities,
                              const FamilyOptions& options) {
  const std::size_t n = graphs.latents;
  if (densities.size() != n) throw ConfigError("densities length differs from latent count");
  if (!options.allowed.empty() && options.allowed.size() != n) {
    throw ConfigError("allowed mask length differs from latent count");
  }
  std::vector<bool> removed(n, false);
  auto active = [&](std::uint32_t i) {
    return !removed[i] && (options.allowed.empty() || options.allowed[i]);
  };

  FamilyForest forest;
  forest.iterations = options.iterations;
  for (std::size_t iteration = 1; iteration <= options.iterations; ++iteration) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, double> weights;
    for (std::uint32_t i = 0; i < n; ++i) {
      if (!active(i)) continue;
      for (const auto& [j, w] : graphs.c_norm[i]) {
        if (j == i || !active(j)) continue;
        auto& slot = weights[{std::min(i, j), std::max(i, j)}];
        slot = std::max(slot, w);
      }
    }
    std::vector<WeightedEdge> edges;
    edges.reserve(weights.size());
    for (const auto& [key, w] : weights) edges.push_back({key.first, key.second, w});
    const auto tree = maximum_spanning_forest(n, std::move(edges));

    std::vector<std::vector<std::pair<std::uint32_t, double>>> kids(n);
    std::vector<bool> has_parent(n, false);
    for (const auto& e : tree) {
      const bool u_parent = denser(densities, e.u, e.v);
      const auto p = u_parent ? e.u : e.v;
      const auto c = u_parent ? e.v : e.u;
      kids[p].emplace_back(c, e.weight);
      has_parent[c] = true;
    }
    std::vector<std::uint32_t> roots;
    for (std::uint32_t i = 0; i < n; ++i) {
      if (!has_parent[i] && !kids[i].empty()) roots.push_back(i);
    }
    std::sort(roots.begin(), roots.end(),
              [&](std::uint32_t a, std::uint32_t b) { return denser(densities, a, b); });
    for (auto& list : kids) std::sort(list.begin(), list.end());

    // Pre-order walk: every internal node heads a (sub-)family.
    std::vector<std::uint32_t> internal;
    std::vector<std::uint32_t> stack;
    for (auto r : roots) {
      stack.push_back(r);
      while (!stack.empty()) {
        const auto node = stack.back();
        stack.pop_back();
        if (!kids[node].empty()) internal.push_back(node);
        for (auto it = kids[node].rbegin(); it != kids[node].rend(); ++it) stack.push_back(it->first);
      }
    }

    std::size_t kept = 0;
    for (auto p : internal) {
      Family family;
      family.parent = p;
      family.iteration = iteration;
      std::vector<std::uint32_t> walk{p};
      while (!walk.empty()) {
        const auto node = walk.back();
        walk.pop_back();
        for (const auto& [child, w] : kids[node]) {
          family.children.push_back(child);
          family.edges.push_back({node, child, w});
          walk.push_back(child);
        }
      }
      std::sort(family.children.begin(), family.children.end());
      const auto members = family.members();
      bool duplicate = false;
      for (const auto& other : forest.families) {
        if (jaccard(members, other.members()) > options.dedup_jaccard) {
          duplicate = true;
          break;
        }
      }
      if (duplicate) continue;
      family.id = static_cast<std::uint32_t>(forest.families.size());
      family.metrics.size = members.size();
      forest.families.push_back(std::move(family));
      ++kept;
    }
    forest.new_per_iteration.push_back(kept);
    for (auto p : internal) removed[p] = true;
  }
  for (auto& family : forest.families) parent_child_ratio(family, graphs, family.metrics);
  compute_family_metrics(forest, graphs, densities);
  return forest;
}

void parent_child_ratio(const Family& family, const CoActivationGraphs& graphs,
                        FamilyMetrics& metrics) {
  const auto& c = family.children;
  metrics.size = c.size() + 1;
  metrics.r_pc_infinite = false;
  if (c.empty()) {
    metrics.r_pc = 0.0;
    return;
  }
  double parent_sum = 0.0;
  for (auto child : c) parent_sum += graphs.c_raw(family.parent, child);
  const double numerator = parent_sum / static_cast<double>(c.size());
  double pair_sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < c.size(); ++a) {
    for (std::size_t b = a + 1; b < c.size(); ++b) {
      pair_sum += graphs.c_raw(c[a], c[b]);
      ++pairs;
    }
  }
  if (pairs == 0 || pair_sum == 0.0) {
    metrics.r_pc = kInf;
    metrics.r_pc_infinite = true;
    return;
  }
  metrics.r_pc = numerator / (pair_sum / static_cast<double>(pairs));
}

std::vector<std::uint32_t> greedy_block_order(const FamilyForest& forest,
                                              std::span<const double> densities) {
  const std::size_t n = densities.size();
  std::vector<std::size_t> by_size(forest.families.size());
  std::iota(by_size.begin(), by_size.end(), std::size_t{0});
  std::stable_sort(by_size.begin(), by_size.end(), [&](std::size_t a, std::size_t b) {
    return forest.families[a].children.size() > forest.families[b].children.size();
  });
  std::vector<bool> placed(n, false);
  std::vector<std::uint32_t> order;
  order.reserve(n);
  for (auto f : by_size) {
    const auto& family = forest.families[f];
    if (!placed[family.parent]) {
      placed[family.parent] = true;
      order.push_back(family.parent);
    }
    for (auto c : family.children) {
      if (!placed[c]) {
        placed[c] = true;
        order.push_back(c);
      }
    }
  }
  std::vector<std::uint32_t> rest;
  for (std::uint32_t i = 0; i < n; ++i) {
    if (!placed[i]) rest.push_back(i);
  }
  std::sort(rest.begin(), rest.end(), [&](std::uint32_t a, std::uint32_t b) { return denser(densities, a, b); });
  order.insert(order.end(), rest.begin(), rest.end());
  return order;
}

void compute_family_metrics(FamilyForest& forest, const CoActivationGraphs& graphs,
                            std::span<const double> densities) {
  const std::size_t n = graphs.latents;
  // Block id per feature: the family that claimed it first in greedy order,
  // or a singleton block.
  std::vector<std::size_t> by_size(forest.families.size());
  std::iota(by_size.begin(), by_size.end(), std::size_t{0});
  std::stable_sort(by_size.begin(), by_size.end(), [&](std::size_t a, std::size_t b) {
    return forest.families[a].children.size() > forest.families[b].children.size();
  });
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> block(n, kNone);
  std::vector<std::vector<std::uint32_t>> family_block(forest.families.size());
  for (auto f : by_size) {
    for (auto m : forest.families[f].members()) {
      if (block[m] == kNone) {
        block[m] = f;
        family_block[f].push_back(m);
      }
    }
  }
  std::size_t next_block = forest.families.size();
  for (auto i : greedy_block_order(forest, densities)) {
    if (block[i] == kNone) block[i] = next_block++;
  }

  auto ratio = [&](const Matrix<double>& m, const std::vector<std::uint32_t>& members) {
    if (members.size() < 2) return kNaN;
    double in = 0.0, off = 0.0;
    std::size_t in_count = 0, off_count = 0;
    const std::size_t b = block[members.front()];
    for (auto i : members) {
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        if (block[j] == b) {
          in += m(i, j);
          ++in_count;
        } else {
          off += m(i, j);
          ++off_count;
        }
      }
    }
    const double in_mean = in / static_cast<double>(in_count);
    if (off_count == 0 || off == 0.0) return in_mean > 0.0 ? kInf : kNaN;
    return in_mean / (off / static_cast<double>(off_count));
  };
  for (std::size_t f = 0; f < forest.families.size(); ++f) {
    forest.families[f].metrics.c_block_ratio = ratio(graphs.c_raw, family_block[f]);
    forest.families[f].metrics.d_block_ratio = ratio(graphs.d_raw, family_block[f]);
  }

  auto global = [&](const Matrix<double>& m) {
    double in = 0.0, off = 0.0;
    std::size_t in_count = 0, off_count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        if (block[i] == block[j]) {
          in += m(i, j);
          ++in_count;
        } else {
          off += m(i, j);
          ++off_count;
        }
      }
    }
    if (in_count == 0) return kNaN;
    const double in_mean = in / static_cast<double>(in_count);
    if (off_count == 0 || off == 0.0) return in_mean > 0.0 ? kInf : kNaN;
    return in_mean / (off / static_cast<double>(off_count));
  };
  forest.c_block_ratio = global(graphs.c_raw);
  forest.d_block_ratio = global(graphs.d_raw);
}

FamilyLabelResult label_family(const Family& family, const FeatureCatalog& catalog,
                               const EmbeddingCorpus& corpus,
                               const std::vector<std::vector<FeatureHit>>& columns,
                               CompletionClient& client, const FamilyLabelOptions& options) {
  std::vector<std::string> child_labels;
  for (auto c : family.children) {
    if (const auto& label = catalog.at(c).label) child_labels.push_back(*label);
  }
  if (child_labels.empty()) throw LabelParseError("family " + std::to_string(family.id) + " has no labelled children");

  FamilyLabelResult result;
  if (child_labels.size() == 1) {
    result.label = child_labels.front();
    result.fallback = true;
  } else {
    CompletionRequest request;
    request.role = Role::kSuperfeature;
    request.feature_id = family.parent;
    request.prompt = render_superfeature_prompt(options.subject, child_labels);
    bool parsed = false;
    for (int attempt = 0; attempt < 2 && !parsed; ++attempt) {
      if (attempt == 1) request.prompt += kInterpreterRetryInstruction;
      if (auto label = parse_final_label(client.complete(request))) {
        result.label = *label;
        parsed = true;
      }
    }
    if (!parsed) throw LabelParseError("no FINAL line for family " + std::to_string(family.id));
  }

  std::mt19937_64 rng(feature_seed(options.seed, family.parent));
  std::vector<std::vector<std::uint32_t>> pools;
  for (auto c : family.children) {
    auto hits = columns.at(c);
    std::sort(hits.begin(), hits.end(), [](const FeatureHit& a, const FeatureHit& b) {
      return a.value != b.value ? a.value > b.value : a.row < b.row;
    });
    const auto take = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(options.top_fraction * static_cast<double>(hits.size()))));
    std::vector<std::uint32_t> pool;
    for (std::size_t i = 0; i < std::min(take, hits.size()); ++i) pool.push_back(hits[i].row);
    if (!pool.empty()) pools.push_back(std::move(pool));
  }
  std::shuffle(pools.begin(), pools.end(), rng);
  std::set<std::uint32_t> chosen;
  std::vector<std::uint32_t> positives;
  bool progress = true;
  while (positives.size() < options.positives && progress) {
    progress = false;
    for (auto& pool : pools) {
      if (positives.size() >= options.positives) break;
      while (!pool.empty()) {
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        const auto at = pick(rng);
        const auto row = pool[at];
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(at));
        if (chosen.insert(row).second) {
          positives.push_back(row);
          progress = true;
          break;
        }
      }
    }
  }

  std::vector<bool> member_active(corpus.size(), false);
  for (auto m : family.members()) {
    for (const auto& h : columns.at(m)) member_active.at(h.row) = true;
  }
  std::vector<std::uint32_t> inactive;
  for (std::uint32_t r = 0; r < corpus.size(); ++r) {
    if (!member_active[r]) inactive.push_back(r);
  }
  if (inactive.size() < options.negatives) throw TooDense("family " + std::to_string(family.id) + " covers the corpus");
  for (std::size_t i = 0; i < options.negatives; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, inactive.size() - 1);
    std::swap(inactive[i], inactive[pick(rng)]);
  }

  FeatureLabel label{family.parent, result.label, {}};
  std::vector<Prediction> predictions;
  auto predict = [&](std::uint32_t row, int truth) {
    const auto& doc = corpus.docs.at(row);
    predictions.push_back(
        {doc.doc_id, predict_activation(label, doc.abstract_text, client, options.subject, doc.doc_id), truth});
  };
  for (auto row : positives) predict(row, +1);
  for (std::size_t i = 0; i < options.negatives; ++i) predict(inactive[i], -1);
  result.score = score_feature(predictions, family.parent);
  return result;
}

}  // namespace saeforge
