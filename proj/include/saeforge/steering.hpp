// SPDX-License-Identifier: Apache-2.0
#pragma once

// Feature-level edits of an embedding. Setting latent i to lambda and decoding
// equals adding (lambda - h_i) * w_i to the reconstruction.

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "saeforge/sae.hpp"

namespace saeforge {

struct Intervention {
  std::map<std::uint32_t, double> edits;  // feature id -> target activation
};

struct SteeredEmbedding {
  std::vector<float> input;     // x as given
  SparseCode code;              // encode(x)
  std::vector<float> original;  // decode(encode(x))
  std::vector<float> modified;  // decode of the edited code
  double fidelity = 1.0;        // cos(original, modified)
};

double cosine_similarity(std::span<const float> a, std::span<const float> b);

// Throws NotFound for a feature id >= n and ConfigError for a non-finite
// weight or input.
SteeredEmbedding apply_intervention(const SaeModel& model, std::span<const float> x,
                                    const Intervention& intervention);

// Dense encode(x) with the edits applied; the target of iterative_optimize.
std::vector<float> edited_target(const SaeModel& model, std::span<const float> x,
                                 const Intervention& intervention);

struct IterativeOptions {
  std::size_t steps = 10;
  double learning_rate = 0.1;  // cosine-annealed to 0 over `steps`
  double weight_decay = 0.01;  // decoupled (AdamW)
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct IterativeResult {
  std::vector<float> latents;    // h*, dense n-vector
  std::vector<float> embedding;  // decode(h*)
  // Objective of the retained iterate after 0..steps updates (steps + 1
  // entries). A proposed update that raises the objective is not retained,
  // so this trace never increases.
  std::vector<double> trace;
  std::vector<double> proposed;  // objective of every proposed iterate (steps entries)
};

// Minimizes ||encode(decode(h)) - t||^2 over dense latents h starting from
// encode(x). The active set of encode(decode(h)) is held fixed within a step,
// so the gradient is 2 W_d^T W_e^T (m * (encode(decode(h)) - t)) with m the
// indicator of that set.
// Throws OptimizeDiverged on a non-finite objective.
IterativeResult iterative_optimize(const SaeModel& model, std::span<const float> x,
                                   std::span<const float> target,
                                   const IterativeOptions& options = {});

// ||encode(decode(h)) - t||^2 for dense h.
double iterative_objective(const SaeModel& model, std::span<const float> h,
                           std::span<const float> target);

}  // namespace saeforge
