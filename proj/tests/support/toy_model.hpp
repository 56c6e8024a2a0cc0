// SPDX-License-Identifier: Apache-2.0
#pragma once

// Small SAE trained on a planted corpus, shared by steering, search and
// server tests.

#include "saeforge/trainer.hpp"
#include "support/planted.hpp"

namespace saeforge::testing {

struct ToyModel {
  PlantedCorpus planted;
  SaeModel model;
};

inline ToyModel train_toy_model(std::size_t d = 16, std::size_t n = 32, std::size_t k = 4,
                                std::size_t docs = 2000, std::uint64_t seed = 7) {
  ToyModel toy;
  toy.planted = make_planted_corpus(d, n, 3, docs, seed);
  SaeConfig config;
  config.k = k;
  config.n = n;
  config.batch_size = 128;
  config.epochs = 8;
  config.learning_rate = 2e-3;
  config.seed = seed;
  toy.model = train<float>(toy.planted.normalized, config).model;
  return toy;
}

// Trained once per process.
inline const ToyModel& shared_toy_model() {
  static const ToyModel toy = train_toy_model();
  return toy;
}

}  // namespace saeforge::testing
