#pragma once

#include <cstdint>

#include "ulm/corpus.hpp"
#include "ulm/ensemble.hpp"
#include "ulm/neural_lm.hpp"
#include "ulm/prob.hpp"

namespace ulm {

struct UnlearnConfig {
  double learning_rate = 1e-2;
  int epochs = 10;
  bool freeze_embeddings = false;
  double sigma = 0.0;
  std::uint64_t noise_seed = 1;
  std::uint64_t rng_seed = 1;
};

// sum_w P(w) * log(P(w)/Q(w)) with 0*log(0/q) := 0. Throws when some
// P(w) > 0 meets Q(w) == 0.
double kl_divergence(const ProbDist& p, const ProbDist& q);

// Fine-tunes a copy of the base model on the forget entries: at every step
// inside a forget span the supervision target is the leave-one-out teacher
// aggregate for the entry's owner (noised per visit when sigma > 0) and the
// loss is the sum of KL(target || student) over the span positions. Steps
// outside the spans contribute nothing. One SGD step per entry; entries are
// reshuffled every epoch.
NeuralLM loo_finetune(const NeuralLM& base, const TeacherSet& teachers, const ForgetSet& forget,
                      const Corpus& corpus, const UnlearnConfig& cfg,
                      const EpochLogger& logger = {});

// Same visiting order as loo_finetune but the per-entry loss is the negated
// cross entropy at the forget positions, so SGD maximizes CE there.
NeuralLM gradient_ascent_finetune(const NeuralLM& base, const ForgetSet& forget,
                                  const Corpus& corpus, const UnlearnConfig& cfg,
                                  const EpochLogger& logger = {});

// Drops fully-forgotten records, splices partial spans out of the rest, and
// trains a fresh model from the standard initialization.
NeuralLM retrain_without(const Corpus& corpus, const ForgetSet& forget, const LmDims& dims,
                         std::uint64_t vocab_hash, const TrainConfig& cfg,
                         const EpochLogger& logger = {});

// Fresh student trained on the full corpus against the (optionally noised)
// all-teacher aggregate; the per-step loss is cross entropy against the soft
// target. Noise is redrawn on every visit.
NeuralLM pate_train(const Corpus& corpus, const TeacherSet& teachers, const TrainConfig& cfg,
                    const NoiseConfig& noise, const EpochLogger& logger = {});

// The records retrain_without would train on; exposed for tests and tooling.
std::vector<Record> remove_forgotten(const Corpus& corpus, const ForgetSet& forget);

// Fresh model + training with init and shuffle streams derived from
// cfg.rng_seed; baseline, retrain and teacher training all go through here
// so equal data and seed give equal models.
NeuralLM train_fresh(const LmDims& dims, std::uint64_t vocab_hash,
                     const std::vector<Record>& records, const TrainConfig& cfg,
                     const EpochLogger& logger = {});

}  // namespace ulm
