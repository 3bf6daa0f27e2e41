#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ulm/corpus.hpp"
#include "ulm/neural_lm.hpp"
#include "ulm/prob.hpp"
#include "ulm/rng.hpp"

namespace ulm {

enum class EnsembleMode {
  kModel,  // teacher m trains on shard B_m
  kData,   // teacher m trains on everything except B_m
};

std::string to_string(EnsembleMode mode);
EnsembleMode ensemble_mode_from_string(const std::string& s);

struct NoiseConfig {
  double sigma = 0.0;
  std::uint64_t rng_seed = 1;
};

struct TeacherSet {
  EnsembleMode mode = EnsembleMode::kModel;
  std::vector<NeuralLM> teachers;
  std::map<int, int> shard_map;  // user_id -> shard index
  std::vector<std::uint64_t> seeds;

  int num_teachers() const { return static_cast<int>(teachers.size()); }
  int shard_of(int user_id) const;
};

// Trains one teacher per shard; each teacher's seed is derived from the
// fingerprint of its training set, so two teachers facing identical data
// come out bit-identical regardless of mode.
TeacherSet train_teachers(const Corpus& corpus, const std::vector<Shard>& shards,
                          const LmDims& dims, std::uint64_t vocab_hash,
                          const TrainConfig& cfg, EnsembleMode mode);

// Eq.-style leave-one-out supervision: model mode averages the M-1 teachers
// that never saw user k; data mode returns the single teacher trained
// without user k's shard.
ProbDist loo_aggregate(const TeacherSet& ts, int excluded_user, std::span<const int> context);

// Mean over all M teachers, optionally noised.
ProbDist pate_aggregate(const TeacherSet& ts, std::span<const int> context);
ProbDist pate_aggregate(const TeacherSet& ts, std::span<const int> context,
                        const NoiseConfig& noise);

// Adds i.i.d. N(0, sigma^2) per coordinate, clamps negatives to zero and
// renormalizes; an all-zero clamped vector falls back to uniform. sigma == 0
// returns the input bit-identically and draws nothing from the RNG.
ProbDist add_noise_and_renormalize(const ProbDist& dist, double sigma, Rng& rng);

void save_teachers(const TeacherSet& ts, const std::string& dir);
TeacherSet load_teachers(const std::string& dir, std::uint64_t expected_vocab_hash = 0);

}  // namespace ulm
