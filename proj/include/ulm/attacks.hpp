#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ulm/corpus.hpp"
#include "ulm/neural_lm.hpp"
#include "ulm/vocab.hpp"

namespace ulm {

struct AttackParams {
  int beam_width = 100;
  int num_samples = 1000;
  std::uint64_t rng_seed = 1;
};

struct CanaryAudit {
  int canary_id = 0;
  bool bs_extracted = false;
  bool rs_extracted = false;
  double suffix_ppl = 0.0;       // canary suffix PPL given the 2-token prefix
  double best_sample_ppl = 0.0;  // lowest PPL among the random suffixes
};

struct ExtractionReport {
  std::vector<CanaryAudit> canaries;
  double bs_rate = 0.0;
  double rs_rate = 0.0;
  AttackParams params;

  void save_csv(const std::string& path) const;
  void save_json(const std::string& path) const;
};

// True iff the canary's suffix is among the final `beam_width` hypotheses of
// a beam search over (canary_len - 2)-token continuations of the 2-token
// prefix, scored by total log probability; equal scores are ranked by
// lexicographically smaller token ids.
bool beam_search_extract(const NeuralLM& model, const std::vector<int>& canary, int beam_width);

// True iff the suffix's perplexity (conditioned on the 2-token prefix) is
// strictly lower than that of every random suffix. Random suffixes are drawn
// uniformly over non-reserved vocab with replacement; a draw equal to the
// true suffix is discarded and redrawn. Ties count as not extracted.
bool random_sampling_extract(const NeuralLM& model, const std::vector<int>& canary,
                             const Vocabulary& vocab, int num_samples, std::uint64_t rng_seed);

// Both attacks for every canary, with per-canary derived seeds.
ExtractionReport audit(const NeuralLM& model, const std::vector<CanarySpec>& canaries,
                       const Vocabulary& vocab, const AttackParams& params);

// Perplexity of `suffix` under the model conditioned on `prefix`.
double conditional_suffix_ppl(const NeuralLM& model, const std::vector<int>& prefix,
                              const std::vector<int>& suffix);

}  // namespace ulm
