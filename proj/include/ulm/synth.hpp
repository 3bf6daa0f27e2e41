#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ulm {

// Seeded synthetic text with learnable first-order structure: every word has
// a small set of preferred successors that carry most of the transition
// mass, over a Zipf-weighted unigram start.
struct SynthSpec {
  int num_records = 2000;
  int distinct_words = 400;
  int min_len = 6;
  int max_len = 10;
  int branching = 5;         // preferred successors per word
  double follow_prob = 0.85; // mass on the preferred successors
};

std::vector<std::string> generate_corpus_lines(const SynthSpec& spec, std::uint64_t rng_seed);

void write_lines(const std::vector<std::string>& lines, const std::string& path);

}  // namespace ulm
