#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ulm/corpus.hpp"
#include "ulm/count_lm.hpp"

namespace ulm {

// Synthetic population for the equivalence check: every user shares one
// public record multiset (with controlled duplicate multiplicities for the
// probe sequences) and owns globally unique private records, all to be
// forgotten.
struct PopulationSpec {
  int num_users = 10;            // K, divisible by M
  int num_shards = 5;            // M
  int public_per_user = 100;     // n
  int private_per_user = 10;     // n_p
  int record_length = 4;         // T
  int vocab_size = 200;
  std::vector<int> probe_multiplicities = {1, 5, 50};  // l values for public probes
  SmoothingSpec smoothing;
};

struct Probe {
  std::vector<int> tokens;
  int multiplicity = 0;  // l; 0 for private probes
  bool is_private = false;
};

struct Population {
  Corpus corpus;
  std::vector<Shard> shards;
  std::vector<Probe> probes;
  PopulationSpec spec;
};

Population build_population(const PopulationSpec& spec, std::uint64_t rng_seed);

struct ProbeCheck {
  Probe probe;
  double p_star = 0.0;    // retrained count LM probability
  double g_loo = 0.0;     // leave-one-out teacher ensemble probability
  double log_ratio = 0.0; // log(g) - log(p*)
  double bound = 0.0;     // C_log * l * n_p / (n * (n + n_p)); 0 for private probes
};

struct TheoremCheck {
  std::vector<ProbeCheck> rows;
  double max_abs_log_ratio = 0.0;
  bool private_exact = true;  // p* == g == h(0) bit-exact on private probes
};

// Fits one count LM per shard plus the retrained count LM on the corpus with
// all private records removed, then compares the leave-one-out mean with the
// retrained probability on every probe. Throws when a public probe violates
// the analytic bound.
TheoremCheck theorem1_check(const Population& pop, int requesting_user);

struct SweepRow {
  int n = 0;
  int n_p = 0;
  int num_shards = 0;
  double max_abs_log_ratio = 0.0;
  double bound = 0.0;  // max over probes of the analytic bound
};

// theorem1_check across increasing n; both columns shrink as n grows.
std::vector<SweepRow> convergence_sweep(const PopulationSpec& base, const std::vector<int>& n_values,
                                        std::uint64_t rng_seed);

void save_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path);

}  // namespace ulm
