#include "ulm/theory.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include "ulm/kernels.hpp"
#include "ulm/rng.hpp"

namespace ulm {

namespace {

std::vector<int> draw_unique_sequence(Rng& rng, int length, int vocab_size,
                                      std::set<std::vector<int>>& used) {
  std::vector<int> seq(static_cast<std::size_t>(length));
  for (int attempt = 0; attempt < 1000; ++attempt) {
    for (auto& t : seq)
      t = 2 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(vocab_size - 2)));
    if (used.insert(seq).second) return seq;
  }
  throw std::runtime_error("cannot draw enough distinct sequences; vocabulary or length too small");
}

double scalar_pairwise_mean(const std::vector<double>& vals) {
  std::vector<std::vector<double>> boxed;
  boxed.reserve(vals.size());
  for (double v : vals) boxed.push_back({v});
  std::vector<const std::vector<double>*> ptrs;
  for (const auto& b : boxed) ptrs.push_back(&b);
  return kernels::pairwise_mean(ptrs)[0];
}

}  // namespace

Population build_population(const PopulationSpec& spec, std::uint64_t rng_seed) {
  if (spec.num_shards < 2) throw std::invalid_argument("need at least 2 shards");
  if (spec.num_users % spec.num_shards != 0)
    throw std::invalid_argument("user count must be divisible by shard count");
  if (spec.public_per_user < 1 || spec.private_per_user < 0)
    throw std::invalid_argument("bad population sizes");
  if (spec.vocab_size < 4 || spec.record_length < 1)
    throw std::invalid_argument("bad vocab/record length");
  int probe_total = 0;
  for (int l : spec.probe_multiplicities) {
    if (l < 1) throw std::invalid_argument("probe multiplicity must be >= 1");
    probe_total += l;
  }
  if (probe_total > spec.public_per_user)
    throw std::invalid_argument("probe multiplicities exceed public records per user");

  Rng rng(rng_seed);
  std::set<std::vector<int>> used;
  Population pop;
  pop.spec = spec;

  // Shared public multiset: one distinct sequence per probe (repeated l
  // times) plus distinct single-copy fillers up to n records.
  std::vector<std::vector<int>> public_records;
  for (int l : spec.probe_multiplicities) {
    auto seq = draw_unique_sequence(rng, spec.record_length, spec.vocab_size, used);
    pop.probes.push_back(Probe{seq, l, false});
    for (int i = 0; i < l; ++i) public_records.push_back(seq);
  }
  while (static_cast<int>(public_records.size()) < spec.public_per_user)
    public_records.push_back(draw_unique_sequence(rng, spec.record_length, spec.vocab_size, used));

  for (int k = 0; k < spec.num_users; ++k) {
    for (const auto& seq : public_records) {
      Record r;
      r.user_id = k;
      r.tokens = seq;
      pop.corpus.records.push_back(std::move(r));
    }
    for (int i = 0; i < spec.private_per_user; ++i) {
      Record r;
      r.user_id = k;
      r.tokens = draw_unique_sequence(rng, spec.record_length, spec.vocab_size, used);
      r.forget_spans = {Span{0, spec.record_length}};  // all private data is to be forgotten
      pop.corpus.records.push_back(std::move(r));
    }
  }
  pop.corpus.rebuild_user_index();
  pop.shards = partition_shards(pop.corpus, spec.num_shards, derive_seed(rng_seed, 0x54A2D));
  return pop;
}

TheoremCheck theorem1_check(const Population& pop, int requesting_user) {
  const auto& spec = pop.spec;
  if (!pop.corpus.user_index.count(requesting_user))
    throw std::invalid_argument("requesting user not in population");
  const LipschitzConstants lip = lipschitz_constants(spec.smoothing);

  // Per-shard teacher count LMs (trained before any removal, private data
  // included) and the retrained count LM with every private record removed.
  std::vector<CountLM> teacher_lms;
  teacher_lms.reserve(pop.shards.size());
  for (const auto& shard : pop.shards) {
    std::vector<Record> recs;
    recs.reserve(shard.record_indices.size());
    for (std::size_t i : shard.record_indices) recs.push_back(pop.corpus.records[i]);
    teacher_lms.push_back(fit_count_lm(recs, spec.smoothing.eps, spec.smoothing.floor_u));
  }
  std::vector<Record> public_only;
  for (const auto& r : pop.corpus.records)
    if (r.forget_spans.empty()) public_only.push_back(r);
  const CountLM retrained = fit_count_lm(public_only, spec.smoothing.eps, spec.smoothing.floor_u);

  int excluded_shard = -1;
  for (const auto& shard : pop.shards)
    if (shard.user_ids.count(requesting_user)) excluded_shard = shard.shard_id;

  // Public probes plus every private record of the requesting user.
  std::vector<Probe> probes = pop.probes;
  for (std::size_t i : pop.corpus.user_index.at(requesting_user))
    if (!pop.corpus.records[i].forget_spans.empty())
      probes.push_back(Probe{pop.corpus.records[i].tokens, 0, true});

  const double n = static_cast<double>(spec.public_per_user);
  const double n_p = static_cast<double>(spec.private_per_user);
  const double h0 = smooth(spec.smoothing, 0.0);

  TheoremCheck check;
  for (const auto& probe : probes) {
    ProbeCheck row;
    row.probe = probe;
    row.p_star = retrained.prob(probe.tokens);
    std::vector<double> teacher_probs;
    for (int m = 0; m < static_cast<int>(teacher_lms.size()); ++m)
      if (m != excluded_shard)
        teacher_probs.push_back(teacher_lms[static_cast<std::size_t>(m)].prob(probe.tokens));
    row.g_loo = scalar_pairwise_mean(teacher_probs);
    row.log_ratio = std::log(row.g_loo) - std::log(row.p_star);
    if (probe.is_private) {
      row.bound = 0.0;
      if (row.p_star != h0 || row.g_loo != h0) check.private_exact = false;
    } else {
      const double l = static_cast<double>(probe.multiplicity);
      row.bound = lip.c_log * l * n_p / (n * (n + n_p));
      if (std::abs(row.log_ratio) > row.bound)
        throw std::runtime_error("theorem bound violated for probe with multiplicity " +
                                 std::to_string(probe.multiplicity));
    }
    check.max_abs_log_ratio = std::max(check.max_abs_log_ratio, std::abs(row.log_ratio));
    check.rows.push_back(std::move(row));
  }
  return check;
}

std::vector<SweepRow> convergence_sweep(const PopulationSpec& base, const std::vector<int>& n_values,
                                        std::uint64_t rng_seed) {
  if (n_values.size() < 2) throw std::invalid_argument("sweep needs at least 2 values of n");
  std::vector<SweepRow> rows(n_values.size());
#pragma omp parallel for schedule(dynamic) if (kernels::parallel_enabled())
  for (long long i = 0; i < static_cast<long long>(n_values.size()); ++i) {
    PopulationSpec spec = base;
    spec.public_per_user = n_values[static_cast<std::size_t>(i)];
    Population pop = build_population(spec, derive_seed(rng_seed, static_cast<std::uint64_t>(spec.public_per_user)));
    const int k_star = pop.corpus.user_index.begin()->first;
    TheoremCheck check = theorem1_check(pop, k_star);
    double max_bound = 0.0;
    for (const auto& r : check.rows) max_bound = std::max(max_bound, r.bound);
    rows[static_cast<std::size_t>(i)] =
        SweepRow{spec.public_per_user, spec.private_per_user, spec.num_shards,
                 check.max_abs_log_ratio, max_bound};
  }
  std::sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) { return a.n < b.n; });
  return rows;
}

void save_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "n,n_p,M,max_abs_log_ratio,analytic_bound\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%d,%d,%.17g,%.17g\n", r.n, r.n_p, r.num_shards,
                  r.max_abs_log_ratio, r.bound);
    out << buf;
  }
}

}  // namespace ulm
