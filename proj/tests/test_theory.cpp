#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "ulm/count_lm.hpp"
#include "ulm/theory.hpp"

using namespace ulm;

namespace {

PopulationSpec small_spec() {
  PopulationSpec spec;
  spec.num_users = 10;
  spec.num_shards = 5;
  spec.public_per_user = 100;
  spec.private_per_user = 10;
  spec.record_length = 4;
  spec.vocab_size = 200;
  spec.probe_multiplicities = {1, 5, 50};
  return spec;
}

}  // namespace

TEST_CASE("population layout: shared public multiset, unique private records") {
  PopulationSpec spec = small_spec();
  Population pop = build_population(spec, 7);

  CHECK(pop.corpus.num_users() == 10);
  CHECK(pop.shards.size() == 5);
  // d = K/M users per shard, each contributing n + n_p records.
  for (const auto& s : pop.shards) {
    CHECK(s.user_ids.size() == 2);
    CHECK(s.record_indices.size() == 2u * (100 + 10));
  }

  // Every user's record multiset: the same public records plus unique
  // private ones.
  std::set<std::vector<int>> all_private;
  for (const auto& [user, idxs] : pop.corpus.user_index) {
    std::size_t forgotten = 0;
    for (std::size_t i : idxs) {
      const auto& r = pop.corpus.records[i];
      if (!r.forget_spans.empty()) {
        ++forgotten;
        CHECK(all_private.insert(r.tokens).second);  // globally unique
      }
    }
    CHECK(forgotten == 10);
    CHECK(idxs.size() == 110);
  }

  // Probe multiplicities hold per user.
  REQUIRE(pop.probes.size() == 3);
  const auto& idxs = pop.corpus.user_index.begin()->second;
  for (const auto& probe : pop.probes) {
    int count = 0;
    for (std::size_t i : idxs)
      if (pop.corpus.records[i].tokens == probe.tokens) ++count;
    CHECK(count == probe.multiplicity);
  }

  CHECK_THROWS(build_population(PopulationSpec{.num_users = 7, .num_shards = 5}, 1));
}

TEST_CASE("theorem check: private probes coincide bit-exactly at h(0)") {
  PopulationSpec spec = small_spec();
  Population pop = build_population(spec, 11);
  const int k_star = pop.corpus.user_index.begin()->first;
  TheoremCheck check = theorem1_check(pop, k_star);

  const double h0 = smooth(spec.smoothing, 0.0);
  int private_rows = 0;
  for (const auto& row : check.rows) {
    if (!row.probe.is_private) continue;
    ++private_rows;
    CHECK(row.p_star == h0);
    CHECK(row.g_loo == h0);
    CHECK(row.log_ratio == 0.0);
  }
  CHECK(private_rows == spec.private_per_user);
  CHECK(check.private_exact);
}

TEST_CASE("theorem check: public probes match the closed form and the bound") {
  PopulationSpec spec = small_spec();
  spec.public_per_user = 1000;
  Population pop = build_population(spec, 13);
  const int k_star = pop.corpus.user_index.begin()->first;
  TheoremCheck check = theorem1_check(pop, k_star);

  const auto lip = lipschitz_constants(spec.smoothing);
  const double n = 1000.0, np = 10.0;
  for (const auto& row : check.rows) {
    if (row.probe.is_private) continue;
    const double l = row.probe.multiplicity;
    // Identical public data per user makes both routes exact closed forms.
    CHECK(row.p_star == smooth(spec.smoothing, l / n));
    CHECK(row.g_loo == smooth(spec.smoothing, l / (n + np)));
    CHECK(std::abs(row.log_ratio) <= row.bound);
    // Arithmetic oracle for the bound itself.
    CHECK(row.bound == doctest::Approx(lip.c_log * l * np / (n * (n + np))).epsilon(1e-12));
  }
  // Worked value: l=5, n=1000, n_p=10 gives |l/n - l/(n+n_p)| ~ 4.9505e-5.
  const double delta = 5.0 / 1000.0 - 5.0 / 1010.0;
  CHECK(delta == doctest::Approx(4.9505e-5).epsilon(1e-4));
}

TEST_CASE("degenerate n_p = 0 collapses the two models") {
  PopulationSpec spec = small_spec();
  spec.private_per_user = 0;
  Population pop = build_population(spec, 17);
  const int k_star = pop.corpus.user_index.begin()->first;
  TheoremCheck check = theorem1_check(pop, k_star);
  for (const auto& row : check.rows) {
    CHECK(row.g_loo == row.p_star);
    CHECK(row.log_ratio == 0.0);
  }
  CHECK(check.max_abs_log_ratio == 0.0);
}

TEST_CASE("convergence sweep shrinks both columns as n grows") {
  PopulationSpec spec = small_spec();
  auto rows = convergence_sweep(spec, {100, 400, 1600}, 23);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].n == 100);
  CHECK(rows[2].n == 1600);
  CHECK(rows[0].max_abs_log_ratio > rows[1].max_abs_log_ratio);
  CHECK(rows[1].max_abs_log_ratio > rows[2].max_abs_log_ratio);
  CHECK(rows[0].bound > rows[1].bound);
  CHECK(rows[1].bound > rows[2].bound);

  // Bound column follows the closed form in n.
  const auto lip = lipschitz_constants(spec.smoothing);
  for (const auto& r : rows) {
    const double expect = lip.c_log * 50.0 * r.n_p / (static_cast<double>(r.n) * (r.n + r.n_p));
    CHECK(r.bound == doctest::Approx(expect).epsilon(1e-12));
  }

  // Equal n values produce equal rows.
  auto dup = convergence_sweep(spec, {100, 100}, 23);
  CHECK(dup[0].max_abs_log_ratio == dup[1].max_abs_log_ratio);
  CHECK(dup[0].bound == dup[1].bound);

  CHECK_THROWS(convergence_sweep(spec, {100}, 23));
}

TEST_CASE("default sweep ends with the ratio inside the 1e-3 band") {
  PopulationSpec spec = small_spec();
  auto rows = convergence_sweep(spec, {100, 1000, 10000}, 7);
  const double ratio = std::exp(rows.back().max_abs_log_ratio);
  CHECK(rows.back().n == 10000);
  CHECK(ratio <= 1.0 + 1e-3);
  CHECK(std::exp(-rows.back().max_abs_log_ratio) >= 1.0 - 1e-3);
}

TEST_CASE("sweep csv has the documented columns") {
  PopulationSpec spec = small_spec();
  auto rows = convergence_sweep(spec, {100, 200}, 29);
  const std::string path = (std::filesystem::temp_directory_path() / "ulm_theory.csv").string();
  save_sweep_csv(rows, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "n,n_p,M,max_abs_log_ratio,analytic_bound");
  int lines = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++lines;
  CHECK(lines == 2);
  std::filesystem::remove(path);
}
