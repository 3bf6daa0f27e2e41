#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ulm/attacks.hpp"
#include "ulm/corpus.hpp"
#include "ulm/ensemble.hpp"
#include "ulm/kernels.hpp"
#include "ulm/pipeline.hpp"
#include "ulm/report.hpp"
#include "ulm/synth.hpp"
#include "ulm/theory.hpp"
#include "ulm/unlearn.hpp"
#include "ulm/vocab.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 2;
constexpr int kExitStageFailure = 3;

struct GlobalOpts {
  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed = 0;  // 0 = keep the config's seed
  std::vector<std::string> methods;
  bool resume = false;
  int threads = -1;  // -1 = library default
};

ulm::ExperimentConfig load_config(const GlobalOpts& g) {
  if (g.config_path.empty()) throw std::runtime_error("--config is required for this command");
  ulm::ExperimentConfig cfg = ulm::ExperimentConfig::load(g.config_path);
  if (g.seed != 0) cfg.seed = g.seed;
  if (!g.methods.empty()) {
    cfg.methods.clear();
    for (const auto& m : g.methods) cfg.methods.push_back(ulm::method_from_string(m));
  }
  cfg.validate();
  return cfg;
}

void print_rows(const std::vector<ulm::ResultRow>& rows) {
  std::printf("%-4s %-40s %10s %8s %8s\n", "id", "method", "ppl", "bs", "rs");
  for (const auto& r : rows)
    std::printf("%-4s %-40s %10.3f %8.2f %8.2f\n", r.id.c_str(), r.method.c_str(), r.ppl,
                r.bs_rate, r.rs_rate);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Canary unlearning workbench for small word-level language models"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--config", g.config_path, "Experiment config file (key = value lines)");
  app.add_option("--out", g.out_dir, "Output directory for artifacts");
  app.add_option("--seed", g.seed, "Override the config seed");
  app.add_option("--method", g.methods, "Restrict to these methods (repeatable)");
  app.add_flag("--resume", g.resume, "Skip stages whose artifacts already exist");
  app.add_option("--threads", g.threads, "OpenMP threads (0 = serial)");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic text corpus file");
  std::string synth_output = "corpus.txt";
  ulm::SynthSpec synth_spec;
  std::uint64_t synth_seed = 1;
  synth->add_option("--output", synth_output, "Destination file");
  synth->add_option("--records", synth_spec.num_records, "Number of records");
  synth->add_option("--words", synth_spec.distinct_words, "Distinct word count");
  synth->add_option("--min-len", synth_spec.min_len, "Minimum record length");
  synth->add_option("--max-len", synth_spec.max_len, "Maximum record length");
  synth->add_option("--gen-seed", synth_seed, "Generator seed");

  auto* ingest = app.add_subcommand("ingest", "Build vocabulary, user corpus and test split");
  auto* canary = app.add_subcommand("canary", "Generate canaries and insert them into the corpus");
  auto* train = app.add_subcommand("train", "Train the baseline model");
  auto* teachers = app.add_subcommand("teachers", "Partition shards and train teacher models");
  auto* unlearn = app.add_subcommand("unlearn", "Run the selected unlearning methods");
  auto* attack = app.add_subcommand("attack", "Audit canary extraction for every model");
  auto* report = app.add_subcommand("report", "Evaluate perplexity and write result tables");
  auto* run = app.add_subcommand("run", "Run the whole pipeline end to end");

  auto* theory = app.add_subcommand("theory", "Convergence check of the ensemble equivalence");
  std::vector<int> theory_n = {100, 1000, 10000};
  int theory_np = 10;
  int theory_m = 5;
  std::uint64_t theory_seed = 1;
  theory->add_option("--n", theory_n, "Public records per user (sweep values)");
  theory->add_option("--np", theory_np, "Private records per user");
  theory->add_option("--teachers", theory_m, "Shard count");
  theory->add_option("--theory-seed", theory_seed, "Population seed");

  auto* cost = app.add_subcommand("cost", "Deletion cost model");
  double cost_requests = 100.0;
  double cost_unit = 1.0;
  double cost_fraction = 0.001;
  cost->add_option("--requests", cost_requests, "Number of deletion requests v");
  cost->add_option("--unit-cost", cost_unit, "Unit cost U of one full training");
  cost->add_option("--finetune-fraction", cost_fraction, "Fine-tune cost as fraction of U");

  // Global flags remain usable after the subcommand name.
  for (CLI::App* sub : {synth, ingest, canary, train, teachers, unlearn, attack, report, run,
                        theory, cost})
    sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  if (g.threads == 0) ulm::kernels::set_parallel(false);
  else if (g.threads > 0) ulm::kernels::set_num_threads(g.threads);

  try {
    if (synth->parsed()) {
      ulm::write_lines(ulm::generate_corpus_lines(synth_spec, synth_seed), synth_output);
      std::printf("wrote %s\n", synth_output.c_str());
      return kExitOk;
    }
    if (theory->parsed()) {
      ulm::PopulationSpec spec;
      spec.private_per_user = theory_np;
      spec.num_shards = theory_m;
      spec.num_users = theory_m;  // one user per shard is enough for the check
      auto rows = ulm::convergence_sweep(spec, theory_n, theory_seed);
      std::filesystem::create_directories(g.out_dir);
      ulm::save_sweep_csv(rows, g.out_dir + "/theory.csv");
      std::printf("%8s %8s %4s %22s %22s\n", "n", "n_p", "M", "max|log g - log p*|", "bound");
      for (const auto& r : rows)
        std::printf("%8d %8d %4d %22.3e %22.3e\n", r.n, r.n_p, r.num_shards,
                    r.max_abs_log_ratio, r.bound);
      return kExitOk;
    }
    if (cost->parsed()) {
      auto [retrain_cost, loo_cost] = ulm::estimate_costs(cost_requests, cost_unit, cost_fraction);
      std::printf("retrain_cost,%.6f\nloo_cost,%.6f\n", retrain_cost, loo_cost);
      return kExitOk;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitStageFailure;
  }

  ulm::ExperimentConfig cfg;
  try {
    cfg = load_config(g);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfigError;
  }

  try {
    if (ingest->parsed()) ulm::stage_ingest(cfg, g.out_dir);
    else if (canary->parsed()) ulm::stage_canary(cfg, g.out_dir);
    else if (train->parsed()) ulm::stage_train(cfg, g.out_dir);
    else if (teachers->parsed()) ulm::stage_teachers(cfg, g.out_dir);
    else if (unlearn->parsed()) ulm::stage_unlearn(cfg, g.out_dir);
    else if (attack->parsed()) ulm::stage_attack(cfg, g.out_dir);
    else if (report->parsed()) print_rows(ulm::stage_report(cfg, g.out_dir));
    else if (run->parsed()) print_rows(ulm::run_pipeline(cfg, g.out_dir, g.resume));
  } catch (const ulm::StageError& e) {
    std::fprintf(stderr, "stage failed: %s\n", e.what());
    return kExitStageFailure;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitStageFailure;
  }
  return kExitOk;
}
