#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ulm/neural_lm.hpp"
#include "ulm/report.hpp"

namespace ulm {

enum class Method { kBaseline, kRetrained, kPate, kGa, kLooE, kLooDE };

std::string method_name(Method m);
Method method_from_string(const std::string& s);

// Flat key=value experiment configuration; '#' starts a comment and unknown
// keys are rejected.
struct ExperimentConfig {
  std::string corpus_path;
  int vocab_size = 200;
  int records_per_user = 40;
  double test_fraction = 0.1;

  int canary_count = 10;
  int canary_length = 5;
  int canary_repetitions = 40;

  int context_order = 2;
  int embed_dim = 16;
  int hidden_dim = 64;
  double train_lr = 0.25;
  int train_epochs = 10;
  int batch_size = 4;

  int num_teachers = 5;
  // Shards hold a fraction of the records; per-record updates keep the
  // teachers' optimization budget comparable to the base model's.
  int teacher_batch_size = 1;

  double ga_lr = 3e-4;
  int ga_epochs = 20;
  double looe_lr = 5e-3;
  int looe_epochs = 20;
  double looe_sigma = 0.0;
  double loode_lr = 5e-3;
  int loode_epochs = 20;
  double pate_sigma = 0.0;
  bool freeze_embeddings = false;

  int beam_width = 100;
  int rs_samples = 1000;

  std::vector<Method> methods = {Method::kBaseline, Method::kRetrained, Method::kPate,
                                 Method::kGa, Method::kLooE};
  std::uint64_t seed = 1;

  static ExperimentConfig load(const std::string& path);
  void validate() const;
  LmDims dims() const { return LmDims{vocab_size, context_order, embed_dim, hidden_dim}; }
};

// A stage failure keeps earlier artifacts on disk and names the stage.
struct StageError : std::runtime_error {
  StageError(const std::string& stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_name(stage) {}
  std::string stage_name;
};

// ingest -> canary -> train -> teachers -> unlearn -> attack -> report.
// With resume=true a stage whose outputs already exist is skipped. Wall-clock
// timings go to timings.txt only; the result files must be reproducible byte
// for byte across runs.
std::vector<ResultRow> run_pipeline(const ExperimentConfig& cfg, const std::string& out_dir,
                                    bool resume = false);

// Individual stages, also exposed as CLI subcommands.
void stage_ingest(const ExperimentConfig& cfg, const std::string& out_dir);
void stage_canary(const ExperimentConfig& cfg, const std::string& out_dir);
void stage_train(const ExperimentConfig& cfg, const std::string& out_dir);
void stage_teachers(const ExperimentConfig& cfg, const std::string& out_dir);
void stage_unlearn(const ExperimentConfig& cfg, const std::string& out_dir);
void stage_attack(const ExperimentConfig& cfg, const std::string& out_dir);
std::vector<ResultRow> stage_report(const ExperimentConfig& cfg, const std::string& out_dir);

}  // namespace ulm
