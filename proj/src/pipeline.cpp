#include "ulm/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ulm/attacks.hpp"
#include "ulm/corpus.hpp"
#include "ulm/ensemble.hpp"
#include "ulm/rng.hpp"
#include "ulm/unlearn.hpp"
#include "ulm/vocab.hpp"

namespace fs = std::filesystem;

namespace ulm {

std::string method_name(Method m) {
  switch (m) {
    case Method::kBaseline: return "baseline";
    case Method::kRetrained: return "retrained";
    case Method::kPate: return "pate";
    case Method::kGa: return "ga";
    case Method::kLooE: return "looe";
    case Method::kLooDE: return "loode";
  }
  throw std::logic_error("unreachable");
}

Method method_from_string(const std::string& s) {
  if (s == "baseline") return Method::kBaseline;
  if (s == "retrained") return Method::kRetrained;
  if (s == "pate") return Method::kPate;
  if (s == "ga") return Method::kGa;
  if (s == "looe") return Method::kLooE;
  if (s == "loode") return Method::kLooDE;
  throw std::invalid_argument("unknown method: " + s);
}

namespace {

// Independent seed streams per pipeline stage.
enum SeedTag : std::uint64_t {
  kSeedUsers = 1,
  kSeedTestSplit = 2,
  kSeedCanaryGen = 3,
  kSeedCanaryInsert = 4,
  kSeedTrain = 5,
  kSeedShards = 6,
  kSeedTeachers = 7,
  kSeedPate = 8,
  kSeedPateNoise = 9,
  kSeedGa = 10,
  kSeedLooE = 11,
  kSeedLooENoise = 12,
  kSeedLooDE = 13,
  kSeedLooDENoise = 14,
  kSeedAttack = 15,
};

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw std::invalid_argument("expected a boolean, got: " + v);
}

std::vector<Method> parse_methods(const std::string& v) {
  std::vector<Method> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    Method m = method_from_string(item);
    for (Method seen : out)
      if (seen == m) throw std::invalid_argument("method listed twice: " + item);
    out.push_back(m);
  }
  return out;
}

std::string fmt_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

struct MethodInfo {
  std::string id;
  std::string label;
};

MethodInfo method_info(const ExperimentConfig& cfg, Method m) {
  const std::string teachers = std::to_string(cfg.num_teachers) + "T";
  switch (m) {
    case Method::kBaseline: return {"B1", "Baseline"};
    case Method::kRetrained: return {"R1", "Re-Trained"};
    case Method::kPate: {
      std::string label = "PATE(" + teachers;
      if (cfg.pate_sigma > 0.0) label += " sigma=" + fmt_g(cfg.pate_sigma);
      return {"P1", label + ")"};
    }
    case Method::kGa:
      return {"G1", "GA(r=" + fmt_g(cfg.ga_lr) + " " + std::to_string(cfg.ga_epochs) + "EP)"};
    case Method::kLooE: {
      std::string label = "LOO-E(" + teachers + " r=" + fmt_g(cfg.looe_lr) + " " +
                          std::to_string(cfg.looe_epochs) + "EP";
      if (cfg.freeze_embeddings) label += " F-Embed";
      if (cfg.looe_sigma > 0.0) label += " sigma=" + fmt_g(cfg.looe_sigma);
      return {"L1", label + ")"};
    }
    case Method::kLooDE: {
      std::string label = "LOO-D-E(" + teachers + " r=" + fmt_g(cfg.loode_lr) + " " +
                          std::to_string(cfg.loode_epochs) + "EP";
      if (cfg.freeze_embeddings) label += " F-Embed";
      return {"D1", label + ")"};
    }
  }
  throw std::logic_error("unreachable");
}

bool has_method(const ExperimentConfig& cfg, Method m) {
  return std::find(cfg.methods.begin(), cfg.methods.end(), m) != cfg.methods.end();
}

struct Paths {
  fs::path out;
  fs::path vocab() const { return out / "vocab.json"; }
  fs::path base_corpus() const { return out / "base_corpus.bin"; }
  fs::path test() const { return out / "test.bin"; }
  fs::path canaries() const { return out / "canaries.json"; }
  fs::path corpus() const { return out / "corpus.bin"; }
  fs::path base_ckpt() const { return out / "base.ckpt"; }
  fs::path teachers() const { return out / "teachers"; }
  fs::path teachers_data() const { return out / "teachers_data"; }
  fs::path model(Method m) const { return out / "models" / (method_name(m) + ".ckpt"); }
  fs::path audit_csv(Method m) const { return out / "audit" / (method_name(m) + ".csv"); }
  fs::path audit_json(Method m) const { return out / "audit" / (method_name(m) + ".json"); }
  fs::path results_csv() const { return out / "results.csv"; }
  fs::path results_json() const { return out / "results.json"; }
  fs::path timings() const { return out / "timings.txt"; }
  fs::path log(const std::string& name) const { return out / "logs" / (name + ".jsonl"); }
};

// Per-epoch JSON lines: {"epoch":..,"mean_loss":..,"params_checksum":..}.
EpochLogger jsonl_logger(const fs::path& path, std::shared_ptr<std::ofstream>& keeper) {
  fs::create_directories(path.parent_path());
  keeper = std::make_shared<std::ofstream>(path);
  if (!*keeper) throw std::runtime_error("cannot write " + path.string());
  auto stream = keeper;
  return [stream](const EpochLog& log) {
    nlohmann::json j{{"epoch", log.epoch},
                     {"mean_loss", log.mean_loss},
                     {"params_checksum", log.params_checksum}};
    *stream << j.dump() << "\n";
  };
}

void append_timing(const Paths& p, const std::string& stage, double seconds) {
  std::ofstream out(p.timings(), std::ios::app);
  char buf[128];
  std::snprintf(buf, sizeof buf, "%s %.3f s\n", stage.c_str(), seconds);
  out << buf;
}

TrainConfig base_train_config(const ExperimentConfig& cfg) {
  TrainConfig tc;
  tc.learning_rate = cfg.train_lr;
  tc.epochs = cfg.train_epochs;
  tc.batch_size = cfg.batch_size;
  tc.rng_seed = derive_seed(cfg.seed, kSeedTrain);
  return tc;
}

ForgetSet forget_set_for_canaries(const Corpus& corpus, const std::vector<CanarySpec>& canaries) {
  std::set<int> owners;
  for (const auto& c : canaries) owners.insert(c.owner_user_id);
  if (owners.empty()) return {};
  return build_forget_set(corpus, owners);
}

}  // namespace

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path);
  ExperimentConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "corpus_path") cfg.corpus_path = value;
      else if (key == "vocab_size") cfg.vocab_size = std::stoi(value);
      else if (key == "records_per_user") cfg.records_per_user = std::stoi(value);
      else if (key == "test_fraction") cfg.test_fraction = std::stod(value);
      else if (key == "canary_count") cfg.canary_count = std::stoi(value);
      else if (key == "canary_length") cfg.canary_length = std::stoi(value);
      else if (key == "canary_repetitions") cfg.canary_repetitions = std::stoi(value);
      else if (key == "context_order") cfg.context_order = std::stoi(value);
      else if (key == "embed_dim") cfg.embed_dim = std::stoi(value);
      else if (key == "hidden_dim") cfg.hidden_dim = std::stoi(value);
      else if (key == "train_lr") cfg.train_lr = std::stod(value);
      else if (key == "train_epochs") cfg.train_epochs = std::stoi(value);
      else if (key == "batch_size") cfg.batch_size = std::stoi(value);
      else if (key == "num_teachers") cfg.num_teachers = std::stoi(value);
      else if (key == "teacher_batch_size") cfg.teacher_batch_size = std::stoi(value);
      else if (key == "ga_lr") cfg.ga_lr = std::stod(value);
      else if (key == "ga_epochs") cfg.ga_epochs = std::stoi(value);
      else if (key == "looe_lr") cfg.looe_lr = std::stod(value);
      else if (key == "looe_epochs") cfg.looe_epochs = std::stoi(value);
      else if (key == "looe_sigma") cfg.looe_sigma = std::stod(value);
      else if (key == "loode_lr") cfg.loode_lr = std::stod(value);
      else if (key == "loode_epochs") cfg.loode_epochs = std::stoi(value);
      else if (key == "pate_sigma") cfg.pate_sigma = std::stod(value);
      else if (key == "freeze_embeddings") cfg.freeze_embeddings = parse_bool(value);
      else if (key == "beam_width") cfg.beam_width = std::stoi(value);
      else if (key == "rs_samples") cfg.rs_samples = std::stoi(value);
      else if (key == "methods") cfg.methods = parse_methods(value);
      else if (key == "seed") cfg.seed = std::stoull(value);
      else throw std::runtime_error("unknown config key: " + key);
    } catch (const std::invalid_argument&) {
      throw std::runtime_error("config line " + std::to_string(line_no) + ": bad value for " + key);
    }
  }
  return cfg;
}

void ExperimentConfig::validate() const {
  if (vocab_size < 3) throw std::invalid_argument("vocab_size must be >= 3");
  if (records_per_user < 1) throw std::invalid_argument("records_per_user must be >= 1");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0))
    throw std::invalid_argument("test_fraction must be in [0, 1)");
  if (canary_count < 1) throw std::invalid_argument("canary_count must be >= 1");
  if (canary_length < 3) throw std::invalid_argument("canary_length must be >= 3");
  if (canary_repetitions < 0) throw std::invalid_argument("canary_repetitions must be >= 0");
  if (context_order < 1 || embed_dim < 1 || hidden_dim < 1)
    throw std::invalid_argument("bad model dimensions");
  if (!(train_lr > 0.0) || train_epochs < 1 || batch_size < 1)
    throw std::invalid_argument("bad training configuration");
  if (num_teachers < 2) throw std::invalid_argument("num_teachers must be >= 2");
  if (teacher_batch_size < 1) throw std::invalid_argument("teacher_batch_size must be >= 1");
  if (!(ga_lr > 0.0) || ga_epochs < 1 || !(looe_lr > 0.0) || looe_epochs < 1 ||
      !(loode_lr > 0.0) || loode_epochs < 1)
    throw std::invalid_argument("bad unlearning configuration");
  if (looe_sigma < 0.0 || pate_sigma < 0.0) throw std::invalid_argument("sigma must be >= 0");
  if (beam_width < 1 || rs_samples < 1) throw std::invalid_argument("bad attack parameters");
  if (methods.empty()) throw std::invalid_argument("no methods selected");
}

void stage_ingest(const ExperimentConfig& cfg, const std::string& out_dir) {
  Paths p{out_dir};
  fs::create_directories(p.out);
  IngestedLines in = read_corpus_file(cfg.corpus_path);
  Vocabulary vocab = build_vocabulary(in.lines, cfg.vocab_size);
  Corpus corpus = corpus_from_lines(in, vocab, cfg.records_per_user,
                                    derive_seed(cfg.seed, kSeedUsers));

  // Held-out split by seeded shuffle, before any canary exists.
  const std::size_t n_test =
      static_cast<std::size_t>(static_cast<double>(corpus.records.size()) * cfg.test_fraction);
  std::vector<std::size_t> idx(corpus.records.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(derive_seed(cfg.seed, kSeedTestSplit));
  rng.shuffle(idx);
  std::set<std::size_t> test_idx(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));

  Corpus train_corpus, test_corpus;
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    if (test_idx.count(i)) test_corpus.records.push_back(corpus.records[i]);
    else train_corpus.records.push_back(corpus.records[i]);
  }
  train_corpus.rebuild_user_index();
  test_corpus.rebuild_user_index();

  vocab.save_json(p.vocab().string());
  save_corpus(train_corpus, p.base_corpus().string());
  save_corpus(test_corpus, p.test().string());
}

void stage_canary(const ExperimentConfig& cfg, const std::string& out_dir) {
  Paths p{out_dir};
  Vocabulary vocab = Vocabulary::load_json(p.vocab().string());
  Corpus base = load_corpus(p.base_corpus().string());
  std::vector<CanarySpec> canaries = generate_canaries(base, vocab, cfg.canary_count,
                                                       cfg.canary_length,
                                                       derive_seed(cfg.seed, kSeedCanaryGen));
  for (auto& c : canaries) c.repetitions = cfg.canary_repetitions;
  Corpus with = insert_canaries(base, canaries, cfg.canary_repetitions,
                                derive_seed(cfg.seed, kSeedCanaryInsert));
  save_canaries(canaries, p.canaries().string());
  save_corpus(with, p.corpus().string());
}

void stage_train(const ExperimentConfig& cfg, const std::string& out_dir) {
  Paths p{out_dir};
  Vocabulary vocab = Vocabulary::load_json(p.vocab().string());
  Corpus corpus = load_corpus(p.corpus().string());
  std::shared_ptr<std::ofstream> keeper;
  NeuralLM model = train_fresh(cfg.dims(), vocab.hash(), corpus.records, base_train_config(cfg),
                               jsonl_logger(p.log("train_base"), keeper));
  model.save_checkpoint(p.base_ckpt().string());
}

void stage_teachers(const ExperimentConfig& cfg, const std::string& out_dir) {
  Paths p{out_dir};
  Vocabulary vocab = Vocabulary::load_json(p.vocab().string());
  Corpus corpus = load_corpus(p.corpus().string());
  std::vector<Shard> shards =
      partition_shards(corpus, cfg.num_teachers, derive_seed(cfg.seed, kSeedShards));
  TrainConfig tc = base_train_config(cfg);
  tc.batch_size = cfg.teacher_batch_size;
  tc.rng_seed = derive_seed(cfg.seed, kSeedTeachers);
  TeacherSet ts = train_teachers(corpus, shards, cfg.dims(), vocab.hash(), tc, EnsembleMode::kModel);
  save_teachers(ts, p.teachers().string());
  if (has_method(cfg, Method::kLooDE)) {
    TeacherSet ts_data =
        train_teachers(corpus, shards, cfg.dims(), vocab.hash(), tc, EnsembleMode::kData);
    save_teachers(ts_data, p.teachers_data().string());
  }
}

void stage_unlearn(const ExperimentConfig& cfg, const std::string& out_dir) {
  Paths p{out_dir};
  Vocabulary vocab = Vocabulary::load_json(p.vocab().string());
  Corpus corpus = load_corpus(p.corpus().string());
  std::vector<CanarySpec> canaries = load_canaries(p.canaries().string());
  ForgetSet forget = forget_set_for_canaries(corpus, canaries);
  fs::create_directories(p.out / "models");

  NeuralLM base = NeuralLM::load_checkpoint(p.base_ckpt().string(), vocab.hash());
  std::shared_ptr<std::ofstream> keeper;

  for (Method m : cfg.methods) {
    switch (m) {
      case Method::kBaseline:
        fs::copy_file(p.base_ckpt(), p.model(m), fs::copy_options::overwrite_existing);
        break;
      case Method::kRetrained: {
        NeuralLM model = retrain_without(corpus, forget, cfg.dims(), vocab.hash(),
                                         base_train_config(cfg),
                                         jsonl_logger(p.log("retrained"), keeper));
        model.save_checkpoint(p.model(m).string());
        break;
      }
      case Method::kPate: {
        TeacherSet ts = load_teachers(p.teachers().string(), vocab.hash());
        TrainConfig tc = base_train_config(cfg);
        tc.rng_seed = derive_seed(cfg.seed, kSeedPate);
        NoiseConfig noise{cfg.pate_sigma, derive_seed(cfg.seed, kSeedPateNoise)};
        NeuralLM model = pate_train(corpus, ts, tc, noise, jsonl_logger(p.log("pate"), keeper));
        model.save_checkpoint(p.model(m).string());
        break;
      }
      case Method::kGa: {
        UnlearnConfig uc;
        uc.learning_rate = cfg.ga_lr;
        uc.epochs = cfg.ga_epochs;
        uc.freeze_embeddings = cfg.freeze_embeddings;
        uc.rng_seed = derive_seed(cfg.seed, kSeedGa);
        NeuralLM model =
            gradient_ascent_finetune(base, forget, corpus, uc, jsonl_logger(p.log("ga"), keeper));
        model.save_checkpoint(p.model(m).string());
        break;
      }
      case Method::kLooE: {
        TeacherSet ts = load_teachers(p.teachers().string(), vocab.hash());
        UnlearnConfig uc;
        uc.learning_rate = cfg.looe_lr;
        uc.epochs = cfg.looe_epochs;
        uc.freeze_embeddings = cfg.freeze_embeddings;
        uc.sigma = cfg.looe_sigma;
        uc.noise_seed = derive_seed(cfg.seed, kSeedLooENoise);
        uc.rng_seed = derive_seed(cfg.seed, kSeedLooE);
        NeuralLM model =
            loo_finetune(base, ts, forget, corpus, uc, jsonl_logger(p.log("looe"), keeper));
        model.save_checkpoint(p.model(m).string());
        break;
      }
      case Method::kLooDE: {
        TeacherSet ts = load_teachers(p.teachers_data().string(), vocab.hash());
        UnlearnConfig uc;
        uc.learning_rate = cfg.loode_lr;
        uc.epochs = cfg.loode_epochs;
        uc.freeze_embeddings = cfg.freeze_embeddings;
        uc.noise_seed = derive_seed(cfg.seed, kSeedLooDENoise);
        uc.rng_seed = derive_seed(cfg.seed, kSeedLooDE);
        NeuralLM model =
            loo_finetune(base, ts, forget, corpus, uc, jsonl_logger(p.log("loode"), keeper));
        model.save_checkpoint(p.model(m).string());
        break;
      }
    }
  }
}

void stage_attack(const ExperimentConfig& cfg, const std::string& out_dir) {
  Paths p{out_dir};
  Vocabulary vocab = Vocabulary::load_json(p.vocab().string());
  std::vector<CanarySpec> canaries = load_canaries(p.canaries().string());
  fs::create_directories(p.out / "audit");
  AttackParams params{cfg.beam_width, cfg.rs_samples, derive_seed(cfg.seed, kSeedAttack)};
  for (Method m : cfg.methods) {
    NeuralLM model = NeuralLM::load_checkpoint(p.model(m).string(), vocab.hash());
    ExtractionReport report = audit(model, canaries, vocab, params);
    report.save_csv(p.audit_csv(m).string());
    report.save_json(p.audit_json(m).string());
  }
}

std::vector<ResultRow> stage_report(const ExperimentConfig& cfg, const std::string& out_dir) {
  Paths p{out_dir};
  Vocabulary vocab = Vocabulary::load_json(p.vocab().string());
  Corpus test = load_corpus(p.test().string());
  std::vector<ResultRow> rows;
  for (Method m : cfg.methods) {
    NeuralLM model = NeuralLM::load_checkpoint(p.model(m).string(), vocab.hash());
    std::ifstream in(p.audit_json(m));
    if (!in) throw std::runtime_error("missing audit for " + method_name(m));
    nlohmann::json j;
    in >> j;
    MethodInfo info = method_info(cfg, m);
    ResultRow row;
    row.id = info.id;
    row.method = info.label;
    row.ppl = perplexity(model, test.records);
    row.bs_rate = j.at("bs_rate").get<double>();
    row.rs_rate = j.at("rs_rate").get<double>();
    // Wall-clock timings live in timings.txt; the result files stay
    // reproducible byte for byte.
    row.seconds = 0.0;
    rows.push_back(std::move(row));
  }
  emit_report_csv(rows, p.results_csv().string());
  emit_report_json(rows, p.results_json().string());
  return rows;
}

namespace {

struct StageDef {
  std::string name;
  std::function<void()> run;
  std::function<bool()> done;  // all outputs already on disk
};

}  // namespace

std::vector<ResultRow> run_pipeline(const ExperimentConfig& cfg, const std::string& out_dir,
                                    bool resume) {
  cfg.validate();
  Paths p{out_dir};
  fs::create_directories(p.out);

  auto model_files_exist = [&] {
    for (Method m : cfg.methods)
      if (!fs::exists(p.model(m))) return false;
    return true;
  };
  auto audit_files_exist = [&] {
    for (Method m : cfg.methods)
      if (!fs::exists(p.audit_csv(m)) || !fs::exists(p.audit_json(m))) return false;
    return true;
  };

  std::vector<StageDef> stages;
  stages.push_back({"ingest", [&] { stage_ingest(cfg, out_dir); },
                    [&] { return fs::exists(p.vocab()) && fs::exists(p.base_corpus()) &&
                                 fs::exists(p.test()); }});
  stages.push_back({"canary", [&] { stage_canary(cfg, out_dir); },
                    [&] { return fs::exists(p.canaries()) && fs::exists(p.corpus()); }});
  stages.push_back({"train", [&] { stage_train(cfg, out_dir); },
                    [&] { return fs::exists(p.base_ckpt()); }});
  stages.push_back({"teachers", [&] { stage_teachers(cfg, out_dir); },
                    [&] {
                      if (!fs::exists(p.teachers() / "manifest.json")) return false;
                      if (has_method(cfg, Method::kLooDE) &&
                          !fs::exists(p.teachers_data() / "manifest.json"))
                        return false;
                      return true;
                    }});
  stages.push_back({"unlearn", [&] { stage_unlearn(cfg, out_dir); }, model_files_exist});
  stages.push_back({"attack", [&] { stage_attack(cfg, out_dir); }, audit_files_exist});
  stages.push_back({"report", [&] { stage_report(cfg, out_dir); },
                    [&] { return fs::exists(p.results_csv()) && fs::exists(p.results_json()); }});

  for (auto& stage : stages) {
    if (resume && stage.done()) continue;
    const auto start = std::chrono::steady_clock::now();
    try {
      stage.run();
    } catch (const std::exception& e) {
      throw StageError(stage.name, e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    append_timing(p, stage.name, secs);
  }
  return parse_report_csv(p.results_csv().string());
}

}  // namespace ulm
