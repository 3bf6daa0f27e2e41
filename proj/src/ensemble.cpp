#include "ulm/ensemble.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "ulm/kernels.hpp"

namespace ulm {

std::string to_string(EnsembleMode mode) {
  return mode == EnsembleMode::kModel ? "model" : "data";
}

EnsembleMode ensemble_mode_from_string(const std::string& s) {
  if (s == "model") return EnsembleMode::kModel;
  if (s == "data") return EnsembleMode::kData;
  throw std::invalid_argument("unknown ensemble mode: " + s);
}

int TeacherSet::shard_of(int user_id) const {
  auto it = shard_map.find(user_id);
  if (it == shard_map.end())
    throw std::invalid_argument("user not covered by any shard: " + std::to_string(user_id));
  return it->second;
}

namespace {

std::uint64_t records_fingerprint(const std::vector<Record>& records) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  std::uint64_t n = records.size();
  h = fnv1a64(&n, sizeof n, h);
  for (const auto& r : records) {
    std::uint32_t len = static_cast<std::uint32_t>(r.tokens.size());
    h = fnv1a64(&len, sizeof len, h);
    h = fnv1a64(r.tokens.data(), r.tokens.size() * sizeof(int), h);
  }
  return h;
}

std::vector<Record> gather_records(const Corpus& corpus, const std::vector<std::size_t>& idxs) {
  std::vector<Record> out;
  out.reserve(idxs.size());
  for (std::size_t i : idxs) out.push_back(corpus.records[i]);
  return out;
}

}  // namespace

TeacherSet train_teachers(const Corpus& corpus, const std::vector<Shard>& shards,
                          const LmDims& dims, std::uint64_t vocab_hash,
                          const TrainConfig& cfg, EnsembleMode mode) {
  const int m_count = static_cast<int>(shards.size());
  if (m_count < 2) throw std::invalid_argument("need at least 2 shards");
  for (const auto& s : shards)
    if (s.record_indices.empty()) throw std::invalid_argument("empty shard in teacher training");

  // Training sets in canonical corpus order.
  std::vector<std::vector<Record>> train_sets(static_cast<std::size_t>(m_count));
  for (int m = 0; m < m_count; ++m) {
    if (mode == EnsembleMode::kModel) {
      train_sets[static_cast<std::size_t>(m)] =
          gather_records(corpus, shards[static_cast<std::size_t>(m)].record_indices);
    } else {
      std::vector<std::size_t> idxs;
      for (int o = 0; o < m_count; ++o)
        if (o != m)
          idxs.insert(idxs.end(), shards[static_cast<std::size_t>(o)].record_indices.begin(),
                      shards[static_cast<std::size_t>(o)].record_indices.end());
      std::sort(idxs.begin(), idxs.end());
      train_sets[static_cast<std::size_t>(m)] = gather_records(corpus, idxs);
    }
  }

  TeacherSet ts;
  ts.mode = mode;
  ts.teachers.resize(static_cast<std::size_t>(m_count));
  ts.seeds.resize(static_cast<std::size_t>(m_count));
  for (int m = 0; m < m_count; ++m)
    ts.seeds[static_cast<std::size_t>(m)] =
        derive_seed(cfg.rng_seed, records_fingerprint(train_sets[static_cast<std::size_t>(m)]));

  // Teacher trainings are data-independent; each runs on its own seed.
#pragma omp parallel for schedule(dynamic) if (kernels::parallel_enabled())
  for (int m = 0; m < m_count; ++m) {
    const std::uint64_t seed = ts.seeds[static_cast<std::size_t>(m)];
    TrainConfig tc = cfg;
    tc.rng_seed = derive_seed(seed, 1);
    NeuralLM model(dims, derive_seed(seed, 0), vocab_hash);
    ts.teachers[static_cast<std::size_t>(m)] =
        train(std::move(model), train_sets[static_cast<std::size_t>(m)], tc);
  }

  for (const auto& s : shards)
    for (int u : s.user_ids) ts.shard_map[u] = s.shard_id;
  return ts;
}

ProbDist loo_aggregate(const TeacherSet& ts, int excluded_user, std::span<const int> context) {
  if (ts.num_teachers() < 2) throw std::invalid_argument("leave-one-out needs at least 2 teachers");
  const int excluded_shard = ts.shard_of(excluded_user);
  if (ts.mode == EnsembleMode::kData)
    return ts.teachers[static_cast<std::size_t>(excluded_shard)].predict(context);

  std::vector<ProbDist> preds;
  preds.reserve(static_cast<std::size_t>(ts.num_teachers() - 1));
  for (int m = 0; m < ts.num_teachers(); ++m)
    if (m != excluded_shard) preds.push_back(ts.teachers[static_cast<std::size_t>(m)].predict(context));
  std::vector<const std::vector<double>*> ptrs;
  for (const auto& p : preds) ptrs.push_back(&p);
  return kernels::pairwise_mean(ptrs);
}

ProbDist pate_aggregate(const TeacherSet& ts, std::span<const int> context) {
  if (ts.num_teachers() < 2) throw std::invalid_argument("ensemble needs at least 2 teachers");
  std::vector<ProbDist> preds;
  preds.reserve(static_cast<std::size_t>(ts.num_teachers()));
  for (const auto& t : ts.teachers) preds.push_back(t.predict(context));
  std::vector<const std::vector<double>*> ptrs;
  for (const auto& p : preds) ptrs.push_back(&p);
  return kernels::pairwise_mean(ptrs);
}

ProbDist pate_aggregate(const TeacherSet& ts, std::span<const int> context,
                        const NoiseConfig& noise) {
  ProbDist p = pate_aggregate(ts, context);
  if (noise.sigma == 0.0) return p;
  Rng rng(noise.rng_seed);
  return add_noise_and_renormalize(p, noise.sigma, rng);
}

ProbDist add_noise_and_renormalize(const ProbDist& dist, double sigma, Rng& rng) {
  if (sigma < 0.0) throw std::invalid_argument("sigma must be >= 0");
  if (sigma == 0.0) return dist;
  ProbDist out(dist.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    const double v = dist[i] + sigma * rng.next_gaussian();
    out[i] = v > 0.0 ? v : 0.0;
    sum += out[i];
  }
  if (sum <= 0.0) return uniform_dist(dist.size());
  for (double& v : out) v /= sum;
  return out;
}

void save_teachers(const TeacherSet& ts, const std::string& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json j;
  j["mode"] = to_string(ts.mode);
  j["num_teachers"] = ts.num_teachers();
  j["seeds"] = ts.seeds;
  nlohmann::json sm = nlohmann::json::object();
  for (const auto& [u, m] : ts.shard_map) sm[std::to_string(u)] = m;
  j["shard_map"] = sm;
  std::ofstream out(dir + "/manifest.json");
  if (!out) throw std::runtime_error("cannot write teacher manifest in " + dir);
  out << j.dump(2) << "\n";
  for (int m = 0; m < ts.num_teachers(); ++m)
    ts.teachers[static_cast<std::size_t>(m)].save_checkpoint(dir + "/teacher_" + std::to_string(m) + ".ckpt");
}

TeacherSet load_teachers(const std::string& dir, std::uint64_t expected_vocab_hash) {
  std::ifstream in(dir + "/manifest.json");
  if (!in) throw std::runtime_error("cannot read teacher manifest in " + dir);
  nlohmann::json j;
  in >> j;
  TeacherSet ts;
  ts.mode = ensemble_mode_from_string(j.at("mode").get<std::string>());
  const int m_count = j.at("num_teachers").get<int>();
  ts.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  for (const auto& [key, val] : j.at("shard_map").items())
    ts.shard_map[std::stoi(key)] = val.get<int>();
  ts.teachers.reserve(static_cast<std::size_t>(m_count));
  for (int m = 0; m < m_count; ++m)
    ts.teachers.push_back(NeuralLM::load_checkpoint(dir + "/teacher_" + std::to_string(m) + ".ckpt",
                                                    expected_vocab_hash));
  return ts;
}

}  // namespace ulm
