#include "ulm/unlearn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include "ulm/kernels.hpp"
#include "ulm/rng.hpp"

namespace ulm {

namespace {

constexpr std::uint64_t kInitStream = 0xF17;
constexpr std::uint64_t kShuffleStream = 0x7A1;

void validate(const UnlearnConfig& cfg) {
  if (!(cfg.learning_rate >= 0.0)) throw std::invalid_argument("learning rate must be >= 0");
  if (cfg.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (cfg.sigma < 0.0) throw std::invalid_argument("sigma must be >= 0");
}

struct CtxKey {
  std::vector<int> ctx;
  bool operator==(const CtxKey&) const = default;
};
struct CtxKeyHash {
  std::size_t operator()(const CtxKey& k) const {
    return static_cast<std::size_t>(fnv1a64(k.ctx.data(), k.ctx.size() * sizeof(int)));
  }
};

// KL(g || student) summed over the entry's forget positions, with
// d(loss)/dlogits accumulated per position. Log-space student terms keep the
// loss finite even when the student assigns vanishing probability.
double kl_term(const ProbDist& g, const NeuralLM::Workspace& ws) {
  double kl = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (g[i] > 0.0) kl += g[i] * (std::log(g[i]) - ws.logp[i]);
  return kl;
}

}  // namespace

double kl_divergence(const ProbDist& p, const ProbDist& q) {
  if (p.size() != q.size()) throw std::invalid_argument("distribution sizes differ");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) throw std::runtime_error("infinite divergence: P(w) > 0 where Q(w) = 0");
    kl += p[i] * (std::log(p[i]) - std::log(q[i]));
  }
  return kl;
}

NeuralLM train_fresh(const LmDims& dims, std::uint64_t vocab_hash,
                     const std::vector<Record>& records, const TrainConfig& cfg,
                     const EpochLogger& logger) {
  NeuralLM model(dims, derive_seed(cfg.rng_seed, kInitStream), vocab_hash);
  TrainConfig tc = cfg;
  tc.rng_seed = derive_seed(cfg.rng_seed, kShuffleStream);
  return train(std::move(model), records, tc, logger);
}

NeuralLM loo_finetune(const NeuralLM& base, const TeacherSet& teachers, const ForgetSet& forget,
                      const Corpus& corpus, const UnlearnConfig& cfg, const EpochLogger& logger) {
  validate(cfg);
  NeuralLM student = base;
  student.set_freeze_embeddings(cfg.freeze_embeddings);
  if (forget.empty()) return student;

  for (const auto& e : forget.entries)
    teachers.shard_of(corpus.records.at(e.record_index).user_id);  // owner resolvable up front

  // The noiseless LOO target depends only on (owner, context); cache it.
  std::unordered_map<CtxKey, ProbDist, CtxKeyHash> target_cache;
  const int order = base.dims().order;
  auto target_for = [&](int owner, const std::vector<int>& ctx) -> const ProbDist& {
    CtxKey key;
    key.ctx.reserve(static_cast<std::size_t>(order) + 1);
    key.ctx.push_back(teachers.shard_of(owner));
    key.ctx.insert(key.ctx.end(), ctx.begin(), ctx.end());
    auto it = target_cache.find(key);
    if (it == target_cache.end())
      it = target_cache.emplace(std::move(key), loo_aggregate(teachers, owner, ctx)).first;
    return it->second;
  };

  Rng noise_rng(derive_seed(cfg.noise_seed, 0x9015E));
  std::vector<std::size_t> order_idx(forget.entries.size());
  for (std::size_t i = 0; i < order_idx.size(); ++i) order_idx[i] = i;

  NeuralLM::Workspace ws = student.make_workspace();
  LmParams grads = LmParams::zeros(student.dims());
  std::vector<int> ctx(static_cast<std::size_t>(order));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.rng_seed, static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order_idx);
    double epoch_loss = 0.0;
    for (std::size_t oi : order_idx) {
      const ForgetEntry& entry = forget.entries[oi];
      const Record& rec = corpus.records.at(entry.record_index);
      grads.set_zero();
      double entry_loss = 0.0;
      bool touched = false;
      for (const Span& span : entry.spans) {
        for (int t = span.begin; t < span.end; ++t) {
          student.context_at(rec.tokens, t, ctx);
          const ProbDist& clean = target_for(rec.user_id, ctx);
          ProbDist target = cfg.sigma > 0.0
                                ? add_noise_and_renormalize(clean, cfg.sigma, noise_rng)
                                : clean;
          student.forward(ctx, ws);
          entry_loss += kl_term(target, ws);
          for (std::size_t i = 0; i < target.size(); ++i)
            ws.dlogits[i] = ws.probs[i] - target[i];
          student.backward(ctx, ws, grads);
          touched = true;
        }
      }
      if (touched) student.sgd_step(grads, cfg.learning_rate);
      epoch_loss += entry_loss;
    }
    epoch_loss /= static_cast<double>(forget.entries.size());
    if (!std::isfinite(epoch_loss))
      throw std::runtime_error("non-finite unlearning loss at epoch " + std::to_string(epoch));
    if (logger) logger(EpochLog{epoch, epoch_loss, student.params_checksum()});
  }
  return student;
}

NeuralLM gradient_ascent_finetune(const NeuralLM& base, const ForgetSet& forget,
                                  const Corpus& corpus, const UnlearnConfig& cfg,
                                  const EpochLogger& logger) {
  validate(cfg);
  NeuralLM model = base;
  model.set_freeze_embeddings(cfg.freeze_embeddings);
  if (forget.empty()) return model;

  std::vector<std::size_t> order_idx(forget.entries.size());
  for (std::size_t i = 0; i < order_idx.size(); ++i) order_idx[i] = i;

  NeuralLM::Workspace ws = model.make_workspace();
  LmParams grads = LmParams::zeros(model.dims());
  std::vector<int> ctx(static_cast<std::size_t>(base.dims().order));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.rng_seed, static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order_idx);
    double epoch_loss = 0.0;
    for (std::size_t oi : order_idx) {
      const ForgetEntry& entry = forget.entries[oi];
      const Record& rec = corpus.records.at(entry.record_index);
      grads.set_zero();
      double entry_loss = 0.0;
      bool touched = false;
      for (const Span& span : entry.spans) {
        for (int t = span.begin; t < span.end; ++t) {
          model.context_at(rec.tokens, t, ctx);
          model.forward(ctx, ws);
          const int target = rec.tokens[static_cast<std::size_t>(t)];
          entry_loss += ws.logp[static_cast<std::size_t>(target)];  // -CE
          // d(-CE)/dlogits = onehot - softmax
          for (std::size_t i = 0; i < ws.probs.size(); ++i) ws.dlogits[i] = -ws.probs[i];
          ws.dlogits[static_cast<std::size_t>(target)] += 1.0;
          model.backward(ctx, ws, grads);
          touched = true;
        }
      }
      if (touched) model.sgd_step(grads, cfg.learning_rate);
      epoch_loss += entry_loss;
    }
    epoch_loss /= static_cast<double>(forget.entries.size());
    if (!std::isfinite(epoch_loss))
      throw std::runtime_error("non-finite gradient-ascent loss at epoch " + std::to_string(epoch));
    if (logger) logger(EpochLog{epoch, epoch_loss, model.params_checksum()});
  }
  return model;
}

std::vector<Record> remove_forgotten(const Corpus& corpus, const ForgetSet& forget) {
  std::unordered_map<std::size_t, const std::vector<Span>*> marked;
  for (const auto& e : forget.entries) marked[e.record_index] = &e.spans;
  std::vector<Record> kept;
  kept.reserve(corpus.records.size());
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    auto it = marked.find(i);
    if (it == marked.end()) {
      kept.push_back(corpus.records[i]);
      continue;
    }
    const Record& rec = corpus.records[i];
    Record remainder;
    remainder.user_id = rec.user_id;
    int cursor = 0;
    for (const Span& s : *it->second) {
      for (int t = cursor; t < s.begin; ++t)
        remainder.tokens.push_back(rec.tokens[static_cast<std::size_t>(t)]);
      cursor = s.end;
    }
    for (int t = cursor; t < static_cast<int>(rec.tokens.size()); ++t)
      remainder.tokens.push_back(rec.tokens[static_cast<std::size_t>(t)]);
    if (!remainder.tokens.empty()) kept.push_back(std::move(remainder));
  }
  return kept;
}

NeuralLM retrain_without(const Corpus& corpus, const ForgetSet& forget, const LmDims& dims,
                         std::uint64_t vocab_hash, const TrainConfig& cfg,
                         const EpochLogger& logger) {
  std::vector<Record> kept = remove_forgotten(corpus, forget);
  if (kept.empty()) throw std::runtime_error("nothing left to train on after removal");
  return train_fresh(dims, vocab_hash, kept, cfg, logger);
}

NeuralLM pate_train(const Corpus& corpus, const TeacherSet& teachers, const TrainConfig& cfg,
                    const NoiseConfig& noise, const EpochLogger& logger) {
  if (teachers.mode != EnsembleMode::kModel)
    throw std::invalid_argument("pate_train expects a model-ensemble teacher set");
  if (corpus.records.empty()) throw std::invalid_argument("training corpus is empty");
  if (cfg.epochs < 1) throw std::invalid_argument("epochs must be >= 1");

  NeuralLM student(teachers.teachers.front().dims(), derive_seed(cfg.rng_seed, kInitStream),
                   teachers.teachers.front().vocab_hash());
  student.set_freeze_embeddings(cfg.freeze_embeddings);
  const LmDims dims = student.dims();
  const int order = dims.order;

  // All distinct contexts in the corpus, in first-appearance order, so the
  // noiseless teacher aggregates can be computed once up front (in parallel).
  std::unordered_map<CtxKey, std::size_t, CtxKeyHash> ctx_slot;
  std::vector<CtxKey> ctx_list;
  {
    std::vector<int> ctx(static_cast<std::size_t>(order));
    for (const auto& rec : corpus.records) {
      for (int t = 0; t < static_cast<int>(rec.tokens.size()); ++t) {
        student.context_at(rec.tokens, t, ctx);
        CtxKey key{std::vector<int>(ctx.begin(), ctx.end())};
        if (ctx_slot.emplace(key, ctx_list.size()).second) ctx_list.push_back(std::move(key));
      }
    }
  }
  std::vector<ProbDist> targets(ctx_list.size());
#pragma omp parallel for schedule(dynamic, 16) if (kernels::parallel_enabled())
  for (long long i = 0; i < static_cast<long long>(ctx_list.size()); ++i)
    targets[static_cast<std::size_t>(i)] = pate_aggregate(teachers, ctx_list[static_cast<std::size_t>(i)].ctx);

  const std::size_t n = corpus.records.size();
  std::vector<std::size_t> order_idx(n);
  for (std::size_t i = 0; i < n; ++i) order_idx[i] = i;

  const std::size_t bs = static_cast<std::size_t>(std::max(1, cfg.batch_size));
  std::vector<LmParams> slot_grads(std::min(bs, n), LmParams::zeros(dims));
  std::vector<double> slot_loss(slot_grads.size(), 0.0);
  LmParams batch_grads = LmParams::zeros(dims);
  const std::uint64_t train_seed = derive_seed(cfg.rng_seed, kShuffleStream);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(train_seed, static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order_idx);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t count = std::min(bs, n - start);
#pragma omp parallel for schedule(static) if (kernels::parallel_enabled())
      for (long long b = 0; b < static_cast<long long>(count); ++b) {
        const std::size_t rec_idx = order_idx[start + static_cast<std::size_t>(b)];
        const Record& rec = corpus.records[rec_idx];
        LmParams grads = LmParams::zeros(dims);
        NeuralLM::Workspace ws = student.make_workspace();
        std::vector<int> ctx(static_cast<std::size_t>(order));
        const int rec_len = static_cast<int>(rec.tokens.size());
        const double inv_t = 1.0 / static_cast<double>(rec_len);
        double loss = 0.0;
        for (int t = 0; t < rec_len; ++t) {
          student.context_at(rec.tokens, t, ctx);
          CtxKey key{std::vector<int>(ctx.begin(), ctx.end())};
          const ProbDist& clean = targets[ctx_slot.at(key)];
          ProbDist target = clean;
          if (noise.sigma > 0.0) {
            // Per-(epoch, record, step) stream keeps redraws independent of
            // batch scheduling.
            Rng step_rng(derive_seed(derive_seed(noise.rng_seed, static_cast<std::uint64_t>(epoch)),
                                     (static_cast<std::uint64_t>(rec_idx) << 20) |
                                         static_cast<std::uint64_t>(t)));
            target = add_noise_and_renormalize(clean, noise.sigma, step_rng);
          }
          student.forward(ctx, ws);
          // soft-target cross entropy: -sum_w g_w log q_w
          for (std::size_t i = 0; i < target.size(); ++i) {
            if (target[i] > 0.0) loss -= target[i] * ws.logp[i] * inv_t;
            ws.dlogits[i] = (ws.probs[i] - target[i]) * inv_t;
          }
          student.backward(ctx, ws, grads);
        }
        slot_loss[static_cast<std::size_t>(b)] = loss;
        slot_grads[static_cast<std::size_t>(b)] = std::move(grads);
      }
      batch_grads.set_zero();
      const double inv = 1.0 / static_cast<double>(count);
      for (std::size_t b = 0; b < count; ++b) {
        batch_grads.add_scaled(slot_grads[b], inv);
        epoch_loss += slot_loss[b];
      }
      student.sgd_step(batch_grads, cfg.learning_rate);
    }
    epoch_loss /= static_cast<double>(n);
    if (!std::isfinite(epoch_loss))
      throw std::runtime_error("non-finite distillation loss at epoch " + std::to_string(epoch));
    if (logger) logger(EpochLog{epoch, epoch_loss, student.params_checksum()});
  }
  return student;
}

}  // namespace ulm
