#include "ulm/neural_lm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "ulm/kernels.hpp"
#include "ulm/rng.hpp"

namespace ulm {

LmParams LmParams::zeros(const LmDims& d) {
  LmParams p;
  p.emb.assign(static_cast<std::size_t>(d.vocab) * d.embed, 0.0);
  p.w1.assign(static_cast<std::size_t>(d.hidden) * d.order * d.embed, 0.0);
  p.b1.assign(static_cast<std::size_t>(d.hidden), 0.0);
  p.w2.assign(static_cast<std::size_t>(d.vocab) * d.hidden, 0.0);
  p.b2.assign(static_cast<std::size_t>(d.vocab), 0.0);
  return p;
}

void LmParams::set_zero() {
  std::fill(emb.begin(), emb.end(), 0.0);
  std::fill(w1.begin(), w1.end(), 0.0);
  std::fill(b1.begin(), b1.end(), 0.0);
  std::fill(w2.begin(), w2.end(), 0.0);
  std::fill(b2.begin(), b2.end(), 0.0);
}

void LmParams::add_scaled(const LmParams& other, double s) {
  kernels::axpy(emb.size(), s, other.emb.data(), emb.data());
  kernels::axpy(w1.size(), s, other.w1.data(), w1.data());
  kernels::axpy(b1.size(), s, other.b1.data(), b1.data());
  kernels::axpy(w2.size(), s, other.w2.data(), w2.data());
  kernels::axpy(b2.size(), s, other.b2.data(), b2.data());
}

NeuralLM::NeuralLM(LmDims dims, std::uint64_t init_seed, std::uint64_t vocab_hash)
    : dims_(dims), params_(LmParams::zeros(dims)), vocab_hash_(vocab_hash) {
  if (dims.vocab < 3 || dims.order < 1 || dims.embed < 1 || dims.hidden < 1)
    throw std::invalid_argument("bad model dimensions");
  Rng rng(init_seed);
  for (auto& v : params_.emb) v = -0.1 + 0.2 * rng.next_double();
  for (auto& v : params_.w1) v = -0.1 + 0.2 * rng.next_double();
  // b1, w2, b2 stay zero: softmax of zero logits is the uniform start.
}

NeuralLM::Workspace NeuralLM::make_workspace() const {
  Workspace ws;
  ws.x.resize(static_cast<std::size_t>(dims_.order) * dims_.embed);
  ws.pre.resize(static_cast<std::size_t>(dims_.hidden));
  ws.h.resize(static_cast<std::size_t>(dims_.hidden));
  ws.logits.resize(static_cast<std::size_t>(dims_.vocab));
  ws.probs.resize(static_cast<std::size_t>(dims_.vocab));
  ws.logp.resize(static_cast<std::size_t>(dims_.vocab));
  ws.dlogits.resize(static_cast<std::size_t>(dims_.vocab));
  ws.dh.resize(static_cast<std::size_t>(dims_.hidden));
  ws.dpre.resize(static_cast<std::size_t>(dims_.hidden));
  ws.dx.resize(static_cast<std::size_t>(dims_.order) * dims_.embed);
  return ws;
}

void NeuralLM::forward(std::span<const int> context, Workspace& ws) const {
  if (static_cast<int>(context.size()) != dims_.order)
    throw std::invalid_argument("context length must equal model order");
  const int E = dims_.embed;
  for (int i = 0; i < dims_.order; ++i) {
    const int tok = context[static_cast<std::size_t>(i)];
    if (tok < 0 || tok >= dims_.vocab) throw std::out_of_range("token id outside vocabulary");
    const double* row = params_.emb.data() + static_cast<std::size_t>(tok) * E;
    std::copy(row, row + E, ws.x.data() + static_cast<std::size_t>(i) * E);
  }
  kernels::matvec(params_.w1.data(), dims_.hidden, dims_.order * E, ws.x.data(), ws.pre.data());
  for (int i = 0; i < dims_.hidden; ++i) ws.pre[static_cast<std::size_t>(i)] += params_.b1[static_cast<std::size_t>(i)];
  kernels::tanh_vec(ws.pre.size(), ws.pre.data(), ws.h.data());
  kernels::matvec(params_.w2.data(), dims_.vocab, dims_.hidden, ws.h.data(), ws.logits.data());
  for (int i = 0; i < dims_.vocab; ++i) ws.logits[static_cast<std::size_t>(i)] += params_.b2[static_cast<std::size_t>(i)];
  kernels::softmax_and_logp(ws.logits, ws.probs, ws.logp);
}

void NeuralLM::backward(std::span<const int> context, Workspace& ws, LmParams& grads) const {
  const int E = dims_.embed;
  // output layer
  kernels::outer_acc(grads.w2.data(), dims_.vocab, dims_.hidden, ws.dlogits.data(), ws.h.data(), 1.0);
  kernels::axpy(grads.b2.size(), 1.0, ws.dlogits.data(), grads.b2.data());
  kernels::matvec_t(params_.w2.data(), dims_.vocab, dims_.hidden, ws.dlogits.data(), ws.dh.data());
  // hidden layer
  kernels::tanh_backward(ws.h.size(), ws.h.data(), ws.dh.data(), ws.dpre.data());
  kernels::outer_acc(grads.w1.data(), dims_.hidden, dims_.order * E, ws.dpre.data(), ws.x.data(), 1.0);
  kernels::axpy(grads.b1.size(), 1.0, ws.dpre.data(), grads.b1.data());
  if (!freeze_embeddings_) {
    kernels::matvec_t(params_.w1.data(), dims_.hidden, dims_.order * E, ws.dpre.data(), ws.dx.data());
    for (int i = 0; i < dims_.order; ++i) {
      const int tok = context[static_cast<std::size_t>(i)];
      kernels::serial::axpy(static_cast<std::size_t>(E), 1.0,
                            ws.dx.data() + static_cast<std::size_t>(i) * E,
                            grads.emb.data() + static_cast<std::size_t>(tok) * E);
    }
  }
}

ProbDist NeuralLM::predict(std::span<const int> context) const {
  Workspace ws = make_workspace();
  forward(context, ws);
  return ws.probs;
}

void NeuralLM::log_probs(std::span<const int> context, std::span<double> out) const {
  Workspace ws = make_workspace();
  forward(context, ws);
  std::copy(ws.logp.begin(), ws.logp.end(), out.begin());
}

void NeuralLM::context_at(const std::vector<int>& tokens, int t, std::span<int> out) const {
  for (int i = 0; i < dims_.order; ++i) {
    const int src = t - dims_.order + i;
    out[static_cast<std::size_t>(i)] = src < 0 ? Vocabulary::kBosId : tokens[static_cast<std::size_t>(src)];
  }
}

std::pair<double, LmParams> NeuralLM::ce_loss_and_grads(const Record& record) const {
  if (record.tokens.empty()) throw std::invalid_argument("empty record");
  LmParams grads = LmParams::zeros(dims_);
  Workspace ws = make_workspace();
  std::vector<int> ctx(static_cast<std::size_t>(dims_.order));
  const int T = static_cast<int>(record.tokens.size());
  const double inv_t = 1.0 / static_cast<double>(T);
  double loss = 0.0;
  for (int t = 0; t < T; ++t) {
    context_at(record.tokens, t, ctx);
    forward(ctx, ws);
    const int target = record.tokens[static_cast<std::size_t>(t)];
    loss -= ws.logp[static_cast<std::size_t>(target)] * inv_t;
    // d(mean CE)/dlogits = (softmax - onehot) / T
    for (int i = 0; i < dims_.vocab; ++i)
      ws.dlogits[static_cast<std::size_t>(i)] = ws.probs[static_cast<std::size_t>(i)] * inv_t;
    ws.dlogits[static_cast<std::size_t>(target)] -= inv_t;
    backward(ctx, ws, grads);
  }
  return {loss, std::move(grads)};
}

double NeuralLM::ce_loss(const Record& record) const {
  return -sequence_log_prob(record) / static_cast<double>(record.tokens.size());
}

double NeuralLM::sequence_log_prob(const Record& record) const {
  Workspace ws = make_workspace();
  std::vector<int> ctx(static_cast<std::size_t>(dims_.order));
  double lp = 0.0;
  for (int t = 0; t < static_cast<int>(record.tokens.size()); ++t) {
    context_at(record.tokens, t, ctx);
    forward(ctx, ws);
    lp += ws.logp[static_cast<std::size_t>(record.tokens[static_cast<std::size_t>(t)])];
  }
  return lp;
}

void NeuralLM::sgd_step(const LmParams& grads, double lr) {
  if (!freeze_embeddings_)
    kernels::axpy(params_.emb.size(), -lr, grads.emb.data(), params_.emb.data());
  kernels::axpy(params_.w1.size(), -lr, grads.w1.data(), params_.w1.data());
  kernels::axpy(params_.b1.size(), -lr, grads.b1.data(), params_.b1.data());
  kernels::axpy(params_.w2.size(), -lr, grads.w2.data(), params_.w2.data());
  kernels::axpy(params_.b2.size(), -lr, grads.b2.data(), params_.b2.data());
}

std::uint64_t NeuralLM::params_checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto fold = [&h](const std::vector<double>& v) { h = fnv1a64(v.data(), v.size() * sizeof(double), h); };
  fold(params_.emb);
  fold(params_.w1);
  fold(params_.b1);
  fold(params_.w2);
  fold(params_.b2);
  return h;
}

std::vector<std::pair<std::string, std::span<double>>> NeuralLM::param_groups() {
  return param_groups(params_);
}

std::vector<std::pair<std::string, std::span<double>>> NeuralLM::param_groups(LmParams& p) {
  return {{"embedding", p.emb}, {"w1", p.w1}, {"b1", p.b1}, {"w2", p.w2}, {"b2", p.b2}};
}

bool NeuralLM::operator==(const NeuralLM& other) const {
  return dims_ == other.dims_ && params_.emb == other.params_.emb &&
         params_.w1 == other.params_.w1 && params_.b1 == other.params_.b1 &&
         params_.w2 == other.params_.w2 && params_.b2 == other.params_.b2;
}

void NeuralLM::save_checkpoint(const std::string& path) const {
  nlohmann::json j;
  j["kind"] = "neural_lm";
  j["vocab_size"] = dims_.vocab;
  j["context_order"] = dims_.order;
  j["embed_dim"] = dims_.embed;
  j["hidden_dim"] = dims_.hidden;
  j["vocab_hash"] = vocab_hash_;
  j["emb"] = params_.emb;
  j["w1"] = params_.w1;
  j["b1"] = params_.b1;
  j["w2"] = params_.w2;
  j["b2"] = params_.b2;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump() << "\n";
}

NeuralLM NeuralLM::load_checkpoint(const std::string& path, std::uint64_t expected_vocab_hash) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  nlohmann::json j;
  in >> j;
  if (j.at("kind").get<std::string>() != "neural_lm")
    throw std::runtime_error("not a neural_lm checkpoint: " + path);
  NeuralLM m;
  m.dims_ = LmDims{j.at("vocab_size").get<int>(), j.at("context_order").get<int>(),
                   j.at("embed_dim").get<int>(), j.at("hidden_dim").get<int>()};
  m.vocab_hash_ = j.at("vocab_hash").get<std::uint64_t>();
  if (expected_vocab_hash != 0 && m.vocab_hash_ != 0 && m.vocab_hash_ != expected_vocab_hash)
    throw std::runtime_error("checkpoint vocabulary hash mismatch: " + path);
  m.params_.emb = j.at("emb").get<std::vector<double>>();
  m.params_.w1 = j.at("w1").get<std::vector<double>>();
  m.params_.b1 = j.at("b1").get<std::vector<double>>();
  m.params_.w2 = j.at("w2").get<std::vector<double>>();
  m.params_.b2 = j.at("b2").get<std::vector<double>>();
  const LmParams ref = LmParams::zeros(m.dims_);
  if (m.params_.emb.size() != ref.emb.size() || m.params_.w1.size() != ref.w1.size() ||
      m.params_.b1.size() != ref.b1.size() || m.params_.w2.size() != ref.w2.size() ||
      m.params_.b2.size() != ref.b2.size())
    throw std::runtime_error("checkpoint parameter shapes do not match dims: " + path);
  return m;
}

NeuralLM train(NeuralLM model, const std::vector<Record>& records, const TrainConfig& cfg,
               const EpochLogger& logger) {
  if (records.empty()) throw std::invalid_argument("training corpus is empty");
  if (cfg.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (!(cfg.learning_rate >= 0.0)) throw std::invalid_argument("learning rate must be >= 0");
  if (cfg.batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  model.set_freeze_embeddings(cfg.freeze_embeddings);

  const std::size_t n = records.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  std::vector<LmParams> slot_grads(std::min(bs, n), LmParams::zeros(model.dims()));
  std::vector<double> slot_loss(slot_grads.size(), 0.0);
  LmParams batch_grads = LmParams::zeros(model.dims());

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.rng_seed, static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t count = std::min(bs, n - start);
      // Per-record gradients land in their own slot; the reduction below is
      // serial and in batch order, so results do not depend on thread count.
#pragma omp parallel for schedule(static) if (kernels::parallel_enabled())
      for (long long b = 0; b < static_cast<long long>(count); ++b) {
        auto [loss, grads] = model.ce_loss_and_grads(records[order[start + static_cast<std::size_t>(b)]]);
        slot_loss[static_cast<std::size_t>(b)] = loss;
        slot_grads[static_cast<std::size_t>(b)] = std::move(grads);
      }
      batch_grads.set_zero();
      const double inv = 1.0 / static_cast<double>(count);
      for (std::size_t b = 0; b < count; ++b) {
        batch_grads.add_scaled(slot_grads[b], inv);
        epoch_loss += slot_loss[b];
      }
      model.sgd_step(batch_grads, cfg.learning_rate);
    }
    epoch_loss /= static_cast<double>(n);
    if (!std::isfinite(epoch_loss))
      throw std::runtime_error("non-finite training loss at epoch " + std::to_string(epoch));
    if (logger) logger(EpochLog{epoch, epoch_loss, model.params_checksum()});
  }
  return model;
}

}  // namespace ulm
