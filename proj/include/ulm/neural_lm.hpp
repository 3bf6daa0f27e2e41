#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ulm/corpus.hpp"
#include "ulm/prob.hpp"

namespace ulm {

struct LmDims {
  int vocab = 0;
  int order = 2;    // context window N
  int embed = 16;   // E
  int hidden = 64;  // H
  bool operator==(const LmDims&) const = default;
};

// One buffer per parameter tensor; doubles as the gradient container.
struct LmParams {
  std::vector<double> emb;  // vocab x embed
  std::vector<double> w1;   // hidden x (order*embed)
  std::vector<double> b1;   // hidden
  std::vector<double> w2;   // vocab x hidden
  std::vector<double> b2;   // vocab

  static LmParams zeros(const LmDims& d);
  void set_zero();
  void add_scaled(const LmParams& other, double s);
};

struct TrainConfig {
  double learning_rate = 0.1;
  int epochs = 10;
  int batch_size = 16;
  std::uint64_t rng_seed = 1;
  bool freeze_embeddings = false;
};

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  std::uint64_t params_checksum = 0;
};
using EpochLogger = std::function<void(const EpochLog&)>;

// Fixed-order neural next-token LM: concatenated embeddings -> tanh hidden
// -> softmax over the vocabulary. Embeddings and hidden weights start
// uniform(-0.1, 0.1); the output layer starts at zero, so an untrained model
// predicts the uniform distribution.
class NeuralLM {
 public:
  NeuralLM() = default;
  NeuralLM(LmDims dims, std::uint64_t init_seed, std::uint64_t vocab_hash = 0);

  const LmDims& dims() const { return dims_; }
  std::uint64_t vocab_hash() const { return vocab_hash_; }

  bool freeze_embeddings() const { return freeze_embeddings_; }
  void set_freeze_embeddings(bool f) { freeze_embeddings_ = f; }

  // Scratch space for one forward/backward step; reusable across steps.
  struct Workspace {
    std::vector<double> x;        // order*embed
    std::vector<double> pre;      // hidden pre-activation
    std::vector<double> h;        // hidden
    std::vector<double> logits;   // vocab
    std::vector<double> probs;    // vocab
    std::vector<double> logp;     // vocab
    std::vector<double> dlogits;  // vocab
    std::vector<double> dh;       // hidden
    std::vector<double> dpre;     // hidden
    std::vector<double> dx;       // order*embed
  };
  Workspace make_workspace() const;

  // context must hold exactly `order` token ids (BOS-padded by the caller).
  void forward(std::span<const int> context, Workspace& ws) const;
  // Accumulates gradients for one step given dL/dlogits in ws.dlogits.
  // A frozen embedding table receives no gradient.
  void backward(std::span<const int> context, Workspace& ws, LmParams& grads) const;

  ProbDist predict(std::span<const int> context) const;
  void log_probs(std::span<const int> context, std::span<double> out) const;

  // Writes the BOS-padded context preceding position t of `tokens`.
  void context_at(const std::vector<int>& tokens, int t, std::span<int> out) const;

  // Mean over steps of -log p(w_t | context); exact backprop gradients.
  std::pair<double, LmParams> ce_loss_and_grads(const Record& record) const;
  double ce_loss(const Record& record) const;

  // Sum over steps of log p(w_t | context).
  double sequence_log_prob(const Record& record) const;
  int token_count(const Record& record) const { return static_cast<int>(record.tokens.size()); }

  // theta -= lr * grads, skipping frozen groups.
  void sgd_step(const LmParams& grads, double lr);

  const LmParams& params() const { return params_; }
  LmParams& mutable_params() { return params_; }
  std::uint64_t params_checksum() const;

  // Named parameter groups, for the finite-difference harness.
  std::vector<std::pair<std::string, std::span<double>>> param_groups();
  static std::vector<std::pair<std::string, std::span<double>>> param_groups(LmParams& p);

  void save_checkpoint(const std::string& path) const;
  // Throws when expected_vocab_hash != 0 and the stored hash differs.
  static NeuralLM load_checkpoint(const std::string& path, std::uint64_t expected_vocab_hash = 0);

  bool operator==(const NeuralLM& other) const;

 private:
  LmDims dims_;
  LmParams params_;
  std::uint64_t vocab_hash_ = 0;
  bool freeze_embeddings_ = false;
};

// Mini-batch SGD over Eq.-style mean token cross entropy; records are
// reshuffled every epoch from the config seed. Aborts on non-finite loss.
NeuralLM train(NeuralLM model, const std::vector<Record>& records, const TrainConfig& cfg,
               const EpochLogger& logger = {});

// exp(mean per-token negative log-likelihood over all tokens of all records).
template <class LM>
double perplexity(const LM& lm, const std::vector<Record>& records) {
  if (records.empty()) throw std::invalid_argument("perplexity over empty record set");
  double nll = 0.0;
  long long tokens = 0;
  for (const auto& r : records) {
    nll -= lm.sequence_log_prob(r);
    tokens += lm.token_count(r);
  }
  if (tokens == 0) throw std::invalid_argument("perplexity over zero tokens");
  return std::exp(nll / static_cast<double>(tokens));
}

}  // namespace ulm
