#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>

#include "ulm/count_lm.hpp"
#include "ulm/neural_lm.hpp"
#include "ulm/prob.hpp"
#include "ulm/rng.hpp"
#include "ulm/synth.hpp"
#include "ulm/vocab.hpp"

using namespace ulm;

namespace {

Record make_record(std::vector<int> tokens, int user = 0) {
  Record r;
  r.user_id = user;
  r.tokens = std::move(tokens);
  return r;
}

// A few SGD steps move the model off the all-zero output layer so the
// gradient check probes a generic point.
NeuralLM warmed_model(LmDims dims, std::uint64_t seed, const std::vector<Record>& recs) {
  NeuralLM m(dims, seed);
  for (int step = 0; step < 3; ++step)
    for (const auto& r : recs) {
      auto [loss, grads] = m.ce_loss_and_grads(r);
      m.sgd_step(grads, 0.5);
    }
  return m;
}

std::vector<Record> lines_to_records(const std::vector<std::string>& lines, const Vocabulary& vocab) {
  std::vector<Record> out;
  for (const auto& l : lines) out.push_back(make_record(tokenize(l, vocab)));
  return out;
}

}  // namespace

TEST_CASE("fresh model predicts the uniform distribution") {
  NeuralLM m(LmDims{50, 2, 8, 16}, 1);
  std::vector<int> ctx{Vocabulary::kBosId, Vocabulary::kBosId};
  ProbDist p = m.predict(ctx);
  for (double v : p) CHECK(v == doctest::Approx(1.0 / 50).epsilon(1e-12));
  CHECK(is_valid_prob_dist(p));
}

TEST_CASE("predictions are valid distributions at arbitrary contexts") {
  Rng rng(3);
  NeuralLM m(LmDims{31, 3, 5, 9}, 7);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> ctx(3);
    for (auto& c : ctx) c = static_cast<int>(rng.next_below(31));
    CHECK(is_valid_prob_dist(m.predict(ctx)));
  }
}

TEST_CASE("model overfit on one repeated record tracks that record") {
  const std::vector<int> seq{4, 9, 2, 7, 5};
  std::vector<Record> recs(16, make_record(seq));
  TrainConfig cfg;
  cfg.learning_rate = 0.5;
  cfg.epochs = 60;
  cfg.rng_seed = 5;
  NeuralLM m = train(NeuralLM(LmDims{12, 2, 8, 16}, 3), recs, cfg);
  std::vector<int> ctx(2);
  for (int t = 0; t < static_cast<int>(seq.size()); ++t) {
    m.context_at(seq, t, ctx);
    ProbDist p = m.predict(ctx);
    int argmax = 0;
    for (int i = 1; i < 12; ++i)
      if (p[static_cast<std::size_t>(i)] > p[static_cast<std::size_t>(argmax)]) argmax = i;
    CHECK(argmax == seq[static_cast<std::size_t>(t)]);
  }
}

TEST_CASE("cross-entropy loss of the uniform model is ln(vocab)") {
  NeuralLM m(LmDims{40, 2, 8, 16}, 11);
  Record r = make_record({3, 17, 25, 8});
  auto [loss, grads] = m.ce_loss_and_grads(r);
  CHECK(loss == doctest::Approx(std::log(40.0)).epsilon(1e-12));
}

TEST_CASE("frozen embeddings receive exactly zero gradient and never move") {
  NeuralLM m(LmDims{20, 2, 6, 10}, 13);
  m.set_freeze_embeddings(true);
  const std::vector<double> emb_before = m.params().emb;
  Record r = make_record({5, 6, 7, 8, 9});
  for (int step = 0; step < 10; ++step) {
    auto [loss, grads] = m.ce_loss_and_grads(r);
    for (double g : grads.emb) CHECK(g == 0.0);
    m.sgd_step(grads, 0.7);
  }
  CHECK(m.params().emb == emb_before);
}

TEST_CASE("backprop matches central finite differences on every parameter group") {
  const LmDims dims{7, 2, 3, 4};
  const Record record = make_record({2, 3, 4, 5, 2, 6});
  NeuralLM model = warmed_model(dims, 21, {record, make_record({6, 5, 4, 3})});

  auto [loss, grads] = model.ce_loss_and_grads(record);
  CHECK(std::isfinite(loss));

  const double h = 1e-5;
  auto grad_groups = NeuralLM::param_groups(grads);
  auto param_groups = model.param_groups();
  REQUIRE(grad_groups.size() == param_groups.size());

  double worst = 0.0;
  for (std::size_t g = 0; g < param_groups.size(); ++g) {
    auto params = param_groups[g].second;
    auto grad = grad_groups[g].second;
    REQUIRE(params.size() == grad.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double orig = params[i];
      params[i] = orig + h;
      const double up = model.ce_loss(record);
      params[i] = orig - h;
      const double down = model.ce_loss(record);
      params[i] = orig;
      const double fd = (up - down) / (2.0 * h);
      const double bp = grad[i];
      const double denom = std::max(std::abs(fd), std::abs(bp));
      if (denom < 1e-7) {
        // below the central-difference noise floor; absolute agreement only
        CHECK(std::abs(fd - bp) <= 1e-9);
        continue;
      }
      const double rel = std::abs(fd - bp) / denom;
      worst = std::max(worst, rel);
      CHECK(rel < 1e-4);
    }
  }
  MESSAGE("worst relative gradient error: ", worst);
}

TEST_CASE("train rejects bad configs; lr=0 leaves parameters bit-identical") {
  auto lines = generate_corpus_lines(SynthSpec{.num_records = 30}, 9);
  Vocabulary vocab = build_vocabulary(lines, 60);
  auto recs = lines_to_records(lines, vocab);
  NeuralLM init(LmDims{vocab.size(), 2, 6, 12}, 17);

  TrainConfig bad;
  bad.epochs = 0;
  CHECK_THROWS(train(init, recs, bad));
  CHECK_THROWS(train(init, {}, TrainConfig{}));

  TrainConfig zero;
  zero.learning_rate = 0.0;
  zero.epochs = 2;
  NeuralLM same = train(init, recs, zero);
  CHECK(same == init);

  TrainConfig one;
  one.epochs = 1;
  one.learning_rate = 0.1;
  NeuralLM moved = train(init, recs, one);
  CHECK_FALSE(moved == init);
}

TEST_CASE("training lowers the loss and is bit-reproducible per seed") {
  auto lines = generate_corpus_lines(SynthSpec{.num_records = 150}, 31);
  Vocabulary vocab = build_vocabulary(lines, 80);
  auto recs = lines_to_records(lines, vocab);

  TrainConfig cfg;
  cfg.learning_rate = 0.25;
  cfg.epochs = 10;
  cfg.rng_seed = 77;

  std::vector<double> losses;
  EpochLogger log = [&losses](const EpochLog& l) { losses.push_back(l.mean_loss); };
  NeuralLM a = train(NeuralLM(LmDims{vocab.size(), 2, 8, 24}, 5), recs, cfg, log);
  REQUIRE(losses.size() == 10);
  CHECK(losses.back() < losses.front());

  NeuralLM b = train(NeuralLM(LmDims{vocab.size(), 2, 8, 24}, 5), recs, cfg);
  CHECK(a == b);
  CHECK(a.params_checksum() == b.params_checksum());
}

TEST_CASE("perplexity: uniform model gives |V|, perfect model gives 1") {
  NeuralLM uniform(LmDims{64, 2, 4, 8}, 3);
  std::vector<Record> recs{make_record({5, 6, 7}), make_record({9, 10, 11, 12})};
  CHECK(perplexity(uniform, recs) == doctest::Approx(64.0).epsilon(1e-12));

  struct PerfectLM {
    double sequence_log_prob(const Record&) const { return 0.0; }
    int token_count(const Record& r) const { return static_cast<int>(r.tokens.size()); }
  } perfect;
  CHECK(perplexity(perfect, recs) == 1.0);

  CHECK_THROWS(perplexity(uniform, std::vector<Record>{}));
}

TEST_CASE("count LM probabilities follow the smoothing closed form") {
  const double eps = 0.01;
  const double u = 1e-3;
  std::vector<Record> recs;
  for (int i = 0; i < 5; ++i) recs.push_back(make_record({2, 3, 4}));
  for (int i = 0; i < 5; ++i) recs.push_back(make_record({5, 6, 7 + i}));
  CountLM lm = fit_count_lm(recs, eps, u);

  CHECK(lm.prob({2, 3, 4}) == 0.5 * (1.0 - eps) + eps * u);
  CHECK(lm.prob({9, 9, 9}) == eps * u);  // h(0)
  CHECK(lm.prob({9, 9, 9}) == smooth(SmoothingSpec{eps, u}, 0.0));

  // Brute-force recount oracle over an enumerated space.
  Rng rng(12);
  std::vector<Record> random_recs;
  std::map<std::vector<int>, int> oracle;
  for (int i = 0; i < 200; ++i) {
    std::vector<int> seq{static_cast<int>(rng.next_below(3)) + 2,
                         static_cast<int>(rng.next_below(3)) + 2};
    ++oracle[seq];
    random_recs.push_back(make_record(seq));
  }
  CountLM lm2 = fit_count_lm(random_recs, eps, u);
  for (int a = 2; a < 5; ++a)
    for (int b = 2; b < 5; ++b) {
      std::vector<int> seq{a, b};
      const double expected =
          (1.0 - eps) * (static_cast<double>(oracle[seq]) / 200.0) + eps * u;
      CHECK(lm2.prob(seq) == expected);
    }

  CHECK_THROWS(fit_count_lm({}, eps, u));
  CHECK_THROWS(fit_count_lm(recs, 0.0, u));
  CHECK_THROWS(fit_count_lm(recs, 1.0, u));
  CHECK_THROWS(fit_count_lm(recs, eps, 0.0));
}

TEST_CASE("count LM perplexity on its own single record follows h(1)") {
  const double eps = 0.01;
  const double u = 0.5;
  std::vector<Record> one{make_record({4, 5, 6, 7})};
  CountLM lm = fit_count_lm(one, eps, u);
  const double h1 = (1.0 - eps) * 1.0 + eps * u;
  CHECK(perplexity(lm, one) == doctest::Approx(std::pow(h1, -1.0 / 4.0)).epsilon(1e-12));
}

TEST_CASE("lipschitz constants of the smoothing function") {
  CHECK(lipschitz_constants(SmoothingSpec{0.01, 1e-3}).c_h == doctest::Approx(0.99));
  CHECK(lipschitz_constants(SmoothingSpec{0.999, 1e-3}).c_h == doctest::Approx(0.001));
  const SmoothingSpec s{0.05, 2e-3};
  const auto lip = lipschitz_constants(s);
  CHECK(lip.c_log == doctest::Approx((1.0 - 0.05) / (0.05 * 2e-3)));

  // Grid oracle: |log h(x) - log h(y)| <= C_log |x - y| over [0,1]^2.
  for (int i = 0; i <= 100; ++i)
    for (int j = 0; j <= 100; ++j) {
      const double x = i / 100.0;
      const double y = j / 100.0;
      const double lhs = std::abs(std::log(smooth(s, x)) - std::log(smooth(s, y)));
      CHECK(lhs <= lip.c_log * std::abs(x - y) + 1e-12);
    }
}

TEST_CASE("checkpoints round-trip bit-exactly and check the vocab hash") {
  NeuralLM m(LmDims{23, 2, 5, 9}, 41, /*vocab_hash=*/0xABCDEF);
  Record r = make_record({3, 4, 5, 6});
  auto [loss, grads] = m.ce_loss_and_grads(r);
  m.sgd_step(grads, 0.3);

  const std::string path = (std::filesystem::temp_directory_path() / "ulm_ckpt_rt.json").string();
  m.save_checkpoint(path);
  NeuralLM back = NeuralLM::load_checkpoint(path, 0xABCDEF);
  CHECK(back == m);
  CHECK(back.params_checksum() == m.params_checksum());
  CHECK_THROWS(NeuralLM::load_checkpoint(path, 0x123456));
  std::filesystem::remove(path);
}
