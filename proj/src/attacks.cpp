#include "ulm/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "ulm/kernels.hpp"
#include "ulm/rng.hpp"

namespace ulm {

namespace {

struct Hypothesis {
  std::vector<int> ids;
  double score = 0.0;
};

// Higher score first; equal scores prefer lexicographically smaller ids.
bool better(const Hypothesis& a, const Hypothesis& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.ids < b.ids;
}

}  // namespace

double conditional_suffix_ppl(const NeuralLM& model, const std::vector<int>& prefix,
                              const std::vector<int>& suffix) {
  if (suffix.empty()) throw std::invalid_argument("empty suffix");
  std::vector<int> tokens = prefix;
  tokens.insert(tokens.end(), suffix.begin(), suffix.end());
  NeuralLM::Workspace ws = model.make_workspace();
  std::vector<int> ctx(static_cast<std::size_t>(model.dims().order));
  double nll = 0.0;
  for (std::size_t t = prefix.size(); t < tokens.size(); ++t) {
    model.context_at(tokens, static_cast<int>(t), ctx);
    model.forward(ctx, ws);
    nll -= ws.logp[static_cast<std::size_t>(tokens[t])];
  }
  return std::exp(nll / static_cast<double>(suffix.size()));
}

bool beam_search_extract(const NeuralLM& model, const std::vector<int>& canary, int beam_width) {
  if (beam_width < 1) throw std::invalid_argument("beam width must be >= 1");
  if (canary.size() < 3) throw std::invalid_argument("canary must have at least 3 tokens");
  const std::vector<int> prefix(canary.begin(), canary.begin() + 2);
  const std::vector<int> suffix(canary.begin() + 2, canary.end());
  const int vocab = model.dims().vocab;

  std::vector<Hypothesis> beam{{{}, 0.0}};
  NeuralLM::Workspace ws = model.make_workspace();
  std::vector<int> ctx(static_cast<std::size_t>(model.dims().order));
  std::vector<int> tokens;

  for (std::size_t step = 0; step < suffix.size(); ++step) {
    std::vector<Hypothesis> candidates;
    candidates.reserve(beam.size() * static_cast<std::size_t>(vocab - 2));
    for (const auto& hyp : beam) {
      tokens = prefix;
      tokens.insert(tokens.end(), hyp.ids.begin(), hyp.ids.end());
      model.context_at(tokens, static_cast<int>(tokens.size()), ctx);
      model.forward(ctx, ws);
      // Continuations range over words, i.e. the non-reserved vocabulary.
      for (int tok = 2; tok < vocab; ++tok) {
        Hypothesis next;
        next.ids = hyp.ids;
        next.ids.push_back(tok);
        next.score = hyp.score + ws.logp[static_cast<std::size_t>(tok)];
        candidates.push_back(std::move(next));
      }
    }
    std::sort(candidates.begin(), candidates.end(), better);
    if (candidates.size() > static_cast<std::size_t>(beam_width))
      candidates.resize(static_cast<std::size_t>(beam_width));
    beam = std::move(candidates);
  }
  return std::any_of(beam.begin(), beam.end(),
                     [&suffix](const Hypothesis& h) { return h.ids == suffix; });
}

bool random_sampling_extract(const NeuralLM& model, const std::vector<int>& canary,
                             const Vocabulary& vocab, int num_samples, std::uint64_t rng_seed) {
  if (canary.size() < 3) throw std::invalid_argument("canary must have at least 3 tokens");
  const std::vector<int> prefix(canary.begin(), canary.begin() + 2);
  const std::vector<int> suffix(canary.begin() + 2, canary.end());
  const double suffix_ppl = conditional_suffix_ppl(model, prefix, suffix);

  Rng rng(rng_seed);
  std::vector<int> candidate(suffix.size());
  for (int s = 0; s < num_samples; ++s) {
    do {
      for (auto& tok : candidate)
        tok = vocab.non_reserved_id(
            static_cast<int>(rng.next_below(static_cast<std::uint64_t>(vocab.num_non_reserved()))));
    } while (candidate == suffix);
    if (conditional_suffix_ppl(model, prefix, candidate) <= suffix_ppl) return false;
  }
  return true;
}

ExtractionReport audit(const NeuralLM& model, const std::vector<CanarySpec>& canaries,
                       const Vocabulary& vocab, const AttackParams& params) {
  if (canaries.empty()) throw std::invalid_argument("no canaries to audit");
  ExtractionReport report;
  report.params = params;
  report.canaries.resize(canaries.size());

#pragma omp parallel for schedule(dynamic) if (kernels::parallel_enabled())
  for (long long i = 0; i < static_cast<long long>(canaries.size()); ++i) {
    const auto& spec = canaries[static_cast<std::size_t>(i)];
    CanaryAudit a;
    a.canary_id = static_cast<int>(i);
    a.bs_extracted = beam_search_extract(model, spec.tokens, params.beam_width);

    const std::vector<int> prefix(spec.tokens.begin(), spec.tokens.begin() + 2);
    const std::vector<int> suffix(spec.tokens.begin() + 2, spec.tokens.end());
    a.suffix_ppl = conditional_suffix_ppl(model, prefix, suffix);

    // Seed derived from the canary itself keeps the audit independent of the
    // order canaries are listed in.
    const std::uint64_t seed = derive_seed(
        params.rng_seed, fnv1a64(spec.tokens.data(), spec.tokens.size() * sizeof(int)));
    Rng rng(seed);
    std::vector<int> candidate(suffix.size());
    double best = std::numeric_limits<double>::infinity();
    for (int s = 0; s < params.num_samples; ++s) {
      do {
        for (auto& tok : candidate)
          tok = vocab.non_reserved_id(static_cast<int>(
              rng.next_below(static_cast<std::uint64_t>(vocab.num_non_reserved()))));
      } while (candidate == suffix);
      best = std::min(best, conditional_suffix_ppl(model, prefix, candidate));
    }
    a.best_sample_ppl = best;
    a.rs_extracted = a.suffix_ppl < best;
    report.canaries[static_cast<std::size_t>(i)] = a;
  }

  double bs = 0.0, rs = 0.0;
  for (const auto& a : report.canaries) {
    bs += a.bs_extracted ? 1.0 : 0.0;
    rs += a.rs_extracted ? 1.0 : 0.0;
  }
  report.bs_rate = bs / static_cast<double>(report.canaries.size());
  report.rs_rate = rs / static_cast<double>(report.canaries.size());
  return report;
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void ExtractionReport::save_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "canary_id,bs_extracted,rs_extracted,suffix_ppl,best_sample_ppl\n";
  for (const auto& a : canaries)
    out << a.canary_id << ',' << (a.bs_extracted ? 1 : 0) << ',' << (a.rs_extracted ? 1 : 0)
        << ',' << fmt_double(a.suffix_ppl) << ',' << fmt_double(a.best_sample_ppl) << '\n';
}

void ExtractionReport::save_json(const std::string& path) const {
  nlohmann::json j;
  j["bs_rate"] = bs_rate;
  j["rs_rate"] = rs_rate;
  j["beam_width"] = params.beam_width;
  j["num_samples"] = params.num_samples;
  j["seed"] = params.rng_seed;
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& a : canaries)
    arr.push_back({{"canary_id", a.canary_id},
                   {"bs_extracted", a.bs_extracted},
                   {"rs_extracted", a.rs_extracted},
                   {"suffix_ppl", a.suffix_ppl},
                   {"best_sample_ppl", a.best_sample_ppl}});
  j["canaries"] = arr;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

}  // namespace ulm
