#include "ulm/synth.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "ulm/rng.hpp"

namespace ulm {

namespace {

std::string word_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "w%03d", i);
  return buf;
}

// Index sampled proportionally to the given weights.
int sample_weighted(Rng& rng, const std::vector<double>& cumulative) {
  const double u = rng.next_double() * cumulative.back();
  int lo = 0, hi = static_cast<int>(cumulative.size()) - 1;
  while (lo < hi) {
    int mid = (lo + hi) / 2;
    if (cumulative[static_cast<std::size_t>(mid)] <= u) lo = mid + 1;
    else hi = mid;
  }
  return lo;
}

}  // namespace

std::vector<std::string> generate_corpus_lines(const SynthSpec& spec, std::uint64_t rng_seed) {
  if (spec.distinct_words < 2 || spec.num_records < 1 || spec.min_len < 1 ||
      spec.max_len < spec.min_len || spec.branching < 1)
    throw std::invalid_argument("bad synthetic corpus spec");

  Rng rng(rng_seed);
  const int w = spec.distinct_words;

  // Zipf unigram weights.
  std::vector<double> unigram_cum(static_cast<std::size_t>(w));
  double acc = 0.0;
  for (int i = 0; i < w; ++i) {
    acc += 1.0 / static_cast<double>(i + 1);
    unigram_cum[static_cast<std::size_t>(i)] = acc;
  }

  // Preferred successors with random weights per word.
  std::vector<std::vector<int>> successors(static_cast<std::size_t>(w));
  std::vector<std::vector<double>> successor_cum(static_cast<std::size_t>(w));
  for (int i = 0; i < w; ++i) {
    auto& succ = successors[static_cast<std::size_t>(i)];
    auto& cum = successor_cum[static_cast<std::size_t>(i)];
    double s = 0.0;
    for (int b = 0; b < spec.branching; ++b) {
      succ.push_back(static_cast<int>(rng.next_below(static_cast<std::uint64_t>(w))));
      s += 0.25 + rng.next_double();
      cum.push_back(s);
    }
  }

  std::vector<std::string> lines;
  lines.reserve(static_cast<std::size_t>(spec.num_records));
  for (int r = 0; r < spec.num_records; ++r) {
    const int len = rng.next_int(spec.min_len, spec.max_len);
    std::string line;
    int cur = sample_weighted(rng, unigram_cum);
    line += word_name(cur);
    for (int t = 1; t < len; ++t) {
      int next;
      if (rng.next_double() < spec.follow_prob) {
        const auto& cum = successor_cum[static_cast<std::size_t>(cur)];
        next = successors[static_cast<std::size_t>(cur)][static_cast<std::size_t>(
            sample_weighted(rng, cum))];
      } else {
        next = sample_weighted(rng, unigram_cum);
      }
      line += ' ';
      line += word_name(next);
      cur = next;
    }
    lines.push_back(std::move(line));
  }
  return lines;
}

void write_lines(const std::vector<std::string>& lines, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& l : lines) out << l << '\n';
}

}  // namespace ulm
