#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "ulm/corpus.hpp"

namespace ulm {

// Affine smoothing h(f) = (1-eps)*f + eps*u: positive and Lipschitz, and
// log(h) is Lipschitz too since h is bounded below by eps*u.
struct SmoothingSpec {
  double eps = 0.01;
  double floor_u = 1e-4;
};

inline double smooth(const SmoothingSpec& s, double relative_freq) {
  return (1.0 - s.eps) * relative_freq + s.eps * s.floor_u;
}

struct LipschitzConstants {
  double c_h = 0.0;    // slope of h
  double c_log = 0.0;  // sup |h'| / inf h, bound for log o h
};

LipschitzConstants lipschitz_constants(const SmoothingSpec& s);

// Whole-record-sequence frequency model: p(w) = h(count(w) / |D'|).
class CountLM {
 public:
  CountLM(SmoothingSpec spec) : spec_(spec) {}

  double prob(const std::vector<int>& sequence) const;
  double sequence_log_prob(const Record& record) const;
  int token_count(const Record& record) const { return static_cast<int>(record.tokens.size()); }

  std::size_t training_size() const { return total_; }
  std::size_t count(const std::vector<int>& sequence) const;
  const SmoothingSpec& smoothing() const { return spec_; }

  friend CountLM fit_count_lm(const std::vector<Record>& records, double eps, double u);

 private:
  struct SeqHash {
    std::size_t operator()(const std::vector<int>& v) const;
  };
  SmoothingSpec spec_;
  std::unordered_map<std::vector<int>, std::size_t, SeqHash> counts_;
  std::size_t total_ = 0;
};

CountLM fit_count_lm(const std::vector<Record>& records, double eps, double u);

}  // namespace ulm
