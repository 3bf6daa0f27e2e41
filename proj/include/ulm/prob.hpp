#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace ulm {

// Probability vector over the vocabulary: non-negative, sums to 1.
using ProbDist = std::vector<double>;

inline bool is_valid_prob_dist(const ProbDist& p, double tol = 1e-9) {
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) return false;
    sum += v;
  }
  return std::abs(sum - 1.0) <= tol;
}

inline void check_prob_dist(const ProbDist& p, const std::string& what) {
  if (!is_valid_prob_dist(p)) throw std::runtime_error("invalid probability distribution: " + what);
}

inline ProbDist uniform_dist(std::size_t n) {
  return ProbDist(n, 1.0 / static_cast<double>(n));
}

}  // namespace ulm
