#include "ulm/count_lm.hpp"

#include <cmath>
#include <stdexcept>

#include "ulm/rng.hpp"

namespace ulm {

LipschitzConstants lipschitz_constants(const SmoothingSpec& s) {
  if (!(s.eps > 0.0 && s.eps < 1.0)) throw std::invalid_argument("eps must be in (0,1)");
  if (!(s.floor_u > 0.0)) throw std::invalid_argument("smoothing floor must be positive");
  return {1.0 - s.eps, (1.0 - s.eps) / (s.eps * s.floor_u)};
}

std::size_t CountLM::SeqHash::operator()(const std::vector<int>& v) const {
  return static_cast<std::size_t>(fnv1a64(v.data(), v.size() * sizeof(int)));
}

double CountLM::prob(const std::vector<int>& sequence) const {
  if (total_ == 0) throw std::runtime_error("count LM has no training data");
  auto it = counts_.find(sequence);
  const std::size_t c = it == counts_.end() ? 0 : it->second;
  return smooth(spec_, static_cast<double>(c) / static_cast<double>(total_));
}

double CountLM::sequence_log_prob(const Record& record) const {
  return std::log(prob(record.tokens));
}

std::size_t CountLM::count(const std::vector<int>& sequence) const {
  auto it = counts_.find(sequence);
  return it == counts_.end() ? 0 : it->second;
}

CountLM fit_count_lm(const std::vector<Record>& records, double eps, double u) {
  if (records.empty()) throw std::invalid_argument("count LM needs at least one record");
  SmoothingSpec spec{eps, u};
  lipschitz_constants(spec);  // validates eps and u
  CountLM lm(spec);
  for (const auto& r : records) {
    ++lm.counts_[r.tokens];
    ++lm.total_;
  }
  return lm;
}

}  // namespace ulm
