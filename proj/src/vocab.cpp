#include "ulm/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <stdexcept>

#include <json.hpp>

#include "ulm/rng.hpp"

namespace ulm {

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < 2 || tokens_[0] != kUnkToken || tokens_[1] != kBosToken)
    throw std::invalid_argument("vocabulary must start with UNK and BOS");
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    auto [it, inserted] = index_.emplace(tokens_[i], static_cast<int>(i));
    if (!inserted) throw std::invalid_argument("duplicate token in vocabulary: " + tokens_[i]);
  }
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnkId : it->second;
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : tokens_) {
    h = fnv1a64(t.data(), t.size(), h);
    h = fnv1a64("\x1f", 1, h);
  }
  return h;
}

void Vocabulary::save_json(const std::string& path) const {
  nlohmann::json j;
  j["tokens"] = tokens_;
  j["unk_id"] = kUnkId;
  j["bos_id"] = kBosId;
  j["hash"] = hash();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

Vocabulary Vocabulary::load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  nlohmann::json j;
  in >> j;
  Vocabulary v(j.at("tokens").get<std::vector<std::string>>());
  if (j.contains("hash") && j["hash"].get<std::uint64_t>() != v.hash())
    throw std::runtime_error("vocabulary hash mismatch in " + path);
  return v;
}

std::vector<std::string> split_whitespace(const std::string& line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

Vocabulary build_vocabulary(const std::vector<std::string>& lines, int max_size) {
  if (max_size < 3) throw std::invalid_argument("max_size must be >= 3");
  // std::map keeps counting deterministic and gives the lexicographic
  // tie-break for free.
  std::map<std::string, std::size_t> counts;
  for (const auto& line : lines)
    for (auto& w : split_whitespace(line))
      if (w != Vocabulary::kUnkToken && w != Vocabulary::kBosToken) ++counts[w];
  if (counts.empty()) throw std::runtime_error("empty corpus");

  std::vector<std::pair<std::string, std::size_t>> by_freq(counts.begin(), counts.end());
  std::stable_sort(by_freq.begin(), by_freq.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  std::vector<std::string> tokens{Vocabulary::kUnkToken, Vocabulary::kBosToken};
  const std::size_t want = static_cast<std::size_t>(max_size) - 2;
  for (std::size_t i = 0; i < by_freq.size() && i < want; ++i) tokens.push_back(by_freq[i].first);
  return Vocabulary(std::move(tokens));
}

std::vector<int> tokenize(const std::string& line, const Vocabulary& vocab) {
  std::vector<int> ids;
  for (auto& w : split_whitespace(line)) ids.push_back(vocab.id(w));
  return ids;
}

std::string detokenize(const std::vector<int>& ids, const Vocabulary& vocab) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += vocab.token(ids[i]);
  }
  return out;
}

}  // namespace ulm
