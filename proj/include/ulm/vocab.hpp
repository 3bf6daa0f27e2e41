#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace ulm {

// Token <-> dense id bijection with reserved UNK and BOS entries.
class Vocabulary {
 public:
  static constexpr int kUnkId = 0;
  static constexpr int kBosId = 1;
  static constexpr const char* kUnkToken = "<unk>";
  static constexpr const char* kBosToken = "<bos>";

  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> tokens);

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  // Returns kUnkId for unknown words.
  int id(const std::string& token) const;
  bool contains(const std::string& token) const { return index_.count(token) > 0; }

  // Ids excluding UNK/BOS; canaries and random suffixes draw from these.
  int num_non_reserved() const { return size() - 2; }
  int non_reserved_id(int i) const { return i + 2; }
  bool is_reserved(int id) const { return id == kUnkId || id == kBosId; }

  std::uint64_t hash() const;

  void save_json(const std::string& path) const;
  static Vocabulary load_json(const std::string& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// The max_size - 2 most frequent whitespace tokens plus UNK and BOS; ties
// broken by lexicographic token order. Throws on empty input.
Vocabulary build_vocabulary(const std::vector<std::string>& lines, int max_size);

// Whitespace split, unknown words map to UNK. No BOS is inserted here.
std::vector<int> tokenize(const std::string& line, const Vocabulary& vocab);
std::string detokenize(const std::vector<int>& ids, const Vocabulary& vocab);

std::vector<std::string> split_whitespace(const std::string& line);

}  // namespace ulm
