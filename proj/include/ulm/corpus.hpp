#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ulm/vocab.hpp"

namespace ulm {

// Half-open token-index interval [begin, end) within one record.
struct Span {
  int begin = 0;
  int end = 0;
  bool operator==(const Span&) const = default;
};

struct Record {
  int user_id = -1;
  std::vector<int> tokens;
  std::vector<Span> forget_spans;  // disjoint, sorted, inside [0, size)

  bool fully_forgotten() const {
    return forget_spans.size() == 1 && forget_spans[0].begin == 0 &&
           forget_spans[0].end == static_cast<int>(tokens.size());
  }
};

struct Corpus {
  std::vector<Record> records;
  std::map<int, std::vector<std::size_t>> user_index;  // user_id -> record indices

  std::size_t size() const { return records.size(); }
  int num_users() const { return static_cast<int>(user_index.size()); }
  void rebuild_user_index();
  void validate() const;  // user_index covers records exactly, spans well-formed
  std::uint64_t fingerprint() const;
};

struct Shard {
  int shard_id = -1;
  std::set<int> user_ids;
  std::vector<std::size_t> record_indices;
};

struct CanarySpec {
  int owner_user_id = -1;
  std::vector<int> tokens;
  int repetitions = 0;
};

struct ForgetEntry {
  std::size_t record_index = 0;
  std::vector<Span> spans;
};

struct ForgetSet {
  std::vector<ForgetEntry> entries;
  bool empty() const { return entries.empty(); }
};

// Shuffles records with the seeded RNG and deals consecutive blocks of
// records_per_user to user ids 0,1,2,...; a final partial block forms the
// last user.
Corpus assign_users(std::vector<std::vector<int>> token_records, int records_per_user,
                    std::uint64_t rng_seed);

// num_users distinct owners sampled without replacement; each canary is
// `length` tokens uniform over non-reserved vocab, resampled if it collides
// with corpus text or another canary (up to 1000 tries, then error).
std::vector<CanarySpec> generate_canaries(const Corpus& corpus, const Vocabulary& vocab,
                                          int num_users, int length, std::uint64_t rng_seed);

// Appends `repetitions` standalone copies of each canary (forget span across
// the whole record) and reshuffles the record list with the seeded RNG.
Corpus insert_canaries(const Corpus& corpus, const std::vector<CanarySpec>& canaries,
                       int repetitions, std::uint64_t rng_seed);

// Users shuffled by seed, dealt round-robin into M shards.
std::vector<Shard> partition_shards(const Corpus& corpus, int num_shards,
                                    std::uint64_t rng_seed);

// All records of the requesting users that carry non-empty forget spans.
ForgetSet build_forget_set(const Corpus& corpus, const std::set<int>& requesting_user_ids);

// Corpus file: one record per line, optional leading "user_id<TAB>" prefix.
// Either all lines carry the prefix or none do.
struct IngestedLines {
  std::vector<std::string> lines;     // text without the user prefix
  std::vector<int> user_ids;          // empty when no prefix was present
};
IngestedLines read_corpus_file(const std::string& path);

// Builds a corpus from ingested lines: explicit user ids when the file
// carried them, otherwise assign_users with the given block size.
Corpus corpus_from_lines(const IngestedLines& in, const Vocabulary& vocab,
                         int records_per_user, std::uint64_t rng_seed);

// Compact binary corpus serialization (corpus.bin).
void save_corpus(const Corpus& corpus, const std::string& path);
Corpus load_corpus(const std::string& path);

// Canary manifest: JSON list of {owner, tokens, repetitions}.
void save_canaries(const std::vector<CanarySpec>& canaries, const std::string& path);
std::vector<CanarySpec> load_canaries(const std::string& path);

}  // namespace ulm
