#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <map>
#include <set>

#include "ulm/corpus.hpp"
#include "ulm/rng.hpp"
#include "ulm/synth.hpp"
#include "ulm/vocab.hpp"

using namespace ulm;

namespace {

Corpus small_random_corpus(int num_records, int records_per_user, std::uint64_t seed,
                           int vocab_size = 50, int len = 6) {
  Rng rng(seed);
  std::vector<std::vector<int>> recs;
  for (int i = 0; i < num_records; ++i) {
    std::vector<int> r;
    for (int t = 0; t < len; ++t)
      r.push_back(2 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(vocab_size - 2))));
    recs.push_back(std::move(r));
  }
  return assign_users(std::move(recs), records_per_user, derive_seed(seed, 1));
}

Vocabulary toy_vocab(int size) {
  std::vector<std::string> toks{Vocabulary::kUnkToken, Vocabulary::kBosToken};
  for (int i = 2; i < size; ++i) toks.push_back("t" + std::to_string(i));
  return Vocabulary(std::move(toks));
}

}  // namespace

TEST_CASE("build_vocabulary keeps the most frequent words plus reserved") {
  Vocabulary v = build_vocabulary({"a b", "a c"}, 5);
  CHECK(v.size() == 5);
  CHECK(v.token(Vocabulary::kUnkId) == Vocabulary::kUnkToken);
  CHECK(v.token(Vocabulary::kBosId) == Vocabulary::kBosToken);
  CHECK(v.contains("a"));
  CHECK(v.contains("b"));
  CHECK(v.contains("c"));
  // "a" is the most frequent and takes the first non-reserved id.
  CHECK(v.id("a") == 2);
}

TEST_CASE("build_vocabulary rejects empty input") {
  CHECK_THROWS(build_vocabulary({}, 10));
  CHECK_THROWS(build_vocabulary({"", "   "}, 10));
  CHECK_THROWS(build_vocabulary({"a"}, 2));
}

TEST_CASE("vocabulary truncation against a frequency-count oracle") {
  // 1000 lines over 500 distinct words with a skewed profile.
  Rng rng(99);
  std::vector<std::string> lines;
  std::map<std::string, int> oracle;
  for (int i = 0; i < 1000; ++i) {
    std::string line;
    for (int t = 0; t < 8; ++t) {
      int w = static_cast<int>(rng.next_below(rng.next_below(499) + 1));  // skew to low ids
      std::string word = "word" + std::to_string(w);
      ++oracle[word];
      if (t) line += ' ';
      line += word;
    }
    lines.push_back(std::move(line));
  }
  Vocabulary v = build_vocabulary(lines, 102);
  CHECK(v.size() == 102);

  // Oracle ranking by (count desc, lex asc).
  std::vector<std::pair<std::string, int>> ranked(oracle.begin(), oracle.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  for (int i = 0; i < 100; ++i) CHECK(v.contains(ranked[static_cast<std::size_t>(i)].first));
  // Every out-of-vocab word tokenizes to UNK.
  for (std::size_t i = 100; i < ranked.size(); ++i) {
    if (v.contains(ranked[i].first)) continue;  // equal-count boundary ties may swap
    auto ids = tokenize(ranked[i].first, v);
    REQUIRE(ids.size() == 1);
    CHECK(ids[0] == Vocabulary::kUnkId);
  }
}

TEST_CASE("tokenize maps unknown words to UNK and round-trips in-vocab text") {
  Vocabulary v = build_vocabulary({"a b c d"}, 6);
  auto ids = tokenize("a b", v);
  CHECK(ids == std::vector<int>{v.id("a"), v.id("b")});
  auto unk = tokenize("a zzz", v);
  CHECK(unk == std::vector<int>{v.id("a"), Vocabulary::kUnkId});
  CHECK(tokenize("", v).empty());
  const std::string s = "d c b a a";
  CHECK(detokenize(tokenize(s, v), v) == s);
}

TEST_CASE("assign_users deals consecutive blocks after a seeded shuffle") {
  {
    std::vector<std::vector<int>> recs(200, std::vector<int>{2, 3});
    Corpus c = assign_users(std::move(recs), 100, 7);
    CHECK(c.num_users() == 2);
    CHECK(c.user_index.at(0).size() == 100);
    CHECK(c.user_index.at(1).size() == 100);
  }
  {
    std::vector<std::vector<int>> recs(5, std::vector<int>{2});
    Corpus c = assign_users(std::move(recs), 2, 7);
    CHECK(c.num_users() == 3);
    CHECK(c.user_index.at(0).size() == 2);
    CHECK(c.user_index.at(1).size() == 2);
    CHECK(c.user_index.at(2).size() == 1);
  }
  CHECK_THROWS(assign_users({{2}}, 0, 7));
}

TEST_CASE("assign_users is deterministic per seed") {
  auto mk = [](std::uint64_t seed) {
    std::vector<std::vector<int>> recs;
    for (int i = 0; i < 40; ++i) recs.push_back({2 + i % 10, 3, 4});
    return assign_users(std::move(recs), 7, seed);
  };
  Corpus a = mk(5), b = mk(5), c = mk(6);
  CHECK(a.fingerprint() == b.fingerprint());
  CHECK(a.fingerprint() != c.fingerprint());
}

TEST_CASE("generate_canaries produces distinct in-vocab sequences with distinct owners") {
  Corpus corpus = small_random_corpus(200, 10, 3);
  Vocabulary vocab = toy_vocab(200);

  CHECK(generate_canaries(corpus, vocab, 0, 5, 1).empty());

  auto canaries = generate_canaries(corpus, vocab, 10, 5, 17);
  REQUIRE(canaries.size() == 10);
  std::set<int> owners;
  for (const auto& c : canaries) {
    owners.insert(c.owner_user_id);
    CHECK(c.tokens.size() == 5);
    for (int t : c.tokens) {
      CHECK(t >= 2);
      CHECK(t < vocab.size());
    }
  }
  CHECK(owners.size() == 10);
  // Pairwise distinct as sequences (exhaustive comparison).
  for (std::size_t i = 0; i < canaries.size(); ++i)
    for (std::size_t j = i + 1; j < canaries.size(); ++j)
      CHECK(canaries[i].tokens != canaries[j].tokens);

  // Determinism.
  auto again = generate_canaries(corpus, vocab, 10, 5, 17);
  for (std::size_t i = 0; i < canaries.size(); ++i) {
    CHECK(canaries[i].tokens == again[i].tokens);
    CHECK(canaries[i].owner_user_id == again[i].owner_user_id);
  }

  // No canary appears in the base corpus.
  for (const auto& c : canaries) {
    for (const auto& r : corpus.records) {
      bool found = false;
      for (std::size_t s = 0; s + c.tokens.size() <= r.tokens.size(); ++s)
        if (std::equal(c.tokens.begin(), c.tokens.end(), r.tokens.begin() + static_cast<std::ptrdiff_t>(s)))
          found = true;
      CHECK_FALSE(found);
    }
  }

  CHECK_THROWS(generate_canaries(corpus, toy_vocab(5), 1, 5, 1));
  CHECK_THROWS(generate_canaries(corpus, vocab, 10000, 5, 1));
}

TEST_CASE("one hundred users get one hundred distinct canaries") {
  Corpus corpus = small_random_corpus(1500, 10, 8);  // 150 users
  Vocabulary vocab = toy_vocab(200);
  auto canaries = generate_canaries(corpus, vocab, 100, 5, 19);
  REQUIRE(canaries.size() == 100);
  std::set<std::vector<int>> seqs;
  std::set<int> owners;
  for (const auto& c : canaries) {
    seqs.insert(c.tokens);
    owners.insert(c.owner_user_id);
  }
  CHECK(seqs.size() == 100);
  CHECK(owners.size() == 100);

  Corpus with = insert_canaries(corpus, canaries, 100, 23);
  CHECK(with.size() == corpus.size() + 100u * 100u);
}

TEST_CASE("insert_canaries appends R marked copies per canary") {
  Corpus corpus = small_random_corpus(2000, 40, 11);
  Vocabulary vocab = toy_vocab(60);
  auto canaries = generate_canaries(corpus, vocab, 10, 5, 23);

  Corpus with = insert_canaries(corpus, canaries, 20, 31);
  CHECK(with.size() == 2200);
  with.validate();

  // Recount oracle: per-user counts grew by R for owners only, and the
  // corpus-wide count of each canary sequence equals R.
  std::map<int, std::size_t> before, after;
  for (const auto& [u, idxs] : corpus.user_index) before[u] = idxs.size();
  for (const auto& [u, idxs] : with.user_index) after[u] = idxs.size();
  std::set<int> owners;
  for (const auto& c : canaries) owners.insert(c.owner_user_id);
  for (const auto& [u, n] : after)
    CHECK(n == before[u] + (owners.count(u) ? 20u : 0u));
  for (const auto& c : canaries) {
    std::size_t count = 0;
    for (const auto& r : with.records)
      if (r.tokens == c.tokens) {
        ++count;
        CHECK(r.user_id == c.owner_user_id);
        REQUIRE(r.forget_spans.size() == 1);
        CHECK(r.forget_spans[0] == Span{0, 5});
        CHECK(r.fully_forgotten());
      }
    CHECK(count == 20);
  }

  // R=0 leaves the corpus unchanged.
  Corpus same = insert_canaries(corpus, canaries, 0, 31);
  CHECK(same.fingerprint() == corpus.fingerprint());

  CanarySpec bad;
  bad.owner_user_id = 777777;
  bad.tokens = {2, 3, 4, 5, 6};
  CHECK_THROWS(insert_canaries(corpus, {bad}, 5, 1));
}

TEST_CASE("partition_shards is a user and record partition") {
  {
    Corpus c = small_random_corpus(20, 2, 5);  // 10 users
    auto shards = partition_shards(c, 5, 9);
    REQUIRE(shards.size() == 5);
    for (const auto& s : shards) CHECK(s.user_ids.size() == 2);
  }
  {
    Corpus c = small_random_corpus(11, 1, 5);  // 11 users
    auto shards = partition_shards(c, 5, 9);
    std::multiset<std::size_t> sizes;
    for (const auto& s : shards) sizes.insert(s.user_ids.size());
    CHECK(sizes == std::multiset<std::size_t>{3, 2, 2, 2, 2});
  }
  // Set-algebra oracle on a random corpus.
  Corpus c = small_random_corpus(157, 13, 21);
  auto shards = partition_shards(c, 4, 33);
  std::set<std::size_t> seen_records;
  std::set<int> seen_users;
  for (const auto& s : shards) {
    for (std::size_t i : s.record_indices) CHECK(seen_records.insert(i).second);
    for (int u : s.user_ids) CHECK(seen_users.insert(u).second);
  }
  CHECK(seen_records.size() == c.size());
  CHECK(static_cast<int>(seen_users.size()) == c.num_users());

  CHECK_THROWS(partition_shards(c, 1, 1));
  CHECK_THROWS(partition_shards(c, c.num_users() + 1, 1));
}

TEST_CASE("build_forget_set collects marked records of the requesting users") {
  Corpus corpus = small_random_corpus(300, 30, 13);
  Vocabulary vocab = toy_vocab(50);
  auto canaries = generate_canaries(corpus, vocab, 3, 5, 7);
  Corpus with = insert_canaries(corpus, canaries, 20, 3);

  const int owner = canaries[0].owner_user_id;
  ForgetSet fs = build_forget_set(with, {owner});
  CHECK(fs.entries.size() == 20);

  // A user with no marked records contributes nothing.
  int plain_user = -1;
  std::set<int> owners;
  for (const auto& c : canaries) owners.insert(c.owner_user_id);
  for (const auto& [u, _] : with.user_index)
    if (!owners.count(u)) { plain_user = u; break; }
  REQUIRE(plain_user >= 0);
  CHECK(build_forget_set(with, {plain_user}).entries.empty());

  // Mixed request: entry count equals the oracle sum of marked records.
  std::set<int> mixed{canaries[0].owner_user_id, canaries[1].owner_user_id, plain_user};
  ForgetSet fs3 = build_forget_set(with, mixed);
  std::size_t oracle = 0;
  for (const auto& r : with.records)
    if (mixed.count(r.user_id) && !r.forget_spans.empty()) ++oracle;
  CHECK(fs3.entries.size() == oracle);

  CHECK_THROWS(build_forget_set(with, {987654}));
}

TEST_CASE("corpus binary round-trip preserves everything") {
  Corpus corpus = small_random_corpus(50, 7, 77);
  corpus.records[3].forget_spans = {Span{1, 3}, Span{4, 5}};
  const std::string path = (std::filesystem::temp_directory_path() / "ulm_corpus_rt.bin").string();
  save_corpus(corpus, path);
  Corpus back = load_corpus(path);
  REQUIRE(back.size() == corpus.size());
  CHECK(back.fingerprint() == corpus.fingerprint());
  CHECK(back.records[3].forget_spans == corpus.records[3].forget_spans);
  CHECK(back.user_index == corpus.user_index);
  std::filesystem::remove(path);
}

TEST_CASE("canary manifest round-trips") {
  std::vector<CanarySpec> canaries;
  for (int i = 0; i < 3; ++i) {
    CanarySpec c;
    c.owner_user_id = i;
    c.tokens = {2 + i, 3, 4, 5, 6};
    c.repetitions = 40;
    canaries.push_back(c);
  }
  const std::string path = (std::filesystem::temp_directory_path() / "ulm_canaries_rt.json").string();
  save_canaries(canaries, path);
  auto back = load_canaries(path);
  REQUIRE(back.size() == canaries.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].owner_user_id == canaries[i].owner_user_id);
    CHECK(back[i].tokens == canaries[i].tokens);
    CHECK(back[i].repetitions == canaries[i].repetitions);
  }
  std::filesystem::remove(path);
}

TEST_CASE("corpus file ingestion with and without user prefixes") {
  namespace fs = std::filesystem;
  const std::string plain = (fs::temp_directory_path() / "ulm_plain.txt").string();
  const std::string prefixed = (fs::temp_directory_path() / "ulm_prefixed.txt").string();
  const std::string mixed = (fs::temp_directory_path() / "ulm_mixed.txt").string();
  write_lines({"a b c", "b c d"}, plain);
  write_lines({"4\ta b c", "9\tb c d"}, prefixed);
  write_lines({"4\ta b c", "b c d"}, mixed);

  auto in_plain = read_corpus_file(plain);
  CHECK(in_plain.lines.size() == 2);
  CHECK(in_plain.user_ids.empty());

  auto in_prefixed = read_corpus_file(prefixed);
  CHECK(in_prefixed.user_ids == std::vector<int>{4, 9});
  Vocabulary v = build_vocabulary(in_prefixed.lines, 10);
  Corpus c = corpus_from_lines(in_prefixed, v, 100, 1);
  CHECK(c.user_index.count(4) == 1);
  CHECK(c.user_index.count(9) == 1);

  CHECK_THROWS(read_corpus_file(mixed));
  fs::remove(plain);
  fs::remove(prefixed);
  fs::remove(mixed);
}

TEST_CASE("synthetic corpus generator is deterministic") {
  SynthSpec spec;
  spec.num_records = 50;
  auto a = generate_corpus_lines(spec, 42);
  auto b = generate_corpus_lines(spec, 42);
  auto c = generate_corpus_lines(spec, 43);
  CHECK(a == b);
  CHECK(a != c);
  CHECK(a.size() == 50);
}
