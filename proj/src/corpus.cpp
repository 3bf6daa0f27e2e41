#include "ulm/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "ulm/rng.hpp"

namespace ulm {

void Corpus::rebuild_user_index() {
  user_index.clear();
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].user_id < 0) throw std::runtime_error("record without user attribution");
    user_index[records[i].user_id].push_back(i);
  }
}

void Corpus::validate() const {
  std::size_t indexed = 0;
  for (const auto& [user, idxs] : user_index) {
    for (std::size_t i : idxs) {
      if (i >= records.size() || records[i].user_id != user)
        throw std::runtime_error("user_index does not match records");
      ++indexed;
    }
  }
  if (indexed != records.size()) throw std::runtime_error("user_index does not cover corpus");
  for (const auto& r : records) {
    int prev_end = 0;
    for (const auto& s : r.forget_spans) {
      if (s.begin < prev_end || s.end <= s.begin || s.end > static_cast<int>(r.tokens.size()))
        throw std::runtime_error("malformed forget spans");
      prev_end = s.end;
    }
  }
}

std::uint64_t Corpus::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  std::uint64_t n = records.size();
  h = fnv1a64(&n, sizeof n, h);
  for (const auto& r : records) {
    std::uint32_t u = static_cast<std::uint32_t>(r.user_id);
    std::uint32_t len = static_cast<std::uint32_t>(r.tokens.size());
    h = fnv1a64(&u, sizeof u, h);
    h = fnv1a64(&len, sizeof len, h);
    h = fnv1a64(r.tokens.data(), r.tokens.size() * sizeof(int), h);
  }
  return h;
}

Corpus assign_users(std::vector<std::vector<int>> token_records, int records_per_user,
                    std::uint64_t rng_seed) {
  if (records_per_user < 1) throw std::invalid_argument("records_per_user must be >= 1");
  Rng rng(rng_seed);
  rng.shuffle(token_records);
  Corpus c;
  c.records.reserve(token_records.size());
  for (std::size_t i = 0; i < token_records.size(); ++i) {
    Record r;
    r.user_id = static_cast<int>(i / static_cast<std::size_t>(records_per_user));
    r.tokens = std::move(token_records[i]);
    c.records.push_back(std::move(r));
  }
  c.rebuild_user_index();
  return c;
}

namespace {

bool contains_subsequence(const std::vector<int>& hay, const std::vector<int>& needle) {
  if (needle.empty() || hay.size() < needle.size()) return false;
  for (std::size_t i = 0; i + needle.size() <= hay.size(); ++i)
    if (std::equal(needle.begin(), needle.end(), hay.begin() + static_cast<std::ptrdiff_t>(i)))
      return true;
  return false;
}

}  // namespace

std::vector<CanarySpec> generate_canaries(const Corpus& corpus, const Vocabulary& vocab,
                                          int num_users, int length, std::uint64_t rng_seed) {
  if (num_users == 0) return {};
  if (vocab.num_non_reserved() < length)
    throw std::invalid_argument("vocabulary too small for canary length");
  if (num_users > corpus.num_users())
    throw std::invalid_argument("more canary users than corpus users");

  Rng rng(rng_seed);
  std::vector<int> users;
  users.reserve(corpus.user_index.size());
  for (const auto& [u, _] : corpus.user_index) users.push_back(u);
  rng.shuffle(users);
  users.resize(static_cast<std::size_t>(num_users));

  std::vector<CanarySpec> out;
  for (int owner : users) {
    CanarySpec spec;
    spec.owner_user_id = owner;
    for (int attempt = 0;; ++attempt) {
      if (attempt >= 1000) throw std::runtime_error("could not generate a unique canary");
      spec.tokens.clear();
      for (int i = 0; i < length; ++i)
        spec.tokens.push_back(
            vocab.non_reserved_id(static_cast<int>(rng.next_below(
                static_cast<std::uint64_t>(vocab.num_non_reserved())))));
      bool collides = false;
      for (const auto& other : out)
        if (other.tokens == spec.tokens) { collides = true; break; }
      if (!collides)
        for (const auto& r : corpus.records)
          if (contains_subsequence(r.tokens, spec.tokens)) { collides = true; break; }
      if (!collides) break;
    }
    out.push_back(std::move(spec));
  }
  return out;
}

Corpus insert_canaries(const Corpus& corpus, const std::vector<CanarySpec>& canaries,
                       int repetitions, std::uint64_t rng_seed) {
  for (const auto& c : canaries)
    if (!corpus.user_index.count(c.owner_user_id))
      throw std::invalid_argument("canary owner not present in corpus");
  Corpus out;
  out.records = corpus.records;
  if (repetitions == 0 || canaries.empty()) {
    out.user_index = corpus.user_index;
    return out;
  }
  for (const auto& c : canaries) {
    Record r;
    r.user_id = c.owner_user_id;
    r.tokens = c.tokens;
    r.forget_spans = {Span{0, static_cast<int>(c.tokens.size())}};
    for (int i = 0; i < repetitions; ++i) out.records.push_back(r);
  }
  Rng rng(rng_seed);
  rng.shuffle(out.records);
  out.rebuild_user_index();
  return out;
}

std::vector<Shard> partition_shards(const Corpus& corpus, int num_shards,
                                    std::uint64_t rng_seed) {
  if (num_shards < 2) throw std::invalid_argument("need at least 2 shards");
  if (num_shards > corpus.num_users())
    throw std::invalid_argument("more shards than users");
  std::vector<int> users;
  for (const auto& [u, _] : corpus.user_index) users.push_back(u);
  Rng rng(rng_seed);
  rng.shuffle(users);

  std::vector<Shard> shards(static_cast<std::size_t>(num_shards));
  for (int m = 0; m < num_shards; ++m) shards[static_cast<std::size_t>(m)].shard_id = m;
  for (std::size_t i = 0; i < users.size(); ++i)
    shards[i % static_cast<std::size_t>(num_shards)].user_ids.insert(users[i]);
  for (auto& s : shards) {
    for (int u : s.user_ids) {
      const auto& idxs = corpus.user_index.at(u);
      s.record_indices.insert(s.record_indices.end(), idxs.begin(), idxs.end());
    }
    std::sort(s.record_indices.begin(), s.record_indices.end());
  }
  return shards;
}

ForgetSet build_forget_set(const Corpus& corpus, const std::set<int>& requesting_user_ids) {
  ForgetSet fs;
  for (int u : requesting_user_ids) {
    auto it = corpus.user_index.find(u);
    if (it == corpus.user_index.end())
      throw std::invalid_argument("unknown user id in forget request: " + std::to_string(u));
    for (std::size_t i : it->second)
      if (!corpus.records[i].forget_spans.empty())
        fs.entries.push_back({i, corpus.records[i].forget_spans});
  }
  // Dedupe by (record, spans) identity; record indices are unique per user so
  // a plain sort is enough.
  std::sort(fs.entries.begin(), fs.entries.end(),
            [](const ForgetEntry& a, const ForgetEntry& b) { return a.record_index < b.record_index; });
  fs.entries.erase(std::unique(fs.entries.begin(), fs.entries.end(),
                               [](const ForgetEntry& a, const ForgetEntry& b) {
                                 return a.record_index == b.record_index && a.spans == b.spans;
                               }),
                   fs.entries.end());
  return fs;
}

IngestedLines read_corpus_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read corpus file " + path);
  IngestedLines out;
  std::string line;
  bool first = true;
  bool has_prefix = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto tab = line.find('\t');
    bool prefixed = false;
    int uid = -1;
    if (tab != std::string::npos && tab > 0) {
      const std::string head = line.substr(0, tab);
      if (!head.empty() && std::all_of(head.begin(), head.end(),
                                       [](char ch) { return ch >= '0' && ch <= '9'; })) {
        prefixed = true;
        uid = std::stoi(head);
      }
    }
    if (first) {
      has_prefix = prefixed;
      first = false;
    } else if (prefixed != has_prefix) {
      throw std::runtime_error("corpus file mixes user-prefixed and plain lines");
    }
    if (has_prefix) {
      out.user_ids.push_back(uid);
      out.lines.push_back(line.substr(tab + 1));
    } else {
      out.lines.push_back(line);
    }
  }
  return out;
}

Corpus corpus_from_lines(const IngestedLines& in, const Vocabulary& vocab,
                         int records_per_user, std::uint64_t rng_seed) {
  std::vector<std::vector<int>> token_records;
  token_records.reserve(in.lines.size());
  for (const auto& l : in.lines) token_records.push_back(tokenize(l, vocab));
  std::erase_if(token_records, [](const std::vector<int>& r) { return r.empty(); });
  if (!in.user_ids.empty()) {
    if (in.user_ids.size() != in.lines.size())
      throw std::runtime_error("user id count does not match line count");
    Corpus c;
    for (std::size_t i = 0; i < in.lines.size(); ++i) {
      auto toks = tokenize(in.lines[i], vocab);
      if (toks.empty()) continue;
      Record r;
      r.user_id = in.user_ids[i];
      r.tokens = std::move(toks);
      c.records.push_back(std::move(r));
    }
    c.rebuild_user_index();
    return c;
  }
  return assign_users(std::move(token_records), records_per_user, rng_seed);
}

namespace {

constexpr char kCorpusMagic[8] = {'U', 'L', 'M', 'C', '0', '0', '0', '1'};

template <class T>
void write_raw(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
void read_raw(std::ifstream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw std::runtime_error("truncated corpus file");
}

}  // namespace

void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(kCorpusMagic, sizeof kCorpusMagic);
  write_raw(out, static_cast<std::uint64_t>(corpus.records.size()));
  for (const auto& r : corpus.records) {
    write_raw(out, static_cast<std::int32_t>(r.user_id));
    write_raw(out, static_cast<std::uint32_t>(r.tokens.size()));
    for (int t : r.tokens) write_raw(out, static_cast<std::int32_t>(t));
    write_raw(out, static_cast<std::uint32_t>(r.forget_spans.size()));
    for (const auto& s : r.forget_spans) {
      write_raw(out, static_cast<std::int32_t>(s.begin));
      write_raw(out, static_cast<std::int32_t>(s.end));
    }
  }
}

Corpus load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || !std::equal(magic, magic + 8, kCorpusMagic))
    throw std::runtime_error("not a corpus file: " + path);
  std::uint64_t n;
  read_raw(in, n);
  Corpus c;
  c.records.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    Record r;
    std::int32_t uid;
    std::uint32_t len, spans;
    read_raw(in, uid);
    read_raw(in, len);
    r.user_id = uid;
    r.tokens.resize(len);
    for (auto& t : r.tokens) {
      std::int32_t v;
      read_raw(in, v);
      t = v;
    }
    read_raw(in, spans);
    r.forget_spans.resize(spans);
    for (auto& s : r.forget_spans) {
      std::int32_t b, e;
      read_raw(in, b);
      read_raw(in, e);
      s = Span{b, e};
    }
    c.records.push_back(std::move(r));
  }
  c.rebuild_user_index();
  return c;
}

void save_canaries(const std::vector<CanarySpec>& canaries, const std::string& path) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& c : canaries)
    j.push_back({{"owner", c.owner_user_id}, {"tokens", c.tokens}, {"repetitions", c.repetitions}});
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

std::vector<CanarySpec> load_canaries(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  nlohmann::json j;
  in >> j;
  std::vector<CanarySpec> out;
  for (const auto& e : j) {
    CanarySpec c;
    c.owner_user_id = e.at("owner").get<int>();
    c.tokens = e.at("tokens").get<std::vector<int>>();
    c.repetitions = e.at("repetitions").get<int>();
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace ulm
