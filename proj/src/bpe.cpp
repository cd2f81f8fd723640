#include "gec/bpe.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <queue>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace gec {

namespace {

using SymPair = std::pair<std::string, std::string>;

struct PairHash {
  size_t operator()(const SymPair& p) const {
    std::hash<std::string> h;
    return h(p.first) * 0x9e3779b97f4a7c15ull + h(p.second);
  }
};

struct Word {
  std::vector<std::string> syms;
  int64_t count = 0;
};

// Heap entries are lazy: an entry is valid only if its count still matches
// the live pair count. Comparator: larger count first, then lexicographically
// smaller pair.
struct HeapEntry {
  int64_t count;
  SymPair pair;
};
struct HeapLess {
  bool operator()(const HeapEntry& a, const HeapEntry& b) const {
    if (a.count != b.count) return a.count < b.count;
    return a.pair > b.pair;
  }
};

void count_pairs(const std::vector<std::string>& syms,
                 std::unordered_map<SymPair, int64_t, PairHash>& acc, int64_t mult) {
  for (size_t i = 0; i + 1 < syms.size(); ++i)
    acc[{syms[i], syms[i + 1]}] += mult;
}

std::vector<std::string> merge_in_word(const std::vector<std::string>& syms, const SymPair& p) {
  std::vector<std::string> out;
  out.reserve(syms.size());
  size_t i = 0;
  while (i < syms.size()) {
    if (i + 1 < syms.size() && syms[i] == p.first && syms[i + 1] == p.second) {
      out.push_back(p.first + p.second);
      i += 2;
    } else {
      out.push_back(syms[i]);
      ++i;
    }
  }
  return out;
}

}  // namespace

BpeModel bpe_learn(const std::vector<TokenSeq>& corpus, size_t num_merges) {
  if (num_merges < 1) throw std::invalid_argument("bpe_learn: num_merges must be >= 1");

  std::unordered_map<std::string, int64_t> type_counts;
  for (const auto& sent : corpus) {
    check_token_seq(sent);
    for (const auto& tok : sent) type_counts[tok] += 1;
  }
  if (type_counts.empty()) throw std::invalid_argument("bpe_learn: empty corpus");

  std::vector<Word> words;
  words.reserve(type_counts.size());
  for (const auto& [tok, cnt] : type_counts) words.push_back({utf8_chars(tok), cnt});

  std::unordered_map<SymPair, int64_t, PairHash> pair_counts;
  std::unordered_map<SymPair, std::unordered_set<size_t>, PairHash> pair_where;
  for (size_t w = 0; w < words.size(); ++w) {
    for (size_t i = 0; i + 1 < words[w].syms.size(); ++i) {
      SymPair p{words[w].syms[i], words[w].syms[i + 1]};
      pair_counts[p] += words[w].count;
      pair_where[p].insert(w);
    }
  }

  std::priority_queue<HeapEntry, std::vector<HeapEntry>, HeapLess> heap;
  for (const auto& [p, c] : pair_counts) heap.push({c, p});

  BpeModel model;
  while (model.merges.size() < num_merges && !heap.empty()) {
    HeapEntry top = heap.top();
    heap.pop();
    auto it = pair_counts.find(top.pair);
    if (it == pair_counts.end() || it->second != top.count) continue;  // stale
    if (top.count <= 0) break;

    model.merges.push_back(top.pair);
    const SymPair best = top.pair;

    auto where_it = pair_where.find(best);
    std::vector<size_t> affected(where_it->second.begin(), where_it->second.end());
    std::sort(affected.begin(), affected.end());
    for (size_t w : affected) {
      Word& word = words[w];
      std::unordered_map<SymPair, int64_t, PairHash> delta;
      count_pairs(word.syms, delta, -word.count);
      word.syms = merge_in_word(word.syms, best);
      count_pairs(word.syms, delta, word.count);
      for (const auto& [p, d] : delta) {
        if (d == 0) continue;
        int64_t& c = pair_counts[p];
        c += d;
        if (d > 0) pair_where[p].insert(w);
        if (c <= 0) {
          pair_counts.erase(p);
          pair_where.erase(p);
        } else {
          heap.push({c, p});
        }
      }
    }
    pair_counts.erase(best);
    pair_where.erase(best);
  }

  if (model.merges.size() < num_merges)
    std::cerr << "bpe_learn: only " << model.merges.size() << " of " << num_merges
              << " requested merges possible\n";
  return model;
}

std::vector<std::string> bpe_apply_token(const BpeModel& model, const std::string& token) {
  if (token.find(model.marker) != std::string::npos)
    throw std::invalid_argument("bpe_apply: token '" + token +
                                "' contains the continuation marker");

  std::unordered_map<SymPair, size_t, PairHash> rank;
  rank.reserve(model.merges.size());
  for (size_t i = 0; i < model.merges.size(); ++i) rank.emplace(model.merges[i], i);

  std::vector<std::string> syms = utf8_chars(token);
  while (syms.size() > 1) {
    size_t best_rank = SIZE_MAX;
    for (size_t i = 0; i + 1 < syms.size(); ++i) {
      auto it = rank.find({syms[i], syms[i + 1]});
      if (it != rank.end() && it->second < best_rank) best_rank = it->second;
    }
    if (best_rank == SIZE_MAX) break;
    syms = merge_in_word(syms, model.merges[best_rank]);
  }
  return syms;
}

TokenSeq bpe_apply(const BpeModel& model, const TokenSeq& s) {
  TokenSeq out;
  std::unordered_map<std::string, std::vector<std::string>> cache;
  for (const auto& tok : s) {
    auto it = cache.find(tok);
    if (it == cache.end()) it = cache.emplace(tok, bpe_apply_token(model, tok)).first;
    const auto& pieces = it->second;
    for (size_t i = 0; i < pieces.size(); ++i)
      out.push_back(i + 1 < pieces.size() ? pieces[i] + model.marker : pieces[i]);
  }
  return out;
}

TokenSeq bpe_revert(const TokenSeq& s, const std::string& marker) {
  TokenSeq out;
  std::string pending;
  for (size_t i = 0; i < s.size(); ++i) {
    const std::string& tok = s[i];
    bool continues = tok.size() >= marker.size() &&
                     tok.compare(tok.size() - marker.size(), marker.size(), marker) == 0;
    if (continues && i + 1 == s.size())
      std::cerr << "bpe_revert: trailing continuation marker on final token\n";
    if (continues) {
      pending += tok.substr(0, tok.size() - marker.size());
      if (i + 1 == s.size() && !pending.empty()) out.push_back(pending);
    } else {
      pending += tok;
      out.push_back(pending);
      pending.clear();
    }
  }
  return out;
}

void save_bpe_model(const std::string& path, const BpeModel& model) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "# gec bpe v1\n";
  for (const auto& [a, b] : model.merges) out << a << ' ' << b << '\n';
}

BpeModel load_bpe_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  BpeModel model;
  std::string line;
  bool first = true;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (first && !line.empty() && line[0] == '#') {
      first = false;
      continue;
    }
    first = false;
    if (line.empty()) continue;
    size_t sp = line.find(' ');
    if (sp == std::string::npos || sp == 0 || sp + 1 >= line.size())
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed merge line");
    model.merges.emplace_back(line.substr(0, sp), line.substr(sp + 1));
  }
  return model;
}

}  // namespace gec
