#include "gec/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

namespace gec {

Vocab::Vocab() {
  for (const char* s : {"<pad>", "<unk>", "<bos>", "<eos>"}) add(s);
}

void Vocab::add(const std::string& sym) {
  if (sym_to_id_.count(sym)) return;
  sym_to_id_.emplace(sym, static_cast<int>(id_to_sym_.size()));
  id_to_sym_.push_back(sym);
}

Vocab Vocab::build(const std::vector<TokenSeq>& corpus, size_t max_size) {
  std::unordered_map<std::string, int64_t> freq;
  for (const auto& sent : corpus)
    for (const auto& tok : sent) freq[tok] += 1;

  std::vector<std::pair<std::string, int64_t>> ranked(freq.begin(), freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocab v;
  for (const auto& [sym, _] : ranked) {
    if (max_size && v.id_to_sym_.size() >= max_size) break;
    v.add(sym);
  }
  return v;
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  Vocab v;
  v.id_to_sym_.clear();
  v.sym_to_id_.clear();
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    v.add(line);
  }
  if (v.size() < 4) throw std::runtime_error(path + ": vocabulary misses reserved entries");
  return v;
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (const auto& sym : id_to_sym_) out << sym << '\n';
}

std::vector<int> Vocab::encode(const TokenSeq& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

TokenSeq Vocab::decode(const std::vector<int>& ids) const {
  TokenSeq out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(sym(i));
  return out;
}

}  // namespace gec
