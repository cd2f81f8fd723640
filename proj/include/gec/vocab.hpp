#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "gec/token.hpp"

namespace gec {

// ids 0-3 are reserved
constexpr int kPadId = 0;
constexpr int kUnkId = 1;
constexpr int kBosId = 2;
constexpr int kEosId = 3;

class Vocab {
public:
  Vocab();

  // Symbols ranked by frequency (descending, lexicographic tiebreak) after
  // the four reserved entries.
  static Vocab build(const std::vector<TokenSeq>& corpus, size_t max_size = 0);

  static Vocab load(const std::string& path);
  void save(const std::string& path) const;

  int id(const std::string& sym) const {
    auto it = sym_to_id_.find(sym);
    return it == sym_to_id_.end() ? kUnkId : it->second;
  }
  const std::string& sym(int id) const { return id_to_sym_.at(static_cast<size_t>(id)); }
  int size() const { return static_cast<int>(id_to_sym_.size()); }

  std::vector<int> encode(const TokenSeq& tokens) const;
  TokenSeq decode(const std::vector<int>& ids) const;

  void add(const std::string& sym);

private:
  std::vector<std::string> id_to_sym_;
  std::unordered_map<std::string, int> sym_to_id_;
};

}  // namespace gec
