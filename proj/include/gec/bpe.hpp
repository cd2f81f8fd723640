#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gec/token.hpp"

namespace gec {

// Learned merge list in priority order. Subwords are continuation-marked
// with a suffix ("low@@ er"), which keeps reversal trivial.
struct BpeModel {
  std::vector<std::pair<std::string, std::string>> merges;
  std::string marker = "@@";
};

// Greedy most-frequent-pair learning over the token types of `corpus`,
// weighted by token frequency. Ties break by lexicographic order of the
// pair. Throws on an empty corpus; warns (stderr) and returns what was
// found when fewer than num_merges merges exist.
BpeModel bpe_learn(const std::vector<TokenSeq>& corpus, size_t num_merges);

// Replays merges in priority order over the characters of each token.
// Non-final subwords carry the marker suffix. Throws if an input token
// already contains the marker.
TokenSeq bpe_apply(const BpeModel& model, const TokenSeq& s);
std::vector<std::string> bpe_apply_token(const BpeModel& model, const std::string& token);

// Joins marker-suffixed subwords with their successors. Idempotent on
// marker-free input; a trailing marker on the final token joins with
// nothing and warns.
TokenSeq bpe_revert(const TokenSeq& s, const std::string& marker = "@@");

void save_bpe_model(const std::string& path, const BpeModel& model);
BpeModel load_bpe_model(const std::string& path);

}  // namespace gec
