#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "gec/corpus.hpp"
#include "gec/token.hpp"

namespace gec {

struct M2Result {
  int64_t tp = 0, fp = 0, fn = 0;
  double precision = 1.0, recall = 1.0, f_half = 0.0;
};

// P and R use the 0/0 -> 1 convention; F0.5 with a zero denominator is 0.
double f_half(double precision, double recall);
M2Result m2_from_counts(int64_t tp, int64_t fp, int64_t fn);

// System edits between src and hyp: Levenshtein edit lattice, transitive
// merged edits spanning up to max_unchanged_words unchanged tokens, and the
// edit sequence maximizing matches with gold (ties: fewer edits, then
// leftmost).
std::vector<Edit> extract_system_edits(const TokenSeq& src, const TokenSeq& hyp,
                                       const EditSet& gold, int max_unchanged_words = 2);

struct M2Item {
  TokenSeq src;
  TokenSeq hyp;
  std::vector<EditSet> gold;  // one set per annotator
};

// Corpus M2: per sentence, the annotator maximizing the running cumulative
// F0.5 is chosen (ties keep the earlier annotator).
M2Result m2_score(const std::vector<M2Item>& corpus, int max_unchanged_words = 2);

struct GleuResult {
  double score = 0.0;
  std::array<double, 4> precisions{};  // n = 1..4 (averaged over iterations)
  double brevity_penalty = 1.0;
};

struct GleuConfig {
  int n_max = 4;
  int iterations = 500;
  uint64_t seed = 2222;
  double epsilon = 1e-9;  // p_n floor inside the geometric mean
};

// n-gram metric rewarding reference matches and penalizing n-grams kept
// from the source. One reference per sentence is sampled per iteration;
// a single reference everywhere collapses to one iteration.
GleuResult gleu_score(const std::vector<TokenSeq>& srcs, const std::vector<TokenSeq>& hyps,
                      const std::vector<std::vector<TokenSeq>>& references,
                      const GleuConfig& cfg = {});

}  // namespace gec
