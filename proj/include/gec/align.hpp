#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "gec/token.hpp"

namespace gec {

// Functional alignment: one source link per target position, or kNullLink
// for null-aligned (inserted) targets.
constexpr int kNullLink = -1;

struct Alignment {
  std::vector<int> src_for_trg;

  size_t size() const { return src_for_trg.size(); }
  bool identity() const {
    for (size_t t = 0; t < src_for_trg.size(); ++t)
      if (src_for_trg[t] != static_cast<int>(t)) return false;
    return true;
  }
};

// Alignment from an optimal unit-cost edit path. Tie-break at equal cost:
// match > substitution > deletion > insertion, applied while backtracking
// from the end of both sequences.
Alignment levenshtein_align(const TokenSeq& src, const TokenSeq& trg);

// Unit-cost edit distance (matches levenshtein_align's path cost).
int levenshtein_distance(const TokenSeq& src, const TokenSeq& trg);

using SentencePair = std::pair<TokenSeq, TokenSeq>;

// Reparameterized IBM-2: t(trg|src) learned by EM under a fixed diagonal
// positional prior proportional to exp(-tension * |(t+1)/T_y - (s+1)/T_x|),
// with a fixed null-alignment probability.
class AlignModel {
public:
  AlignModel() = default;

  double tension = 4.0;
  double p_null = 0.08;

  // vocab ids; row 0 of the ttable is the null word
  std::unordered_map<std::string, int> src_vocab;
  std::unordered_map<std::string, int> trg_vocab;
  std::vector<std::vector<double>> ttable;  // [src_id][trg_id]

  double translation_prob(int src_id, int trg_id) const;
  int src_id(const std::string& w) const;   // -1 when OOV
  int trg_id(const std::string& w) const;   // -1 when OOV

  // prior weight of source position s for target position t; s == kNullLink
  // selects the null share p_null, real positions share (1 - p_null)
  double position_prior(int s, int t, int src_len, int trg_len) const;
};

struct EmTrace {
  std::vector<double> log_likelihood;  // one entry per iteration
};

AlignModel train_aligner(const std::vector<SentencePair>& corpus, int em_iterations,
                         double tension = 4.0, double p_null = 0.08,
                         EmTrace* trace = nullptr);

// Per target position, argmax over null and all source positions of
// prior * t(trg|src). Ties resolve toward null, then smaller s. OOV words
// fall back to a uniform translation probability.
Alignment viterbi_align(const AlignModel& model, const TokenSeq& src, const TokenSeq& trg);

// Loss weights: Lambda where the aligned tokens differ (null-aligned counts
// as differing), 1 elsewhere.
struct EditWeights {
  std::vector<double> lambda;
  double Lambda = 1.0;
};

EditWeights edit_weights(const Alignment& a, const TokenSeq& src, const TokenSeq& trg,
                         double Lambda);

// "s-t" pairs, space separated, 0-based, source-target order; null links omitted.
std::string format_alignment(const Alignment& a);
Alignment parse_alignment(const std::string& line, size_t trg_len);

void save_align_model(const std::string& path, const AlignModel& model);
AlignModel load_align_model(const std::string& path);

}  // namespace gec
