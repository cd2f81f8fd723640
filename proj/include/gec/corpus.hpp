#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "gec/token.hpp"

namespace gec {

// Span-based correction in M2 annotation form. Spans index source tokens;
// start == end denotes an insertion.
struct Edit {
  int start = 0;
  int end = 0;
  TokenSeq replacement;
  std::string etype = "UNK";
  int annotator = 0;

  friend bool operator==(const Edit& a, const Edit& b) {
    return a.start == b.start && a.end == b.end && a.replacement == b.replacement;
  }
};

using EditSet = std::vector<Edit>;

struct ParallelExample {
  TokenSeq src;
  TokenSeq trg;
  std::vector<EditSet> gold;  // one set per annotator; may be empty
  std::string domain_tag = "general";
};

using Corpus = std::vector<ParallelExample>;

struct CorpusStats {
  size_t sentence_count = 0;
  size_t token_count = 0;  // target tokens
  double error_rate = 0.0;
};

struct M2Sentence {
  TokenSeq src;
  std::map<int, EditSet> by_annotator;
};

// Parses the M2 annotation format. Errors carry 1-based line numbers.
std::vector<M2Sentence> parse_m2(std::istream& in);
std::vector<M2Sentence> parse_m2_file(const std::string& path);
void serialize_m2(std::ostream& out, const std::vector<M2Sentence>& sentences);

// Right-to-left splice of non-overlapping, start-sorted edits.
TokenSeq apply_edits(const TokenSeq& src, const EditSet& edits);

// Fraction of target tokens outside identity links of the token-level
// Levenshtein alignment. Throws on an empty corpus.
CorpusStats error_rate(const Corpus& corpus);

// Pairs tagged `tag` appear exactly `factor` times: the original corpus
// order first, then factor-1 passes over the tagged subset.
Corpus oversample(const Corpus& corpus, const std::string& tag, int factor);

// Removes identical pairs (src == trg) in corpus order until the measured
// error rate reaches target_rate. Warns when the target is unreachable.
Corpus error_rate_adapt(const Corpus& corpus, double target_rate);

// Length-bucketed batches of corpus indices under a target-token budget,
// shuffled deterministically per epoch seed.
std::vector<std::vector<size_t>> make_batches(const Corpus& corpus,
                                              size_t target_tokens_per_batch,
                                              uint64_t epoch_seed);

// Budget that makes batches average ~n_sentences examples.
size_t batch_token_budget(const Corpus& corpus, size_t n_sentences = 200);

Corpus corpus_from_m2(const std::vector<M2Sentence>& sentences,
                      const std::string& domain_tag = "general");
Corpus corpus_from_files(const std::string& src_path, const std::string& trg_path,
                         const std::string& domain_tag = "general");

}  // namespace gec
