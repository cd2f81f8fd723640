#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gec/corpus.hpp"

namespace gec {

// Per-rule corruption probabilities, each applied per opportunity:
// p_article_drop per droppable article, p_plural per noun, p_swap per
// adjacent token pair, p_substitute per remaining content token.
struct CorruptionSpec {
  double p_article_drop = 0.0;
  double p_plural = 0.0;
  double p_swap = 0.0;
  double p_substitute = 0.0;

  void validate() const;
  bool all_zero() const {
    return p_article_drop == 0 && p_plural == 0 && p_swap == 0 && p_substitute == 0;
  }

  // Scales the default rule mix so the generated corpus' measured error
  // rate lands on `rate` in expectation (calibrated against a fixed probe).
  static CorruptionSpec for_rate(double rate, int vocab_size, const std::string& domain);

  // Expected measured error rate of this spec, estimated on the same probe.
  double expected_rate(int vocab_size, const std::string& domain) const;
};

// Deterministic synthetic parallel corpus with gold edits. Clean sentences
// come from a small agreement grammar; src is the corrupted side. The
// `domain` string selects a template/vocabulary mixture ("general" or
// "in-domain"); it is also stored as the domain_tag of every pair.
Corpus generate_synthetic(uint64_t seed, int vocab_size, size_t n_sentences,
                          const CorruptionSpec& corruption,
                          const std::string& domain = "general");

// The grammar's correction rules are deterministic; this applies them
// directly (used as a reference for what a perfect model can achieve).
struct SynthVocab {
  std::vector<std::string> noun_sg, noun_pl, verbs, adjs;
  std::vector<std::string> content;  // all of the above, partner-pairable
  std::string partner(const std::string& w) const;
  bool is_noun_sg(const std::string& w) const;
  bool is_noun_pl(const std::string& w) const;
  static SynthVocab build(int vocab_size);
};

}  // namespace gec
