#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "gec/align.hpp"
#include "gec/rng.hpp"

using namespace gec;

namespace {

// Exhaustive-path oracle. Enumerates every edit script, keeps the minimum
// cost ones, and among them picks the script maximal under the reversed
// move ranking match > substitution > deletion > insertion, which is what
// backtracking from the end with that preference produces.
enum Move { kMatch = 4, kSub = 3, kDel = 2, kIns = 1 };

struct Script {
  std::vector<Move> moves;
  int cost = 0;
};

void enumerate(const TokenSeq& src, const TokenSeq& trg, size_t i, size_t j, Script cur,
               std::vector<Script>& out) {
  if (i == src.size() && j == trg.size()) {
    out.push_back(cur);
    return;
  }
  if (i < src.size() && j < trg.size()) {
    Script next = cur;
    next.moves.push_back(src[i] == trg[j] ? kMatch : kSub);
    next.cost += src[i] == trg[j] ? 0 : 1;
    enumerate(src, trg, i + 1, j + 1, next, out);
  }
  if (i < src.size()) {
    Script next = cur;
    next.moves.push_back(kDel);
    next.cost += 1;
    enumerate(src, trg, i + 1, j, next, out);
  }
  if (j < trg.size()) {
    Script next = cur;
    next.moves.push_back(kIns);
    next.cost += 1;
    enumerate(src, trg, i, j + 1, next, out);
  }
}

struct OracleResult {
  Alignment alignment;
  int cost = 0;
};

OracleResult oracle_align(const TokenSeq& src, const TokenSeq& trg) {
  std::vector<Script> scripts;
  enumerate(src, trg, 0, 0, {}, scripts);
  int best_cost = scripts[0].cost;
  for (const auto& s : scripts) best_cost = std::min(best_cost, s.cost);

  const Script* best = nullptr;
  for (const auto& s : scripts) {
    if (s.cost != best_cost) continue;
    if (!best) {
      best = &s;
      continue;
    }
    // compare reversed move sequences, higher rank preferred
    const auto& a = s.moves;
    const auto& b = best->moves;
    size_t n = std::max(a.size(), b.size());
    for (size_t k = 1; k <= n; ++k) {
      int ma = k <= a.size() ? a[a.size() - k] : 0;
      int mb = k <= b.size() ? b[b.size() - k] : 0;
      if (ma != mb) {
        if (ma > mb) best = &s;
        break;
      }
    }
  }

  OracleResult res;
  res.cost = best_cost;
  res.alignment.src_for_trg.assign(trg.size(), kNullLink);
  size_t i = 0, j = 0;
  for (Move m : best->moves) {
    switch (m) {
      case kMatch:
      case kSub:
        res.alignment.src_for_trg[j] = static_cast<int>(i);
        ++i, ++j;
        break;
      case kDel:
        ++i;
        break;
      case kIns:
        res.alignment.src_for_trg[j] = kNullLink;
        ++j;
        break;
    }
  }
  return res;
}

int alignment_cost(const Alignment& a, const TokenSeq& src, const TokenSeq& trg) {
  // cost implied by a functional alignment: subs + insertions + deletions
  int cost = 0;
  std::vector<bool> used(src.size(), false);
  for (size_t t = 0; t < trg.size(); ++t) {
    int s = a.src_for_trg[t];
    if (s == kNullLink) {
      ++cost;  // insertion
    } else {
      used[static_cast<size_t>(s)] = true;
      if (src[static_cast<size_t>(s)] != trg[t]) ++cost;  // substitution
    }
  }
  for (bool u : used)
    if (!u) ++cost;  // deletion
  return cost;
}

TokenSeq random_seq(SplitRng& rng, size_t max_len, int alphabet) {
  TokenSeq s;
  size_t len = rng.uniform_int(max_len + 1);
  for (size_t i = 0; i < len; ++i)
    s.push_back(std::string(1, static_cast<char>('a' + rng.uniform_int(alphabet))));
  return s;
}

}  // namespace

TEST_CASE("levenshtein_align identity") {
  TokenSeq s{"a", "b", "c", "d"};
  Alignment a = levenshtein_align(s, s);
  CHECK(a.identity());
}

TEST_CASE("levenshtein_align substitution keeps positions") {
  Alignment a = levenshtein_align({"a", "b", "c"}, {"a", "X", "c"});
  REQUIRE(a.size() == 3);
  CHECK(a.src_for_trg[0] == 0);
  CHECK(a.src_for_trg[1] == 1);
  CHECK(a.src_for_trg[2] == 2);
}

TEST_CASE("levenshtein_align matches exhaustive oracle on random pairs") {
  SplitRng rng(2024, "align-oracle");
  for (int trial = 0; trial < 200; ++trial) {
    TokenSeq src = random_seq(rng, 8, 3);
    TokenSeq trg = random_seq(rng, 8, 3);
    Alignment got = levenshtein_align(src, trg);
    OracleResult expect = oracle_align(src, trg);
    CAPTURE(trial);
    CHECK(alignment_cost(got, src, trg) == expect.cost);
    CHECK(got.src_for_trg == expect.alignment.src_for_trg);
  }
}

TEST_CASE("levenshtein_distance equals alignment cost") {
  SplitRng rng(5, "align-cost");
  for (int trial = 0; trial < 50; ++trial) {
    TokenSeq src = random_seq(rng, 8, 3);
    TokenSeq trg = random_seq(rng, 8, 3);
    Alignment a = levenshtein_align(src, trg);
    CHECK(alignment_cost(a, src, trg) == levenshtein_distance(src, trg));
  }
}

TEST_CASE("train_aligner single pair converges immediately") {
  AlignModel m = train_aligner({{{"a"}, {"b"}}}, 1);
  CHECK(m.translation_prob(m.src_id("a"), m.trg_id("b")) == doctest::Approx(1.0));
}

TEST_CASE("train_aligner empty corpus throws") {
  CHECK_THROWS(train_aligner({}, 3));
}

TEST_CASE("EM log-likelihood is non-decreasing") {
  SplitRng rng(9, "em-mono");
  std::vector<SentencePair> corpus;
  for (int s = 0; s < 60; ++s) {
    TokenSeq src, trg;
    size_t len = 2 + rng.uniform_int(5);
    for (size_t i = 0; i < len; ++i) {
      int w = static_cast<int>(rng.uniform_int(12));
      src.push_back("s" + std::to_string(w));
      trg.push_back("t" + std::to_string(w));
    }
    corpus.push_back({src, trg});
  }
  EmTrace trace;
  train_aligner(corpus, 10, 4.0, 0.08, &trace);
  REQUIRE(trace.log_likelihood.size() == 10);
  for (size_t i = 1; i < trace.log_likelihood.size(); ++i)
    CHECK(trace.log_likelihood[i] >= trace.log_likelihood[i - 1] - 1e-9);
}

TEST_CASE("ttable rows are normalized") {
  std::vector<SentencePair> corpus{{{"a", "b"}, {"x", "y"}}, {{"b", "c"}, {"y", "z"}}};
  AlignModel m = train_aligner(corpus, 3);
  for (const auto& row : m.ttable) {
    double z = 0.0;
    for (double v : row) z += v;
    CHECK(std::fabs(z - 1.0) < 1e-6);
  }
}

TEST_CASE("aligner recovers a bijective dictionary") {
  // generator knows true links: target = mapped source, same order
  SplitRng rng(42, "bijective");
  std::vector<SentencePair> corpus;
  for (int s = 0; s < 2000; ++s) {
    TokenSeq src, trg;
    size_t len = 3 + rng.uniform_int(6);
    for (size_t i = 0; i < len; ++i) {
      int w = static_cast<int>(rng.uniform_int(50));
      src.push_back("s" + std::to_string(w));
      trg.push_back("t" + std::to_string(w));
    }
    corpus.push_back({src, trg});
  }
  AlignModel m = train_aligner(corpus, 5);
  size_t correct = 0, total = 0;
  for (const auto& [src, trg] : corpus) {
    Alignment a = viterbi_align(m, src, trg);
    for (size_t t = 0; t < trg.size(); ++t) {
      ++total;
      if (a.src_for_trg[t] == static_cast<int>(t)) ++correct;
    }
  }
  CHECK(static_cast<double>(correct) / static_cast<double>(total) >= 0.99);
}

TEST_CASE("viterbi argmax equals per-position brute force") {
  SplitRng rng(17, "viterbi-oracle");
  std::vector<SentencePair> corpus;
  for (int s = 0; s < 40; ++s) {
    TokenSeq src, trg;
    size_t len = 1 + rng.uniform_int(6);
    for (size_t i = 0; i < len; ++i) {
      src.push_back(std::string(1, static_cast<char>('a' + rng.uniform_int(6))));
      trg.push_back(std::string(1, static_cast<char>('p' + rng.uniform_int(6))));
    }
    corpus.push_back({src, trg});
  }
  AlignModel m = train_aligner(corpus, 3);
  for (const auto& [src, trg] : corpus) {
    Alignment got = viterbi_align(m, src, trg);
    int Tx = static_cast<int>(src.size());
    int Ty = static_cast<int>(trg.size());
    for (int t = 0; t < Ty; ++t) {
      int y = m.trg_id(trg[static_cast<size_t>(t)]);
      double best = m.position_prior(kNullLink, t, Tx, Ty) * m.translation_prob(0, y);
      int best_s = kNullLink;
      for (int s = 0; s < Tx; ++s) {
        double p = m.position_prior(s, t, Tx, Ty) *
                   m.translation_prob(m.src_id(src[static_cast<size_t>(s)]), y);
        if (p > best) {
          best = p;
          best_s = s;
        }
      }
      CHECK(got.src_for_trg[static_cast<size_t>(t)] == best_s);
    }
  }
}

TEST_CASE("OOV target tokens fall back to uniform probability") {
  AlignModel m = train_aligner({{{"a", "b", "c"}, {"x", "y", "z"}}}, 2);
  // unseen target word: every source shares the uniform fallback, so the
  // positional prior decides; null keeps its fixed share
  Alignment a = viterbi_align(m, {"a", "b", "c"}, {"x", "UNSEEN", "z"});
  CHECK(a.size() == 3);
  double null_p = m.position_prior(kNullLink, 1, 3, 3) * m.translation_prob(0, -1);
  double best_real = 0.0;
  for (int s = 0; s < 3; ++s)
    best_real = std::max(best_real, m.position_prior(s, 1, 3, 3) * m.translation_prob(-1, -1));
  if (null_p >= best_real)
    CHECK(a.src_for_trg[1] == kNullLink);
  else
    CHECK(a.src_for_trg[1] != kNullLink);
}

TEST_CASE("edit_weights realizes the loss-scaling definition") {
  Alignment ident;
  ident.src_for_trg = {0, 1, 2};
  EditWeights w = edit_weights(ident, {"a", "b", "c"}, {"a", "X", "c"}, 3.0);
  CHECK(w.lambda == std::vector<double>{1.0, 3.0, 1.0});

  EditWeights ones = edit_weights(ident, {"a", "b", "c"}, {"a", "X", "c"}, 1.0);
  CHECK(ones.lambda == std::vector<double>{1.0, 1.0, 1.0});
}

TEST_CASE("edit_weights marks null-aligned targets") {
  Alignment a;
  a.src_for_trg = {0, kNullLink};
  EditWeights w = edit_weights(a, {"x"}, {"x", "new"}, 3.0);
  CHECK(w.lambda == std::vector<double>{1.0, 3.0});
}

TEST_CASE("edit_weights validates lengths and Lambda") {
  Alignment a;
  a.src_for_trg = {0};
  CHECK_THROWS(edit_weights(a, {"x"}, {"x", "y"}, 3.0));
  CHECK_THROWS(edit_weights(a, {"x"}, {"x"}, 0.5));
}

TEST_CASE("weight count matches pair error rate") {
  SplitRng rng(31, "weights");
  for (int trial = 0; trial < 30; ++trial) {
    TokenSeq src = random_seq(rng, 7, 3);
    TokenSeq trg = random_seq(rng, 7, 3);
    if (trg.empty()) continue;
    Alignment a = levenshtein_align(src, trg);
    EditWeights w = edit_weights(a, src, trg, 3.0);
    size_t lam_count = 0;
    for (double v : w.lambda)
      if (v == 3.0) ++lam_count;
    size_t differing = 0;
    for (size_t t = 0; t < trg.size(); ++t) {
      int s = a.src_for_trg[t];
      if (s == kNullLink || src[static_cast<size_t>(s)] != trg[t]) ++differing;
    }
    CHECK(lam_count == differing);
  }
}

TEST_CASE("alignment text format round-trips") {
  Alignment a;
  a.src_for_trg = {2, kNullLink, 0};
  std::string line = format_alignment(a);
  CHECK(line == "2-0 0-2");
  Alignment b = parse_alignment(line, 3);
  CHECK(b.src_for_trg == a.src_for_trg);
}
