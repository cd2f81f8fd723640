#include <doctest.h>

#include <map>
#include <sstream>

#include "gec/corpus.hpp"
#include "gec/rng.hpp"
#include "gec/synth.hpp"

using namespace gec;

TEST_CASE("parse_m2 single edit") {
  std::istringstream in("S a cat\nA 0 1|||Det|||The|||REQUIRED|||-NONE-|||0\n\n");
  auto sents = parse_m2(in);
  REQUIRE(sents.size() == 1);
  CHECK(sents[0].src == TokenSeq{"a", "cat"});
  REQUIRE(sents[0].by_annotator.count(0));
  const auto& edits = sents[0].by_annotator.at(0);
  REQUIRE(edits.size() == 1);
  CHECK(edits[0].start == 0);
  CHECK(edits[0].end == 1);
  CHECK(edits[0].replacement == TokenSeq{"The"});
  CHECK(edits[0].etype == "Det");
}

TEST_CASE("parse_m2 groups annotators") {
  std::istringstream in(
      "S a cat sat\n"
      "A 0 1|||Det|||The|||REQUIRED|||-NONE-|||0\n"
      "A 2 3|||Verb|||slept|||REQUIRED|||-NONE-|||1\n\n");
  auto sents = parse_m2(in);
  REQUIRE(sents.size() == 1);
  CHECK(sents[0].by_annotator.size() == 2);
  CHECK(sents[0].by_annotator.at(0).size() == 1);
  CHECK(sents[0].by_annotator.at(1).size() == 1);
}

TEST_CASE("parse_m2 noop registers an empty edit set") {
  std::istringstream in("S all good\nA -1 -1|||noop|||-NONE-|||REQUIRED|||-NONE-|||0\n\n");
  auto sents = parse_m2(in);
  REQUIRE(sents.size() == 1);
  REQUIRE(sents[0].by_annotator.count(0));
  CHECK(sents[0].by_annotator.at(0).empty());
}

TEST_CASE("parse_m2 errors carry line numbers") {
  {
    std::istringstream in("A 0 1|||X|||y|||REQUIRED|||-NONE-|||0\n");
    CHECK_THROWS_WITH_AS(parse_m2(in), doctest::Contains("m2:1"), std::runtime_error);
  }
  {
    std::istringstream in("S a cat\nA 0 9|||X|||y|||REQUIRED|||-NONE-|||0\n");
    CHECK_THROWS_WITH_AS(parse_m2(in), doctest::Contains("m2:2"), std::runtime_error);
  }
  {
    std::istringstream in("S a cat\nA 0 1|||only|||three\n");
    CHECK_THROWS(parse_m2(in));
  }
}

TEST_CASE("parse_m2 / serialize_m2 round-trips byte-for-byte") {
  std::string text =
      "S a cat sat on mat\n"
      "A 0 1|||ArtOrDet|||The|||REQUIRED|||-NONE-|||0\n"
      "A 3 4|||Prep|||upon|||REQUIRED|||-NONE-|||0\n"
      "A -1 -1|||noop|||-NONE-|||REQUIRED|||-NONE-|||1\n"
      "\n"
      "S it rains\n"
      "A 1 2|||Verb|||rained|||REQUIRED|||-NONE-|||0\n";
  std::istringstream in(text);
  auto sents = parse_m2(in);
  std::ostringstream out;
  serialize_m2(out, sents);
  CHECK(out.str() == text);
}

TEST_CASE("apply_edits basics") {
  CHECK(apply_edits({"a", "b", "c"}, {}) == TokenSeq{"a", "b", "c"});
  CHECK(apply_edits({"a", "b", "c"}, {{1, 2, {}, "del", 0}}) == TokenSeq{"a", "c"});
  CHECK(apply_edits({"a", "c"}, {{1, 1, {"b"}, "ins", 0}}) == TokenSeq{"a", "b", "c"});
  CHECK_THROWS(apply_edits({"a", "b"}, {{0, 2, {"x"}, "s", 0}, {1, 2, {"y"}, "s", 0}}));
}

TEST_CASE("apply_edits equals a naive rebuild oracle on random edit sets") {
  SplitRng rng(404, "splice");
  for (int trial = 0; trial < 100; ++trial) {
    size_t len = 1 + rng.uniform_int(10);
    TokenSeq src;
    for (size_t i = 0; i < len; ++i) src.push_back("w" + std::to_string(rng.uniform_int(6)));

    // random sorted non-overlapping edits
    EditSet edits;
    size_t pos = 0;
    while (pos <= src.size()) {
      if (rng.uniform() < 0.4) {
        size_t start = pos;
        size_t end = std::min(src.size(), start + rng.uniform_int(3));
        TokenSeq rep;
        size_t rlen = rng.uniform_int(3);
        for (size_t r = 0; r < rlen; ++r) rep.push_back("r" + std::to_string(rng.uniform_int(4)));
        if (start == end && rep.empty()) {
          ++pos;
          continue;
        }
        edits.push_back({static_cast<int>(start), static_cast<int>(end), rep, "x", 0});
        pos = end + 1;
      } else {
        ++pos;
      }
    }

    // oracle: walk positions left to right, emitting replacements
    TokenSeq expect;
    size_t cursor = 0;
    for (const auto& e : edits) {
      while (cursor < static_cast<size_t>(e.start)) expect.push_back(src[cursor++]);
      for (const auto& t : e.replacement) expect.push_back(t);
      cursor = static_cast<size_t>(e.end);
    }
    while (cursor < src.size()) expect.push_back(src[cursor++]);

    CHECK(apply_edits(src, edits) == expect);
  }
}

TEST_CASE("error_rate basics") {
  Corpus same{{{"a", "b"}, {"a", "b"}, {}, "g"}, {{"x"}, {"x"}, {}, "g"}};
  CHECK(error_rate(same).error_rate == 0.0);

  Corpus one{{{"a", "cat", "sat"}, {"the", "cat", "sat"}, {}, "g"}};
  CHECK(error_rate(one).error_rate == doctest::Approx(1.0 / 3.0));

  CHECK_THROWS(error_rate({}));
}

TEST_CASE("error_rate is zero only for fully identical corpora") {
  Corpus c{{{"a", "b"}, {"a", "b"}, {}, "g"},
           {{"a", "b", "c"}, {"a", "b"}, {}, "g"}};  // pure deletion pair
  CHECK(error_rate(c).error_rate > 0.0);
}

TEST_CASE("removing an identical pair raises the error rate") {
  Corpus c{{{"a", "X"}, {"a", "b"}, {}, "g"}, {{"c", "d"}, {"c", "d"}, {}, "g"}};
  double before = error_rate(c).error_rate;
  Corpus removed{c[0]};
  CHECK(error_rate(removed).error_rate > before);
}

TEST_CASE("oversample duplicates tagged pairs") {
  Corpus c{{{"a"}, {"a"}, {}, "in-domain"},
           {{"b"}, {"b"}, {}, "general"},
           {{"c"}, {"c"}, {}, "in-domain"}};
  CHECK(oversample(c, "in-domain", 1).size() == 3);

  Corpus out = oversample(c, "in-domain", 10);
  CHECK(out.size() == 1 + 10 * 2);
  // original order preserved up front
  CHECK(out[0].src == TokenSeq{"a"});
  CHECK(out[1].src == TokenSeq{"b"});
  CHECK(out[2].src == TokenSeq{"c"});
  size_t tagged = 0;
  for (const auto& p : out)
    if (p.domain_tag == "in-domain") ++tagged;
  CHECK(tagged == 20);
}

TEST_CASE("oversample counting identity across factors") {
  SplitRng rng(7, "oversample");
  Corpus c;
  for (int i = 0; i < 30; ++i) {
    std::string tok = "t" + std::to_string(i);
    c.push_back({{tok}, {tok}, {}, rng.bernoulli(0.3) ? "in-domain" : "general"});
  }
  size_t tagged = 0;
  for (const auto& p : c)
    if (p.domain_tag == "in-domain") ++tagged;
  for (int factor : {1, 2, 5}) {
    Corpus out = oversample(c, "in-domain", factor);
    CHECK(out.size() == c.size() + (static_cast<size_t>(factor) - 1) * tagged);
  }
}

TEST_CASE("error_rate_adapt removes identical pairs until the target") {
  SplitRng rng(11, "adapt");
  CorruptionSpec spec = CorruptionSpec::for_rate(0.06, 60, "general");
  Corpus c = generate_synthetic(1, 60, 3000, spec, "general");
  double before = error_rate(c).error_rate;
  REQUIRE(before < 0.10);

  Corpus adapted = error_rate_adapt(c, 0.15);
  double after = error_rate(adapted).error_rate;
  CHECK(after >= 0.15);
  CHECK(after < 0.18);  // one-sentence granularity
  // never removes an errorful pair
  size_t errorful_before = 0, errorful_after = 0;
  for (const auto& p : c)
    if (p.src != p.trg) ++errorful_before;
  for (const auto& p : adapted)
    if (p.src != p.trg) ++errorful_after;
  CHECK(errorful_before == errorful_after);
}

TEST_CASE("error_rate_adapt identity when already at rate") {
  Corpus c{{{"a", "X"}, {"a", "b"}, {}, "g"}};
  Corpus out = error_rate_adapt(c, 0.15);
  CHECK(out.size() == 1);
}

TEST_CASE("error_rate_adapt on an all-identical corpus empties it with a warning") {
  Corpus c{{{"a"}, {"a"}, {}, "g"}, {{"b"}, {"b"}, {}, "g"}};
  Corpus out = error_rate_adapt(c, 0.15);
  CHECK(out.empty());
}

TEST_CASE("generate_synthetic zero probabilities yield clean pairs") {
  Corpus c = generate_synthetic(3, 60, 50, {});
  for (const auto& p : c) {
    CHECK(p.src == p.trg);
    REQUIRE(p.gold.size() == 1);
    CHECK(p.gold[0].empty());
  }
}

TEST_CASE("generate_synthetic is deterministic per seed") {
  CorruptionSpec spec{0.3, 0.3, 0.1, 0.3};
  Corpus a = generate_synthetic(5, 80, 100, spec);
  Corpus b = generate_synthetic(5, 80, 100, spec);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].src == b[i].src);
    CHECK(a[i].trg == b[i].trg);
  }
  Corpus c = generate_synthetic(6, 80, 100, spec);
  bool any_diff = false;
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i].src != c[i].src) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("generate_synthetic gold edits reproduce the clean side") {
  CorruptionSpec spec{0.4, 0.4, 0.2, 0.4};
  Corpus c = generate_synthetic(8, 100, 300, spec);
  size_t corrupted = 0;
  for (const auto& p : c) {
    REQUIRE(p.gold.size() == 1);
    CHECK(apply_edits(p.src, p.gold[0]) == p.trg);
    if (!p.gold[0].empty()) ++corrupted;
  }
  CHECK(corrupted > 100);
}

TEST_CASE("generate_synthetic hits the requested error rate") {
  CorruptionSpec spec = CorruptionSpec::for_rate(0.15, 200, "general");
  Corpus c = generate_synthetic(21, 200, 10000, spec, "general");
  double rate = error_rate(c).error_rate;
  CHECK(rate > 0.13);
  CHECK(rate < 0.17);
}

TEST_CASE("generate_synthetic rejects bad probabilities") {
  CorruptionSpec bad{1.5, 0, 0, 0};
  CHECK_THROWS(generate_synthetic(1, 60, 10, bad));
}

TEST_CASE("make_batches partitions the corpus") {
  SplitRng rng(99, "batches");
  Corpus c;
  for (int i = 0; i < 200; ++i) {
    TokenSeq t;
    size_t len = 1 + rng.uniform_int(12);
    for (size_t k = 0; k < len; ++k) t.push_back("w" + std::to_string(k));
    c.push_back({t, t, {}, "g"});
  }
  auto batches = make_batches(c, 64, 1);
  std::map<size_t, int> seen;
  for (const auto& b : batches) {
    CHECK(!b.empty());
    for (size_t idx : b) seen[idx] += 1;
  }
  CHECK(seen.size() == c.size());
  for (const auto& [idx, n] : seen) CHECK(n == 1);

  // deterministic per seed
  auto again = make_batches(c, 64, 1);
  CHECK(again == batches);
  auto other = make_batches(c, 64, 2);
  CHECK(other != batches);
}

TEST_CASE("make_batches single sentence") {
  Corpus c{{{"a"}, {"a"}, {}, "g"}};
  auto batches = make_batches(c, 1000, 0);
  REQUIRE(batches.size() == 1);
  CHECK(batches[0] == std::vector<size_t>{0});
}

TEST_CASE("batch_token_budget targets ~200 sentences") {
  Corpus c;
  for (int i = 0; i < 50; ++i) c.push_back({{"a", "b"}, {"a", "b", "c"}, {}, "g"});
  CHECK(batch_token_budget(c) == 600);  // mean trg len 3 * 200
  auto batches = make_batches(c, batch_token_budget(c), 0);
  CHECK(batches.size() == 1);  // 50 sentences fit in one ~200-sentence batch
}
