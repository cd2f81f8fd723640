#include "gec/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "gec/rng.hpp"

namespace gec {

namespace {

const char* kDetSg[] = {"the", "a"};
const char* kDetPl[] = {"two", "many"};

struct Templates {
  double p_adj;         // adjective inside a noun phrase
  double p_transitive;  // S -> NP V NP vs NP V
  double zipf;          // skew of content-word index draws; 0 = uniform
};

Templates domain_templates(const std::string& domain) {
  if (domain == "in-domain") return {0.55, 0.6, 1.2};
  return {0.25, 0.85, 0.0};  // general
}

size_t draw_index(SplitRng& rng, size_t n, double zipf) {
  if (zipf <= 0.0) return rng.uniform_int(n);
  // power-law-ish skew toward small indices
  double u = rng.uniform();
  return std::min<size_t>(static_cast<size_t>(std::pow(u, 1.0 + zipf) * n), n - 1);
}

struct NounPhrase {
  std::vector<std::string> tokens;
  std::vector<int> noun_pos;  // offsets of noun tokens
  std::vector<int> the_pos;   // offsets of droppable articles
};

NounPhrase make_np(const SynthVocab& vocab, const Templates& tpl, SplitRng& rng) {
  NounPhrase np;
  bool plural = rng.bernoulli(0.4);
  const char* det = plural ? kDetPl[rng.uniform_int(2)] : kDetSg[rng.uniform_int(2)];
  np.tokens.push_back(det);
  if (std::string(det) == "the") np.the_pos.push_back(0);
  if (rng.bernoulli(tpl.p_adj))
    np.tokens.push_back(vocab.adjs[draw_index(rng, vocab.adjs.size(), tpl.zipf)]);
  size_t noun = draw_index(rng, vocab.noun_sg.size(), tpl.zipf);
  np.noun_pos.push_back(static_cast<int>(np.tokens.size()));
  np.tokens.push_back(plural ? vocab.noun_pl[noun] : vocab.noun_sg[noun]);
  return np;
}

struct CleanSentence {
  TokenSeq tokens;
  std::vector<int> noun_pos;
  std::vector<int> the_pos;
  std::unordered_set<int> content_pos;  // nouns, verbs, adjectives
};

CleanSentence make_clean(const SynthVocab& vocab, const Templates& tpl, SplitRng& rng) {
  CleanSentence s;
  auto append_np = [&](const NounPhrase& np) {
    int base = static_cast<int>(s.tokens.size());
    for (int p : np.noun_pos) s.noun_pos.push_back(base + p);
    for (int p : np.the_pos) s.the_pos.push_back(base + p);
    for (size_t i = 0; i < np.tokens.size(); ++i) {
      if (i > 0) s.content_pos.insert(base + static_cast<int>(i));  // adj + noun
      s.tokens.push_back(np.tokens[i]);
    }
  };
  append_np(make_np(vocab, tpl, rng));
  s.content_pos.insert(static_cast<int>(s.tokens.size()));
  s.tokens.push_back(vocab.verbs[draw_index(rng, vocab.verbs.size(), tpl.zipf)]);
  if (rng.bernoulli(tpl.p_transitive)) append_np(make_np(vocab, tpl, rng));
  return s;
}

enum class Rule { kNone, kDrop, kPlural, kSwapFirst, kSwapSecond, kSub };

}  // namespace

void CorruptionSpec::validate() const {
  for (double p : {p_article_drop, p_plural, p_swap, p_substitute})
    if (!(p >= 0.0 && p <= 1.0))
      throw std::invalid_argument("CorruptionSpec: probabilities must lie in [0,1]");
}

SynthVocab SynthVocab::build(int vocab_size) {
  if (vocab_size < 20) throw std::invalid_argument("SynthVocab: vocab_size too small (< 20)");
  int content_budget = vocab_size - 4;  // the, a, two, many
  int n_nouns = content_budget / 4;     // two surface forms each
  int n_verbs = (content_budget - 2 * n_nouns) / 2;
  int n_adjs = content_budget - 2 * n_nouns - n_verbs;
  SynthVocab v;
  for (int i = 0; i < n_nouns; ++i) {
    v.noun_sg.push_back("n" + std::to_string(i));
    v.noun_pl.push_back("n" + std::to_string(i) + "s");
  }
  for (int i = 0; i < n_verbs; ++i) v.verbs.push_back("v" + std::to_string(i));
  for (int i = 0; i < n_adjs; ++i) v.adjs.push_back("j" + std::to_string(i));
  v.content.insert(v.content.end(), v.noun_sg.begin(), v.noun_sg.end());
  v.content.insert(v.content.end(), v.noun_pl.begin(), v.noun_pl.end());
  v.content.insert(v.content.end(), v.verbs.begin(), v.verbs.end());
  v.content.insert(v.content.end(), v.adjs.begin(), v.adjs.end());
  if (v.content.size() % 2 == 1) v.content.pop_back();  // partner map needs an even list
  return v;
}

std::string SynthVocab::partner(const std::string& w) const {
  auto it = std::find(content.begin(), content.end(), w);
  if (it == content.end()) return w;
  size_t idx = static_cast<size_t>(it - content.begin());
  size_t half = content.size() / 2;
  return content[(idx + half) % content.size()];
}

bool SynthVocab::is_noun_sg(const std::string& w) const {
  return std::find(noun_sg.begin(), noun_sg.end(), w) != noun_sg.end();
}
bool SynthVocab::is_noun_pl(const std::string& w) const {
  return std::find(noun_pl.begin(), noun_pl.end(), w) != noun_pl.end();
}

Corpus generate_synthetic(uint64_t seed, int vocab_size, size_t n_sentences,
                          const CorruptionSpec& corruption, const std::string& domain) {
  corruption.validate();
  const SynthVocab vocab = SynthVocab::build(vocab_size);
  const Templates tpl = domain_templates(domain);

  // partner lookup by token (content list is moderate; map once)
  std::unordered_map<std::string, std::string> partner;
  {
    size_t half = vocab.content.size() / 2;
    for (size_t i = 0; i < vocab.content.size(); ++i)
      partner[vocab.content[i]] = vocab.content[(i + half) % vocab.content.size()];
  }

  Corpus corpus;
  corpus.reserve(n_sentences);
  for (size_t n = 0; n < n_sentences; ++n) {
    SplitRng rng(seed, "synth/" + domain, n);
    CleanSentence clean = make_clean(vocab, tpl, rng);
    const TokenSeq& trg = clean.tokens;
    const int len = static_cast<int>(trg.size());

    std::vector<Rule> rule(trg.size(), Rule::kNone);
    for (int p : clean.the_pos)
      if (rng.bernoulli(corruption.p_article_drop)) rule[p] = Rule::kDrop;
    for (int p : clean.noun_pos)
      if (rule[p] == Rule::kNone && rng.bernoulli(corruption.p_plural)) rule[p] = Rule::kPlural;
    for (int p = 0; p + 1 < len; ++p) {
      if (rule[p] != Rule::kNone || rule[p + 1] != Rule::kNone) continue;
      if (trg[p] == trg[p + 1]) continue;
      if (rng.bernoulli(corruption.p_swap)) {
        rule[p] = Rule::kSwapFirst;
        rule[p + 1] = Rule::kSwapSecond;
      }
    }
    for (int p = 0; p < len; ++p) {
      if (rule[p] != Rule::kNone || !clean.content_pos.count(p)) continue;
      if (rng.bernoulli(corruption.p_substitute)) rule[p] = Rule::kSub;
    }

    ParallelExample ex;
    ex.trg = trg;
    ex.domain_tag = domain;
    EditSet gold;
    for (int p = 0; p < len; ++p) {
      int sp = static_cast<int>(ex.src.size());
      switch (rule[p]) {
        case Rule::kNone:
          ex.src.push_back(trg[p]);
          break;
        case Rule::kDrop:
          gold.push_back({sp, sp, {trg[p]}, "art", 0});
          break;
        case Rule::kPlural: {
          const std::string& w = trg[p];
          auto flip = [&]() -> std::string {
            for (size_t i = 0; i < vocab.noun_sg.size(); ++i) {
              if (vocab.noun_sg[i] == w) return vocab.noun_pl[i];
              if (vocab.noun_pl[i] == w) return vocab.noun_sg[i];
            }
            return w;
          };
          ex.src.push_back(flip());
          gold.push_back({sp, sp + 1, {w}, "nn", 0});
          break;
        }
        case Rule::kSwapFirst:
          ex.src.push_back(trg[p + 1]);
          ex.src.push_back(trg[p]);
          gold.push_back({sp, sp + 2, {trg[p], trg[p + 1]}, "wo", 0});
          ++p;  // consumes the pair
          break;
        case Rule::kSwapSecond:
          break;  // handled by kSwapFirst
        case Rule::kSub:
          ex.src.push_back(partner.at(trg[p]));
          gold.push_back({sp, sp + 1, {trg[p]}, "sub", 0});
          break;
      }
    }
    ex.gold.push_back(std::move(gold));
    corpus.push_back(std::move(ex));
  }
  return corpus;
}

namespace {

double measured_rate(const CorruptionSpec& spec, int vocab_size, const std::string& domain) {
  Corpus probe = generate_synthetic(0x5EEDu, vocab_size, 4000, spec, domain);
  return error_rate(probe).error_rate;
}

}  // namespace

double CorruptionSpec::expected_rate(int vocab_size, const std::string& domain) const {
  if (all_zero()) return 0.0;
  return measured_rate(*this, vocab_size, domain);
}

CorruptionSpec CorruptionSpec::for_rate(double rate, int vocab_size, const std::string& domain) {
  if (!(rate >= 0.0 && rate < 0.6))
    throw std::invalid_argument("CorruptionSpec::for_rate: rate out of range");
  if (rate == 0.0) return {};
  // default rule mix, scaled until the probe corpus measures `rate`
  CorruptionSpec base{0.5, 0.6, 0.25, 0.6};
  double scale = rate;  // initial guess: opportunities roughly cover the sentence
  CorruptionSpec cur;
  for (int it = 0; it < 6; ++it) {
    cur = CorruptionSpec{std::min(base.p_article_drop * scale, 1.0),
                         std::min(base.p_plural * scale, 1.0),
                         std::min(base.p_swap * scale, 1.0),
                         std::min(base.p_substitute * scale, 1.0)};
    double measured = measured_rate(cur, vocab_size, domain);
    if (std::fabs(measured - rate) < 0.002) break;
    if (measured <= 1e-9) {
      scale *= 2;
      continue;
    }
    scale *= rate / measured;
  }
  return cur;
}

}  // namespace gec
