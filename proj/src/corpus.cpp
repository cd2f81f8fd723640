#include "gec/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "gec/align.hpp"
#include "gec/rng.hpp"

namespace gec {

namespace {

std::vector<std::string> split_fields(const std::string& s, const std::string& sep) {
  std::vector<std::string> out;
  size_t pos = 0;
  while (true) {
    size_t next = s.find(sep, pos);
    if (next == std::string::npos) {
      out.push_back(s.substr(pos));
      break;
    }
    out.push_back(s.substr(pos, next - pos));
    pos = next + sep.size();
  }
  return out;
}

[[noreturn]] void m2_error(size_t lineno, const std::string& msg) {
  throw std::runtime_error("m2:" + std::to_string(lineno) + ": " + msg);
}

}  // namespace

std::vector<M2Sentence> parse_m2(std::istream& in) {
  std::vector<M2Sentence> sentences;
  bool have_sentence = false;
  M2Sentence cur;
  std::string line;
  size_t lineno = 0;

  auto flush = [&] {
    if (have_sentence) {
      sentences.push_back(std::move(cur));
      cur = M2Sentence{};
      have_sentence = false;
    }
  };

  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    if (line.rfind("S ", 0) == 0) {
      flush();
      cur.src = split_tokens(line.substr(2));
      have_sentence = true;
    } else if (line.rfind("A ", 0) == 0) {
      if (!have_sentence) m2_error(lineno, "annotation without a preceding S line");
      auto fields = split_fields(line.substr(2), "|||");
      if (fields.size() != 6) m2_error(lineno, "expected 6 fields, got " + std::to_string(fields.size()));
      std::istringstream span(fields[0]);
      int start = 0, end = 0;
      if (!(span >> start >> end)) m2_error(lineno, "malformed span '" + fields[0] + "'");
      int annotator = 0;
      try {
        annotator = std::stoi(fields[5]);
      } catch (const std::exception&) {
        m2_error(lineno, "malformed annotator id '" + fields[5] + "'");
      }
      if (fields[1] == "noop") {
        cur.by_annotator[annotator];  // registers the annotator with no edits
        continue;
      }
      if (start < 0 || end < start || end > static_cast<int>(cur.src.size()))
        m2_error(lineno, "edit span out of bounds");
      Edit e;
      e.start = start;
      e.end = end;
      e.etype = fields[1];
      e.replacement = split_tokens(fields[2]);
      e.annotator = annotator;
      cur.by_annotator[annotator].push_back(std::move(e));
    } else {
      m2_error(lineno, "unrecognized line");
    }
  }
  flush();
  return sentences;
}

std::vector<M2Sentence> parse_m2_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return parse_m2(in);
}

void serialize_m2(std::ostream& out, const std::vector<M2Sentence>& sentences) {
  for (size_t i = 0; i < sentences.size(); ++i) {
    const auto& s = sentences[i];
    out << "S " << join_tokens(s.src) << '\n';
    for (const auto& [annotator, edits] : s.by_annotator) {
      if (edits.empty()) {
        out << "A -1 -1|||noop|||-NONE-|||REQUIRED|||-NONE-|||" << annotator << '\n';
        continue;
      }
      for (const auto& e : edits)
        out << "A " << e.start << ' ' << e.end << "|||" << e.etype << "|||"
            << join_tokens(e.replacement) << "|||REQUIRED|||-NONE-|||" << annotator << '\n';
    }
    if (i + 1 < sentences.size()) out << '\n';
  }
}

TokenSeq apply_edits(const TokenSeq& src, const EditSet& edits) {
  for (size_t k = 0; k < edits.size(); ++k) {
    const Edit& e = edits[k];
    if (e.start < 0 || e.end < e.start || e.end > static_cast<int>(src.size()))
      throw std::invalid_argument("apply_edits: edit span out of bounds");
    if (k + 1 < edits.size() && edits[k + 1].start < e.end)
      throw std::invalid_argument("apply_edits: overlapping or unsorted edits");
  }
  TokenSeq out = src;
  for (auto it = edits.rbegin(); it != edits.rend(); ++it) {
    out.erase(out.begin() + it->start, out.begin() + it->end);
    out.insert(out.begin() + it->start, it->replacement.begin(), it->replacement.end());
  }
  return out;
}

namespace {

// errored target tokens = those without an identity link; a differing pair
// carries at least one (pure deletions touch no target token)
size_t errored_tokens(const ParallelExample& p) {
  if (p.src == p.trg) return 0;
  Alignment a = levenshtein_align(p.src, p.trg);
  size_t errors = 0;
  for (size_t t = 0; t < p.trg.size(); ++t) {
    int s = a.src_for_trg[t];
    if (s == kNullLink || p.src[static_cast<size_t>(s)] != p.trg[t]) ++errors;
  }
  return std::max<size_t>(errors, 1);
}

}  // namespace

CorpusStats error_rate(const Corpus& corpus) {
  if (corpus.empty()) throw std::invalid_argument("error_rate: empty corpus");
  CorpusStats st;
  st.sentence_count = corpus.size();
  size_t errors = 0;
  for (const auto& p : corpus) {
    st.token_count += p.trg.size();
    errors += errored_tokens(p);
  }
  st.error_rate = st.token_count ? static_cast<double>(errors) / st.token_count : 0.0;
  return st;
}

Corpus oversample(const Corpus& corpus, const std::string& tag, int factor) {
  if (factor < 1) throw std::invalid_argument("oversample: factor must be >= 1");
  Corpus out = corpus;
  size_t tagged = 0;
  for (int rep = 1; rep < factor; ++rep)
    for (const auto& p : corpus)
      if (p.domain_tag == tag) {
        out.push_back(p);
        ++tagged;
      }
  if (factor > 1 && tagged == 0)
    std::cerr << "oversample: no pair carries tag '" << tag << "', corpus unchanged\n";
  return out;
}

Corpus error_rate_adapt(const Corpus& corpus, double target_rate) {
  if (!(target_rate > 0.0 && target_rate < 1.0))
    throw std::invalid_argument("error_rate_adapt: target_rate must be in (0,1)");

  size_t total_tokens = 0, total_errors = 0;
  std::vector<size_t> errors(corpus.size());
  for (size_t i = 0; i < corpus.size(); ++i) {
    errors[i] = errored_tokens(corpus[i]);
    total_tokens += corpus[i].trg.size();
    total_errors += errors[i];
  }

  auto rate = [&] {
    return total_tokens ? static_cast<double>(total_errors) / total_tokens : 0.0;
  };

  Corpus out;
  out.reserve(corpus.size());
  for (size_t i = 0; i < corpus.size(); ++i) {
    bool identical = errors[i] == 0 && corpus[i].src == corpus[i].trg;
    if (identical && rate() < target_rate) {
      total_tokens -= corpus[i].trg.size();
      continue;
    }
    out.push_back(corpus[i]);
  }
  if (rate() < target_rate)
    std::cerr << "error_rate_adapt: target " << target_rate << " unreachable, achieved "
              << rate() << '\n';
  return out;
}

std::vector<std::vector<size_t>> make_batches(const Corpus& corpus,
                                              size_t target_tokens_per_batch,
                                              uint64_t epoch_seed) {
  std::vector<size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);

  SplitRng rng(epoch_seed, "batch-shuffle");
  for (size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng.uniform_int(i)]);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (corpus[a].trg.size() != corpus[b].trg.size())
      return corpus[a].trg.size() < corpus[b].trg.size();
    return corpus[a].src.size() < corpus[b].src.size();
  });

  std::vector<std::vector<size_t>> batches;
  std::vector<size_t> cur;
  size_t cur_tokens = 0;
  for (size_t idx : order) {
    size_t toks = std::max<size_t>(corpus[idx].trg.size(), 1);
    if (!cur.empty() && cur_tokens + toks > target_tokens_per_batch) {
      batches.push_back(std::move(cur));
      cur.clear();
      cur_tokens = 0;
    }
    cur.push_back(idx);
    cur_tokens += toks;
  }
  if (!cur.empty()) batches.push_back(std::move(cur));

  for (size_t i = batches.size(); i > 1; --i)
    std::swap(batches[i - 1], batches[rng.uniform_int(i)]);
  return batches;
}

size_t batch_token_budget(const Corpus& corpus, size_t n_sentences) {
  if (corpus.empty()) return n_sentences;
  size_t total = 0;
  for (const auto& p : corpus) total += p.trg.size();
  double mean = static_cast<double>(total) / corpus.size();
  return static_cast<size_t>(mean * n_sentences + 0.5);
}

Corpus corpus_from_m2(const std::vector<M2Sentence>& sentences, const std::string& domain_tag) {
  Corpus out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) {
    ParallelExample p;
    p.src = s.src;
    p.domain_tag = domain_tag;
    for (const auto& [annotator, edits] : s.by_annotator) p.gold.push_back(edits);
    // training pairs take annotator 0's applied corrections
    p.trg = p.gold.empty() ? p.src : apply_edits(p.src, p.gold.front());
    out.push_back(std::move(p));
  }
  return out;
}

Corpus corpus_from_files(const std::string& src_path, const std::string& trg_path,
                         const std::string& domain_tag) {
  auto src = read_token_file(src_path);
  auto trg = read_token_file(trg_path);
  if (src.size() != trg.size())
    throw std::runtime_error("corpus_from_files: line counts differ (" +
                             std::to_string(src.size()) + " vs " + std::to_string(trg.size()) +
                             ")");
  Corpus out;
  out.reserve(src.size());
  for (size_t i = 0; i < src.size(); ++i) {
    if (src[i].empty() || trg[i].empty()) continue;  // filtered
    out.push_back({src[i], trg[i], {}, domain_tag});
  }
  return out;
}

}  // namespace gec
