#include "gec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <unordered_map>

#include "gec/rng.hpp"

namespace gec {

double f_half(double precision, double recall) {
  double denom = 0.25 * precision + recall;
  if (denom <= 0.0) return 0.0;
  return 1.25 * precision * recall / denom;
}

M2Result m2_from_counts(int64_t tp, int64_t fp, int64_t fn) {
  M2Result r;
  r.tp = tp;
  r.fp = fp;
  r.fn = fn;
  r.precision = tp + fp == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  r.recall = tp + fn == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  r.f_half = f_half(r.precision, r.recall);
  return r;
}

namespace {

// Lattice machinery for MaxMatch extraction. Cells are (i,j) positions in
// the src x hyp edit DP; arcs are edits (atomic or merged) lying on some
// optimal path.
struct Lattice {
  int I, J, total;
  std::vector<std::vector<int>> F, B;  // forward / backward optimal costs
};

Lattice build_lattice(const TokenSeq& src, const TokenSeq& hyp) {
  int I = static_cast<int>(src.size()), J = static_cast<int>(hyp.size());
  Lattice lat;
  lat.I = I;
  lat.J = J;
  lat.F.assign(I + 1, std::vector<int>(J + 1, 0));
  lat.B.assign(I + 1, std::vector<int>(J + 1, 0));
  for (int i = 0; i <= I; ++i) lat.F[i][0] = i;
  for (int j = 0; j <= J; ++j) lat.F[0][j] = j;
  for (int i = 1; i <= I; ++i)
    for (int j = 1; j <= J; ++j)
      lat.F[i][j] = std::min({lat.F[i - 1][j - 1] + (src[i - 1] == hyp[j - 1] ? 0 : 1),
                              lat.F[i - 1][j] + 1, lat.F[i][j - 1] + 1});
  for (int i = I; i >= 0; --i) lat.B[i][J] = I - i;
  for (int j = J; j >= 0; --j) lat.B[I][j] = J - j;
  for (int i = I - 1; i >= 0; --i)
    for (int j = J - 1; j >= 0; --j)
      lat.B[i][j] = std::min({lat.B[i + 1][j + 1] + (src[i] == hyp[j] ? 0 : 1),
                              lat.B[i + 1][j] + 1, lat.B[i][j + 1] + 1});
  lat.total = lat.F[I][J];
  return lat;
}

struct Arc {
  int i1, j1, i2, j2;
};
inline bool operator<(const Arc& a, const Arc& b) {
  return std::tie(a.i1, a.j1, a.i2, a.j2) < std::tie(b.i1, b.j1, b.i2, b.j2);
}

// atomic edit edges (sub/del/ins) on some optimal path
std::vector<Arc> atomic_arcs(const Lattice& lat, const TokenSeq& src, const TokenSeq& hyp) {
  std::vector<Arc> arcs;
  for (int i = 0; i <= lat.I; ++i)
    for (int j = 0; j <= lat.J; ++j) {
      if (lat.F[i][j] + lat.B[i][j] != lat.total) continue;
      if (i < lat.I && j < lat.J && src[i] != hyp[j] &&
          lat.F[i][j] + 1 + lat.B[i + 1][j + 1] == lat.total)
        arcs.push_back({i, j, i + 1, j + 1});
      if (i < lat.I && lat.F[i][j] + 1 + lat.B[i + 1][j] == lat.total)
        arcs.push_back({i, j, i + 1, j});
      if (j < lat.J && lat.F[i][j] + 1 + lat.B[i][j + 1] == lat.total)
        arcs.push_back({i, j, i, j + 1});
    }
  return arcs;
}

bool optimal_match(const Lattice& lat, const TokenSeq& src, const TokenSeq& hyp, int i, int j) {
  return i < lat.I && j < lat.J && src[i] == hyp[j] &&
         lat.F[i][j] + lat.B[i][j] == lat.total &&
         lat.F[i][j] + lat.B[i + 1][j + 1] == lat.total;
}

// All arcs: atomic edits plus transitive merges whose gaps each cross at
// most max_unchanged matched tokens.
std::set<Arc> all_arcs(const Lattice& lat, const TokenSeq& src, const TokenSeq& hyp,
                       int max_unchanged) {
  std::vector<Arc> atoms = atomic_arcs(lat, src, hyp);
  std::map<std::pair<int, int>, std::vector<Arc>> by_start;
  for (const Arc& a : atoms) by_start[{a.i1, a.j1}].push_back(a);

  std::set<Arc> result(atoms.begin(), atoms.end());
  // chains extend strictly forward; iterate to a fixed point
  std::vector<Arc> frontier(atoms.begin(), atoms.end());
  while (!frontier.empty()) {
    std::vector<Arc> next;
    for (const Arc& a : frontier) {
      int ci = a.i2, cj = a.j2;
      for (int gap = 0; gap <= max_unchanged; ++gap) {
        if (gap > 0) {
          int mi = a.i2 + gap - 1, mj = a.j2 + gap - 1;
          if (!optimal_match(lat, src, hyp, mi, mj)) break;
          ci = mi + 1;
          cj = mj + 1;
        }
        auto it = by_start.find({ci, cj});
        if (it == by_start.end()) continue;
        for (const Arc& b : it->second) {
          Arc merged{a.i1, a.j1, b.i2, b.j2};
          if (result.insert(merged).second) next.push_back(merged);
        }
      }
    }
    frontier = std::move(next);
  }
  return result;
}

Edit arc_edit(const Arc& a, const TokenSeq& hyp) {
  Edit e;
  e.start = a.i1;
  e.end = a.i2;
  e.replacement.assign(hyp.begin() + a.j1, hyp.begin() + a.j2);
  return e;
}

struct EditKey {
  int start, end;
  TokenSeq rep;
  bool operator<(const EditKey& o) const {
    return std::tie(start, end, rep) < std::tie(o.start, o.end, o.rep);
  }
};

}  // namespace

std::vector<Edit> extract_system_edits(const TokenSeq& src, const TokenSeq& hyp,
                                       const EditSet& gold, int max_unchanged_words) {
  Lattice lat = build_lattice(src, hyp);
  if (lat.total == 0) return {};

  std::set<Arc> arcs = all_arcs(lat, src, hyp, max_unchanged_words);
  std::set<EditKey> gold_keys;
  for (const Edit& e : gold) gold_keys.insert({e.start, e.end, e.replacement});

  std::map<std::pair<int, int>, std::vector<Arc>> arcs_at;
  for (const Arc& a : arcs) arcs_at[{a.i1, a.j1}].push_back(a);
  for (auto& [_, v] : arcs_at)
    std::sort(v.begin(), v.end(), [&](const Arc& a, const Arc& b) {
      EditKey ka{a.i2, 0, {hyp.begin() + a.j1, hyp.begin() + a.j2}};
      EditKey kb{b.i2, 0, {hyp.begin() + b.j1, hyp.begin() + b.j2}};
      if (ka.start != kb.start) return ka.start < kb.start;
      if (ka.rep != kb.rep) return ka.rep < kb.rep;
      return a.j2 < b.j2;
    });

  // value[cell] = best (matches, -edits) from the cell to the end over
  // paths of optimal-edge matches and arcs
  const int J = lat.J;
  auto cell_id = [J](int i, int j) { return i * (J + 1) + j; };
  std::vector<std::pair<int, int>> value(static_cast<size_t>((lat.I + 1) * (J + 1)),
                                         {-1, 0});  // unreachable marker
  value[static_cast<size_t>(cell_id(lat.I, lat.J))] = {0, 0};

  // reverse topological order: decreasing i+j
  for (int s = lat.I + lat.J - 1; s >= 0; --s) {
    for (int i = std::max(0, s - lat.J); i <= std::min(lat.I, s); ++i) {
      int j = s - i;
      if (lat.F[i][j] + lat.B[i][j] != lat.total) continue;
      std::pair<int, int> best{-1, 0};
      if (optimal_match(lat, src, hyp, i, j)) {
        auto v = value[static_cast<size_t>(cell_id(i + 1, j + 1))];
        if (v.first >= 0) best = std::max(best, v);
      }
      auto it = arcs_at.find({i, j});
      if (it != arcs_at.end())
        for (const Arc& a : it->second) {
          auto v = value[static_cast<size_t>(cell_id(a.i2, a.j2))];
          if (v.first < 0) continue;
          int matched = gold_keys.count({a.i1, a.i2, {hyp.begin() + a.j1, hyp.begin() + a.j2}}) ? 1 : 0;
          best = std::max(best, {v.first + matched, v.second - 1});
        }
      value[static_cast<size_t>(cell_id(i, j))] = best;
    }
  }

  // leftmost reconstruction: at each cell prefer the smallest optimal arc,
  // falling back to the match edge
  std::vector<Edit> edits;
  int i = 0, j = 0;
  while (i != lat.I || j != lat.J) {
    auto target = value[static_cast<size_t>(cell_id(i, j))];
    bool advanced = false;
    auto it = arcs_at.find({i, j});
    if (it != arcs_at.end()) {
      for (const Arc& a : it->second) {
        auto v = value[static_cast<size_t>(cell_id(a.i2, a.j2))];
        if (v.first < 0) continue;
        int matched =
            gold_keys.count({a.i1, a.i2, {hyp.begin() + a.j1, hyp.begin() + a.j2}}) ? 1 : 0;
        if (std::pair<int, int>{v.first + matched, v.second - 1} == target) {
          edits.push_back(arc_edit(a, hyp));
          i = a.i2;
          j = a.j2;
          advanced = true;
          break;
        }
      }
    }
    if (advanced) continue;
    if (optimal_match(lat, src, hyp, i, j) &&
        value[static_cast<size_t>(cell_id(i + 1, j + 1))] == target) {
      ++i, ++j;
      continue;
    }
    throw std::logic_error("extract_system_edits: reconstruction left the optimal lattice");
  }
  return edits;
}

M2Result m2_score(const std::vector<M2Item>& corpus, int max_unchanged_words) {
  int64_t TP = 0, FP = 0, FN = 0;
  for (const auto& item : corpus) {
    if (item.gold.empty())
      throw std::invalid_argument("m2_score: sentence without annotations");
    int best_a = -1;
    double best_f = -1.0;
    int64_t btp = 0, bfp = 0, bfn = 0;
    for (size_t a = 0; a < item.gold.size(); ++a) {
      const EditSet& gold = item.gold[a];
      std::vector<Edit> sys = extract_system_edits(item.src, item.hyp, gold, max_unchanged_words);
      std::set<EditKey> gold_keys;
      for (const Edit& e : gold) gold_keys.insert({e.start, e.end, e.replacement});
      int64_t tp = 0;
      for (const Edit& e : sys)
        if (gold_keys.count({e.start, e.end, e.replacement})) ++tp;
      int64_t fp = static_cast<int64_t>(sys.size()) - tp;
      int64_t fn = static_cast<int64_t>(gold.size()) - tp;
      M2Result cand = m2_from_counts(TP + tp, FP + fp, FN + fn);
      if (cand.f_half > best_f) {
        best_f = cand.f_half;
        best_a = static_cast<int>(a);
        btp = tp;
        bfp = fp;
        bfn = fn;
      }
    }
    (void)best_a;
    TP += btp;
    FP += bfp;
    FN += bfn;
  }
  return m2_from_counts(TP, FP, FN);
}

namespace {

using NgramCounts = std::map<std::vector<std::string>, int64_t>;

NgramCounts ngrams(const TokenSeq& s, int n) {
  NgramCounts counts;
  if (static_cast<int>(s.size()) >= n)
    for (size_t i = 0; i + n <= s.size(); ++i)
      counts[std::vector<std::string>(s.begin() + i, s.begin() + i + n)] += 1;
  return counts;
}

struct SentenceGleu {
  std::array<int64_t, 4> numerator{};
  std::array<int64_t, 4> denominator{};
  int64_t ref_len = 0;
  int64_t hyp_len = 0;
};

SentenceGleu sentence_stats(const TokenSeq& src, const TokenSeq& hyp, const TokenSeq& ref,
                            int n_max) {
  SentenceGleu st;
  st.ref_len = static_cast<int64_t>(ref.size());
  st.hyp_len = static_cast<int64_t>(hyp.size());
  if (hyp.empty()) return st;  // contributes zero counts
  for (int n = 1; n <= n_max; ++n) {
    NgramCounts H = ngrams(hyp, n), R = ngrams(ref, n), S = ngrams(src, n);
    int64_t num = 0, den = 0;
    for (const auto& [g, ch] : H) {
      auto rit = R.find(g);
      int64_t cr = rit == R.end() ? 0 : rit->second;
      auto sit = S.find(g);
      int64_t cs = sit == S.end() ? 0 : sit->second;
      num += std::min(ch, cr) - std::max<int64_t>(0, std::min(ch, cs) - std::min(ch, cr));
      den += ch;
    }
    st.numerator[static_cast<size_t>(n - 1)] = num;
    st.denominator[static_cast<size_t>(n - 1)] = den;
  }
  return st;
}

}  // namespace

GleuResult gleu_score(const std::vector<TokenSeq>& srcs, const std::vector<TokenSeq>& hyps,
                      const std::vector<std::vector<TokenSeq>>& references,
                      const GleuConfig& cfg) {
  if (srcs.size() != hyps.size() || srcs.size() != references.size())
    throw std::invalid_argument("gleu_score: corpus sizes differ");
  if (cfg.n_max < 1 || cfg.n_max > 4) throw std::invalid_argument("gleu_score: n_max must be 1..4");
  size_t max_refs = 0;
  for (const auto& refs : references) {
    if (refs.empty()) throw std::invalid_argument("gleu_score: sentence without references");
    max_refs = std::max(max_refs, refs.size());
  }
  int iterations = max_refs <= 1 ? 1 : cfg.iterations;

  // cache per-(sentence, reference) statistics; iterations only re-sample
  std::vector<std::vector<SentenceGleu>> cache(srcs.size());
  for (size_t s = 0; s < srcs.size(); ++s)
    for (const auto& ref : references[s])
      cache[s].push_back(sentence_stats(srcs[s], hyps[s], ref, cfg.n_max));

  GleuResult out;
  double score_acc = 0.0;
  std::array<double, 4> prec_acc{};
  double bp_acc = 0.0;
  for (int it = 0; it < iterations; ++it) {
    SplitRng rng(cfg.seed, "gleu-iter", static_cast<uint64_t>(it));
    std::array<int64_t, 4> num{}, den{};
    int64_t r_len = 0, h_len = 0;
    for (size_t s = 0; s < srcs.size(); ++s) {
      size_t pick = references[s].size() == 1 ? 0 : rng.uniform_int(references[s].size());
      const SentenceGleu& st = cache[s][pick];
      for (int n = 0; n < cfg.n_max; ++n) {
        num[static_cast<size_t>(n)] += st.numerator[static_cast<size_t>(n)];
        den[static_cast<size_t>(n)] += st.denominator[static_cast<size_t>(n)];
      }
      r_len += st.ref_len;
      h_len += st.hyp_len;
    }
    double log_sum = 0.0;
    int orders = 0;
    std::array<double, 4> prec{};
    for (int n = 0; n < cfg.n_max; ++n) {
      if (den[static_cast<size_t>(n)] == 0) continue;  // no n-grams of this order corpus-wide
      double p = std::max<double>(0.0, static_cast<double>(num[static_cast<size_t>(n)])) /
                 static_cast<double>(den[static_cast<size_t>(n)]);
      prec[static_cast<size_t>(n)] = p;
      log_sum += std::log(std::max(p, cfg.epsilon));
      ++orders;
    }
    double bp = 0.0, score = 0.0;
    if (h_len > 0 && orders > 0) {
      bp = std::min(1.0, std::exp(1.0 - static_cast<double>(r_len) / static_cast<double>(h_len)));
      score = bp * std::exp(log_sum / orders);
    }
    score_acc += score;
    bp_acc += bp;
    for (int n = 0; n < cfg.n_max; ++n) prec_acc[static_cast<size_t>(n)] += prec[static_cast<size_t>(n)];
  }
  out.score = score_acc / iterations;
  out.brevity_penalty = bp_acc / iterations;
  for (int n = 0; n < 4; ++n) out.precisions[static_cast<size_t>(n)] = prec_acc[static_cast<size_t>(n)] / iterations;
  return out;
}

}  // namespace gec
