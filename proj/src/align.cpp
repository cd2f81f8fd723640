#include "gec/align.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gec {

namespace {

std::vector<std::vector<int>> edit_dp(const TokenSeq& src, const TokenSeq& trg) {
  const size_t I = src.size(), J = trg.size();
  std::vector<std::vector<int>> d(I + 1, std::vector<int>(J + 1, 0));
  for (size_t i = 0; i <= I; ++i) d[i][0] = static_cast<int>(i);
  for (size_t j = 0; j <= J; ++j) d[0][j] = static_cast<int>(j);
  for (size_t i = 1; i <= I; ++i)
    for (size_t j = 1; j <= J; ++j) {
      int sub = d[i - 1][j - 1] + (src[i - 1] == trg[j - 1] ? 0 : 1);
      d[i][j] = std::min({sub, d[i - 1][j] + 1, d[i][j - 1] + 1});
    }
  return d;
}

}  // namespace

int levenshtein_distance(const TokenSeq& src, const TokenSeq& trg) {
  return edit_dp(src, trg)[src.size()][trg.size()];
}

Alignment levenshtein_align(const TokenSeq& src, const TokenSeq& trg) {
  auto d = edit_dp(src, trg);
  Alignment a;
  a.src_for_trg.assign(trg.size(), kNullLink);

  size_t i = src.size(), j = trg.size();
  while (i > 0 || j > 0) {
    bool eq = i > 0 && j > 0 && src[i - 1] == trg[j - 1];
    if (i > 0 && j > 0 && eq && d[i][j] == d[i - 1][j - 1]) {
      a.src_for_trg[j - 1] = static_cast<int>(i - 1);  // match
      --i, --j;
    } else if (i > 0 && j > 0 && !eq && d[i][j] == d[i - 1][j - 1] + 1) {
      a.src_for_trg[j - 1] = static_cast<int>(i - 1);  // substitution
      --i, --j;
    } else if (i > 0 && d[i][j] == d[i - 1][j] + 1) {
      --i;  // deletion: no link
    } else {
      a.src_for_trg[j - 1] = kNullLink;  // insertion
      --j;
    }
  }
  return a;
}

double AlignModel::translation_prob(int src_id_, int trg_id_) const {
  if (src_id_ < 0 || trg_id_ < 0 || trg_vocab.empty())
    return 1.0 / static_cast<double>(std::max<size_t>(trg_vocab.size(), 1));
  return ttable[static_cast<size_t>(src_id_)][static_cast<size_t>(trg_id_)];
}

int AlignModel::src_id(const std::string& w) const {
  auto it = src_vocab.find(w);
  return it == src_vocab.end() ? -1 : it->second;
}

int AlignModel::trg_id(const std::string& w) const {
  auto it = trg_vocab.find(w);
  return it == trg_vocab.end() ? -1 : it->second;
}

double AlignModel::position_prior(int s, int t, int src_len, int trg_len) const {
  if (s == kNullLink) return p_null;
  double dist = std::fabs(static_cast<double>(t + 1) / trg_len -
                          static_cast<double>(s + 1) / src_len);
  double w = std::exp(-tension * dist);
  double z = 0.0;
  for (int k = 0; k < src_len; ++k)
    z += std::exp(-tension * std::fabs(static_cast<double>(t + 1) / trg_len -
                                       static_cast<double>(k + 1) / src_len));
  return (1.0 - p_null) * w / z;
}

AlignModel train_aligner(const std::vector<SentencePair>& corpus, int em_iterations,
                         double tension, double p_null, EmTrace* trace) {
  if (corpus.empty()) throw std::invalid_argument("train_aligner: empty corpus");
  if (em_iterations < 1) throw std::invalid_argument("train_aligner: em_iterations must be >= 1");

  AlignModel model;
  model.tension = tension;
  model.p_null = p_null;

  for (const auto& [src, trg] : corpus) {
    for (const auto& w : src)
      if (!model.src_vocab.count(w))
        model.src_vocab.emplace(w, static_cast<int>(model.src_vocab.size()) + 1);  // 0 = null
    for (const auto& w : trg)
      if (!model.trg_vocab.count(w))
        model.trg_vocab.emplace(w, static_cast<int>(model.trg_vocab.size()));
  }
  const size_t n_src = model.src_vocab.size() + 1;
  const size_t n_trg = model.trg_vocab.size();
  if (n_trg == 0) throw std::invalid_argument("train_aligner: empty vocabulary");

  model.ttable.assign(n_src, std::vector<double>(n_trg, 1.0 / n_trg));

  // cache id sequences
  std::vector<std::pair<std::vector<int>, std::vector<int>>> ids;
  ids.reserve(corpus.size());
  for (const auto& [src, trg] : corpus) {
    std::vector<int> s, t;
    for (const auto& w : src) s.push_back(model.src_vocab.at(w));
    for (const auto& w : trg) t.push_back(model.trg_vocab.at(w));
    ids.emplace_back(std::move(s), std::move(t));
  }

  std::vector<std::vector<double>> counts;
  for (int iter = 0; iter < em_iterations; ++iter) {
    counts.assign(n_src, std::vector<double>(n_trg, 0.0));
    double ll = 0.0;
    for (const auto& [sids, tids] : ids) {
      if (sids.empty() || tids.empty()) continue;
      int Tx = static_cast<int>(sids.size());
      int Ty = static_cast<int>(tids.size());
      for (int t = 0; t < Ty; ++t) {
        int y = tids[t];
        double null_term = model.position_prior(kNullLink, t, Tx, Ty) * model.ttable[0][y];
        double z = null_term;
        for (int s = 0; s < Tx; ++s)
          z += model.position_prior(s, t, Tx, Ty) * model.ttable[sids[s]][y];
        ll += std::log(z);
        counts[0][y] += null_term / z;
        for (int s = 0; s < Tx; ++s)
          counts[sids[s]][y] +=
              model.position_prior(s, t, Tx, Ty) * model.ttable[sids[s]][y] / z;
      }
    }
    if (trace) trace->log_likelihood.push_back(ll);

    for (size_t x = 0; x < n_src; ++x) {
      double z = 0.0;
      for (double c : counts[x]) z += c;
      if (z <= 0.0) continue;  // unseen source word keeps uniform row
      for (size_t y = 0; y < n_trg; ++y) model.ttable[x][y] = counts[x][y] / z;
    }
  }
  return model;
}

Alignment viterbi_align(const AlignModel& model, const TokenSeq& src, const TokenSeq& trg) {
  Alignment a;
  a.src_for_trg.assign(trg.size(), kNullLink);
  int Tx = static_cast<int>(src.size());
  int Ty = static_cast<int>(trg.size());
  for (int t = 0; t < Ty; ++t) {
    int y = model.trg_id(trg[static_cast<size_t>(t)]);
    double best = model.position_prior(kNullLink, t, Tx, Ty) * model.translation_prob(0, y);
    int best_s = kNullLink;
    for (int s = 0; s < Tx; ++s) {
      int x = model.src_id(src[static_cast<size_t>(s)]);
      double p = model.position_prior(s, t, Tx, Ty) *
                 (x < 0 ? model.translation_prob(-1, y) : model.translation_prob(x, y));
      if (p > best) {
        best = p;
        best_s = s;
      }
    }
    a.src_for_trg[static_cast<size_t>(t)] = best_s;
  }
  return a;
}

EditWeights edit_weights(const Alignment& a, const TokenSeq& src, const TokenSeq& trg,
                         double Lambda) {
  if (Lambda < 1.0) throw std::invalid_argument("edit_weights: Lambda must be >= 1");
  if (a.size() != trg.size())
    throw std::invalid_argument("edit_weights: alignment/sentence length mismatch");
  EditWeights w;
  w.Lambda = Lambda;
  w.lambda.resize(trg.size());
  for (size_t t = 0; t < trg.size(); ++t) {
    int s = a.src_for_trg[t];
    if (s != kNullLink && (s < 0 || static_cast<size_t>(s) >= src.size()))
      throw std::invalid_argument("edit_weights: link out of bounds");
    bool differs = s == kNullLink || src[static_cast<size_t>(s)] != trg[t];
    w.lambda[t] = differs ? Lambda : 1.0;
  }
  return w;
}

std::string format_alignment(const Alignment& a) {
  std::ostringstream out;
  bool first = true;
  for (size_t t = 0; t < a.size(); ++t) {
    if (a.src_for_trg[t] == kNullLink) continue;
    if (!first) out << ' ';
    out << a.src_for_trg[t] << '-' << t;
    first = false;
  }
  return out.str();
}

Alignment parse_alignment(const std::string& line, size_t trg_len) {
  Alignment a;
  a.src_for_trg.assign(trg_len, kNullLink);
  std::istringstream in(line);
  std::string pair;
  while (in >> pair) {
    size_t dash = pair.find('-');
    if (dash == std::string::npos)
      throw std::runtime_error("parse_alignment: malformed link '" + pair + "'");
    int s = std::stoi(pair.substr(0, dash));
    size_t t = static_cast<size_t>(std::stoul(pair.substr(dash + 1)));
    if (t >= trg_len) throw std::runtime_error("parse_alignment: target index out of bounds");
    a.src_for_trg[t] = s;
  }
  return a;
}

void save_align_model(const std::string& path, const AlignModel& model) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "# gec align v1 " << model.tension << ' ' << model.p_null << '\n';
  out.precision(17);
  std::vector<std::string> src_words(model.src_vocab.size() + 1, "<null>");
  for (const auto& [w, id] : model.src_vocab) src_words[static_cast<size_t>(id)] = w;
  std::vector<std::string> trg_words(model.trg_vocab.size());
  for (const auto& [w, id] : model.trg_vocab) trg_words[static_cast<size_t>(id)] = w;
  for (size_t x = 0; x < model.ttable.size(); ++x)
    for (size_t y = 0; y < model.ttable[x].size(); ++y)
      if (model.ttable[x][y] > 1e-9)
        out << src_words[x] << ' ' << trg_words[y] << ' ' << model.ttable[x][y] << '\n';
}

AlignModel load_align_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string header;
  std::getline(in, header);
  AlignModel model;
  {
    std::istringstream hs(header);
    std::string hash, name, kind, version;
    if (!(hs >> hash >> name >> kind >> version >> model.tension >> model.p_null) ||
        hash != "#" || name != "gec" || kind != "align")
      throw std::runtime_error(path + ": not an alignment model file");
  }
  struct Entry {
    std::string src, trg;
    double p;
  };
  std::vector<Entry> entries;
  std::string src, trg;
  double p;
  while (in >> src >> trg >> p) {
    entries.push_back({src, trg, p});
    if (src != "<null>" && !model.src_vocab.count(src))
      model.src_vocab.emplace(src, static_cast<int>(model.src_vocab.size()) + 1);
    if (!model.trg_vocab.count(trg))
      model.trg_vocab.emplace(trg, static_cast<int>(model.trg_vocab.size()));
  }
  model.ttable.assign(model.src_vocab.size() + 1,
                      std::vector<double>(model.trg_vocab.size(), 0.0));
  for (const auto& e : entries) {
    int x = e.src == "<null>" ? 0 : model.src_vocab.at(e.src);
    model.ttable[static_cast<size_t>(x)][static_cast<size_t>(model.trg_vocab.at(e.trg))] = e.p;
  }
  return model;
}

}  // namespace gec
