#include "gec/decode.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace gec {

void EnsembleSpec::validate() const {
  if (members.empty()) throw std::invalid_argument("EnsembleSpec: at least one member required");
  for (const auto* m : members)
    if (m->cfg.vocab_size != members[0]->cfg.vocab_size)
      throw std::invalid_argument("EnsembleSpec: members must share one vocabulary");
  if (lm && lm->cfg.vocab_size != members[0]->cfg.vocab_size)
    throw std::invalid_argument("EnsembleSpec: LM vocabulary differs from the members'");
  if (!lm && alpha != 0.0)
    throw std::invalid_argument("EnsembleSpec: alpha must be 0 without a language model");
  if (alpha < 0.0) throw std::invalid_argument("EnsembleSpec: alpha must be >= 0");
}

namespace {

struct Expansion {
  size_t hyp;
  int token;
  double score;  // unnormalized prefix score after the expansion
};

}  // namespace

BeamResult beam_search(EnsembleSpec& spec, const std::vector<int>& src_ids, int beam_size,
                       int max_len) {
  spec.validate();
  if (src_ids.empty()) throw std::invalid_argument("beam_search: empty source");
  if (beam_size < 1) throw std::invalid_argument("beam_search: beam_size must be >= 1");
  const size_t N = spec.members.size();
  const int V = spec.members[0]->cfg.vocab_size;

  std::vector<Seq2SeqModelF::EncodeCtx> ctx;
  ctx.reserve(N);
  for (auto* m : spec.members) ctx.push_back(m->encode(src_ids));

  BeamHypothesis root;
  root.member_logprob.assign(N, 0.0);
  for (size_t i = 0; i < N; ++i) root.member_state.push_back(ctx[i].init_state);
  if (spec.lm) root.lm_state = spec.lm->initial_state();

  std::vector<BeamHypothesis> live{root};
  std::vector<BeamHypothesis> finished;

  auto worst_finished = [&] {
    double worst = std::numeric_limits<double>::infinity();
    for (const auto& h : finished) worst = std::min(worst, h.normalized_score(spec.alpha));
    return worst;
  };

  for (int step = 0; step <= max_len && !live.empty(); ++step) {
    // per-hypothesis next-token distributions
    std::vector<std::vector<TensorF>> logp(live.size());       // [hyp][member]
    std::vector<TensorF> lm_logp(live.size());
    std::vector<std::vector<TensorF>> next_state(live.size());
    std::vector<TensorF> lm_next(live.size());
    for (size_t h = 0; h < live.size(); ++h) {
      int prev = live[h].tokens.empty() ? kBosId : live[h].tokens.back();
      next_state[h].resize(N);
      logp[h].resize(N);
      for (size_t i = 0; i < N; ++i) {
        auto out = spec.members[i]->decode_step(ctx[i], live[h].member_state[i], prev);
        next_state[h][i] = std::move(out.state);
        logp[h][i] = std::move(out.log_probs);
      }
      if (spec.lm) {
        auto out = spec.lm->value_step(live[h].lm_state, prev);
        lm_next[h] = std::move(out.state);
        lm_logp[h] = std::move(out.log_probs);
      }
    }

    bool last_step = step == max_len;
    std::vector<Expansion> cands;
    cands.reserve(live.size() * static_cast<size_t>(V));
    for (size_t h = 0; h < live.size(); ++h) {
      double base = live[h].prefix_score(spec.alpha);
      auto token_score = [&](int v) {
        double mean = 0.0;
        for (size_t i = 0; i < N; ++i) mean += static_cast<double>(logp[h][i].data[static_cast<size_t>(v)]);
        mean /= static_cast<double>(N);
        double s = mean;
        if (spec.lm) s += spec.alpha * static_cast<double>(lm_logp[h].data[static_cast<size_t>(v)]);
        return s;
      };
      if (last_step) {
        cands.push_back({h, kEosId, base + token_score(kEosId)});
        continue;
      }
      for (int v = 0; v < V; ++v) {
        if (v == kPadId || v == kBosId) continue;
        cands.push_back({h, v, base + token_score(v)});
      }
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Expansion& a, const Expansion& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.hyp != b.hyp) return a.hyp < b.hyp;
      return a.token < b.token;
    });

    std::vector<BeamHypothesis> next;
    int taken = 0;
    for (const auto& c : cands) {
      if (taken >= beam_size) break;
      ++taken;
      BeamHypothesis h = live[c.hyp];
      for (size_t i = 0; i < N; ++i)
        h.member_logprob[i] += static_cast<double>(logp[c.hyp][i].data[static_cast<size_t>(c.token)]);
      if (spec.lm)
        h.lm_logprob += static_cast<double>(lm_logp[c.hyp].data[static_cast<size_t>(c.token)]);
      if (c.token == kEosId) {
        h.finished = true;
        finished.push_back(std::move(h));
        if (static_cast<int>(finished.size()) > 4 * beam_size) {
          std::stable_sort(finished.begin(), finished.end(), [&](const auto& a, const auto& b) {
            return a.normalized_score(spec.alpha) > b.normalized_score(spec.alpha);
          });
          finished.resize(static_cast<size_t>(beam_size));
        }
        continue;
      }
      h.tokens.push_back(c.token);
      for (size_t i = 0; i < N; ++i) h.member_state[i] = next_state[c.hyp][i];
      if (spec.lm) h.lm_state = lm_next[c.hyp];
      next.push_back(std::move(h));
    }
    live = std::move(next);

    // a live prefix can at best finish with zero-cost future tokens; compare
    // in the sum-based units normalized_score uses
    if (static_cast<int>(finished.size()) >= beam_size) {
      double bound = worst_finished();
      live.erase(std::remove_if(live.begin(), live.end(),
                                [&](const BeamHypothesis& h) {
                                  double sum = 0.0;
                                  for (double m : h.member_logprob) sum += m;
                                  sum += spec.alpha * h.lm_logprob;
                                  return sum / static_cast<double>(max_len + 1) <= bound;
                                }),
                 live.end());
    }
  }

  std::stable_sort(finished.begin(), finished.end(), [&](const auto& a, const auto& b) {
    double sa = a.normalized_score(spec.alpha), sb = b.normalized_score(spec.alpha);
    if (sa != sb) return sa > sb;
    return a.tokens < b.tokens;
  });
  if (finished.size() > static_cast<size_t>(std::max(beam_size, 1)))
    finished.resize(static_cast<size_t>(std::max(beam_size, 1)));

  BeamResult result;
  if (!finished.empty()) result.best = finished.front().tokens;
  result.nbest = std::move(finished);
  return result;
}

double ensemble_score(EnsembleSpec& spec, const std::vector<int>& src_ids,
                      const std::vector<int>& y_ids) {
  spec.validate();
  if (y_ids.empty()) throw std::invalid_argument("ensemble_score: empty hypothesis");
  std::vector<int> steps = y_ids;
  steps.push_back(kEosId);

  double total = 0.0;
  for (auto* m : spec.members) {
    auto ctx = m->encode(src_ids);
    TensorF state = ctx.init_state;
    int prev = kBosId;
    double lp = 0.0;
    for (int y : steps) {
      auto out = m->decode_step(ctx, state, prev);
      lp += static_cast<double>(out.log_probs.data[static_cast<size_t>(y)]);
      state = std::move(out.state);
      prev = y;
    }
    total += lp;
  }
  if (spec.lm) {
    TensorF state = spec.lm->initial_state();
    int prev = kBosId;
    double lp = 0.0;
    for (int y : steps) {
      auto out = spec.lm->value_step(state, prev);
      lp += static_cast<double>(out.log_probs.data[static_cast<size_t>(y)]);
      state = std::move(out.state);
      prev = y;
    }
    total += spec.alpha * lp;
  }
  return total / static_cast<double>(steps.size());
}

std::vector<std::vector<int>> decode_corpus(EnsembleSpec& spec,
                                            const std::vector<std::vector<int>>& srcs,
                                            int beam_size, int threads) {
  std::vector<std::vector<int>> out(srcs.size());
  auto run_range = [&](size_t lo, size_t hi) {
    for (size_t i = lo; i < hi; ++i) {
      if (srcs[i].empty()) continue;
      int cap = std::min(spec.members[0]->cfg.max_len,
                         static_cast<int>(srcs[i].size()) * 2 + 6);
      out[i] = beam_search(spec, srcs[i], beam_size, cap).best;
    }
  };
  int T = std::max(1, threads);
  if (T == 1 || srcs.size() <= 1) {
    run_range(0, srcs.size());
  } else {
    T = static_cast<int>(std::min<size_t>(static_cast<size_t>(T), srcs.size()));
    std::vector<std::thread> pool;
    for (int t = 0; t < T; ++t) {
      size_t lo = srcs.size() * static_cast<size_t>(t) / static_cast<size_t>(T);
      size_t hi = srcs.size() * static_cast<size_t>(t + 1) / static_cast<size_t>(T);
      pool.emplace_back(run_range, lo, hi);
    }
    for (auto& th : pool) th.join();
  }
  return out;
}

double pick_alpha(const AlphaCurve& curve) {
  if (curve.alphas.empty()) throw std::invalid_argument("pick_alpha: empty curve");
  size_t best = 0;
  for (size_t i = 1; i < curve.alphas.size(); ++i)
    if (curve.metrics[i] > curve.metrics[best]) best = i;
  return curve.alphas[best];
}

std::pair<double, AlphaCurve> tune_alpha(
    EnsembleSpec& spec, const std::vector<std::vector<int>>& dev_srcs, int beam_size,
    const std::function<double(const std::vector<std::vector<int>>&)>& corpus_metric,
    int threads) {
  if (!spec.lm) throw std::invalid_argument("tune_alpha: ensemble has no language model");
  if (dev_srcs.empty()) throw std::invalid_argument("tune_alpha: empty dev set");
  AlphaCurve curve;
  for (int k = 0; k <= 20; ++k) {
    double alpha = 0.1 * k;
    spec.alpha = alpha;
    auto hyps = decode_corpus(spec, dev_srcs, beam_size, threads);
    curve.alphas.push_back(alpha);
    curve.metrics.push_back(corpus_metric(hyps));
  }
  double best = pick_alpha(curve);
  spec.alpha = best;
  return {best, curve};
}

}  // namespace gec
