#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gec/model.hpp"

namespace gec {

// Ensemble of independently trained members plus an optional fused
// language model weighted by alpha.
struct EnsembleSpec {
  std::vector<Seq2SeqModelF*> members;
  DecoderLmF* lm = nullptr;
  double alpha = 0.0;

  void validate() const;
};

struct BeamHypothesis {
  std::vector<int> tokens;             // content ids; eos is accounted in scores
  std::vector<double> member_logprob;  // cumulative, one per member
  double lm_logprob = 0.0;             // cumulative
  std::vector<TensorF> member_state;
  TensorF lm_state;
  bool finished = false;

  // pruning score: mean member log-prob plus weighted LM log-prob
  double prefix_score(double alpha) const {
    double s = 0.0;
    for (double m : member_logprob) s += m;
    return s / static_cast<double>(member_logprob.size()) + alpha * lm_logprob;
  }
  // reported score: (sum_i log P_i + alpha log P_LM) / |y|, eos counted
  double normalized_score(double alpha) const {
    double s = 0.0;
    for (double m : member_logprob) s += m;
    s += alpha * lm_logprob;
    return s / static_cast<double>(tokens.size() + 1);
  }
};

struct BeamResult {
  std::vector<int> best;               // content ids of the top hypothesis
  std::vector<BeamHypothesis> nbest;   // finished, by normalized score desc
};

// Beam search over the ensemble. Expansion scores accumulate the mean of
// member log-probs plus alpha * LM log-prob; pruning uses the unnormalized
// prefix score; final ranking is by length-normalized score. Ties break by
// hypothesis index, then token id.
BeamResult beam_search(EnsembleSpec& spec, const std::vector<int>& src_ids, int beam_size,
                       int max_len);

// Force-decodes y (eos appended) through every member and the LM:
// s(y|x) = (sum_i log P_i(y|x) + alpha log P_LM(y)) / |y|.
double ensemble_score(EnsembleSpec& spec, const std::vector<int>& src_ids,
                      const std::vector<int>& y_ids);

// Sentences decode independently; output order matches input order.
std::vector<std::vector<int>> decode_corpus(EnsembleSpec& spec,
                                            const std::vector<std::vector<int>>& srcs,
                                            int beam_size, int threads = 1);

struct AlphaCurve {
  std::vector<double> alphas;
  std::vector<double> metrics;
};

// Grid member attaining the curve maximum; ties toward smaller alpha.
double pick_alpha(const AlphaCurve& curve);

// Decodes dev at each alpha in {0.0, 0.1, ..., 2.0} and scores the outputs
// with `corpus_metric` (higher is better).
std::pair<double, AlphaCurve> tune_alpha(
    EnsembleSpec& spec, const std::vector<std::vector<int>>& dev_srcs, int beam_size,
    const std::function<double(const std::vector<std::vector<int>>&)>& corpus_metric,
    int threads = 1);

}  // namespace gec
