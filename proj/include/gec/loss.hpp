#pragma once

#include <map>
#include <thread>
#include <vector>

#include "gec/model.hpp"

namespace gec {

struct EncodedPair {
  std::vector<int> src;
  std::vector<int> trg;
  std::vector<double> lambda;  // empty -> unit weights
};

struct BatchLoss {
  double loss_sum = 0.0;     // optimization objective (summed)
  size_t target_tokens = 0;  // incl. the eos step
  double per_token() const { return target_tokens ? loss_sum / target_tokens : 0.0; }
};

namespace detail {

// Teacher-forced NLL over a batch. Per-sentence RNG is keyed by corpus
// index and losses/gradients reduce in a fixed order, so results are
// reproducible for a fixed thread count (bitwise for threads == 1).
template <typename F>
BatchLoss batch_nll(Seq2SeqModelT<F>& model, const std::vector<EncodedPair>& corpus,
                    const std::vector<size_t>& batch, uint64_t step_seed, bool training,
                    int threads, bool use_weights) {
  const size_t n = batch.size();
  std::vector<double> losses(n, 0.0);
  std::vector<size_t> tokens(n, 0);

  auto run_range = [&](size_t lo, size_t hi, std::map<std::string, TensorT<F>>* grads) {
    for (size_t k = lo; k < hi; ++k) {
      const EncodedPair& ex = corpus[batch[k]];
      GraphT<F> g;
      g.grad_enabled = training;
      SplitRng rng(step_seed, "sent", batch[k]);
      const std::vector<double>* lam =
          use_weights && !ex.lambda.empty() ? &ex.lambda : nullptr;
      std::vector<double> step_logprobs;
      auto* loss = model.build_loss(g, ex.src, ex.trg, lam, rng, training, &step_logprobs);
      // reported loss accumulates in double; the graph scalar drives backward
      double sent_loss = 0.0;
      for (size_t t = 0; t < step_logprobs.size(); ++t) {
        double w = lam && t < lam->size() ? (*lam)[t] : 1.0;
        sent_loss -= w * step_logprobs[t];
      }
      losses[k] = sent_loss;
      tokens[k] = ex.trg.size() + 1;
      if (training && grads) {
        g.backward(loss);
        g.accumulate_param_grads(*grads);
      }
    }
  };

  int T = std::max(1, threads);
  if (T == 1 || n <= 1) {
    run_range(0, n, training ? &model.store.grads : nullptr);
  } else {
    T = static_cast<int>(std::min<size_t>(static_cast<size_t>(T), n));
    std::vector<std::map<std::string, TensorT<F>>> shard_grads(static_cast<size_t>(T));
    std::vector<std::thread> pool;
    for (int t = 0; t < T; ++t) {
      size_t lo = n * static_cast<size_t>(t) / static_cast<size_t>(T);
      size_t hi = n * static_cast<size_t>(t + 1) / static_cast<size_t>(T);
      pool.emplace_back(run_range, lo, hi,
                        training ? &shard_grads[static_cast<size_t>(t)] : nullptr);
    }
    for (auto& th : pool) th.join();
    if (training) {
      for (auto& shard : shard_grads)
        for (auto& [name, gt] : shard) {
          auto it = model.store.grads.find(name);
          if (it == model.store.grads.end())
            it = model.store.grads.emplace(name, TensorT<F>::zeros(gt.rows(), gt.cols())).first;
          for (size_t i = 0; i < gt.data.size(); ++i) it->second.data[i] += gt.data[i];
        }
    }
  }

  BatchLoss out;
  for (size_t k = 0; k < n; ++k) {
    out.loss_sum += losses[k];
    out.target_tokens += tokens[k];
  }
  return out;
}

}  // namespace detail

// Each target token's negative log-prob is multiplied by its edit weight
// before summation. Gradients (when training) accumulate into
// model.store.grads; call store.zero_grads() beforehand.
template <typename F>
BatchLoss edit_weighted_mle_loss(Seq2SeqModelT<F>& model, const std::vector<EncodedPair>& corpus,
                                 const std::vector<size_t>& batch, uint64_t step_seed,
                                 bool training, int threads = 1) {
  return detail::batch_nll(model, corpus, batch, step_seed, training, threads, true);
}

// Plain MLE: identical computation with unit weights.
template <typename F>
BatchLoss mle_loss(Seq2SeqModelT<F>& model, const std::vector<EncodedPair>& corpus,
                   const std::vector<size_t>& batch, uint64_t step_seed, bool training,
                   int threads = 1) {
  return detail::batch_nll(model, corpus, batch, step_seed, training, threads, false);
}

}  // namespace gec
