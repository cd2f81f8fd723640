#include "gec/train.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <numeric>

#include "gec/corpus.hpp"
#include "gec/rng.hpp"

namespace gec {

namespace {

std::vector<std::vector<size_t>> length_batches(const std::vector<EncodedPair>& corpus,
                                                size_t target_tokens, uint64_t epoch_seed) {
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
    if (!cur.empty() && cur_tokens + toks > target_tokens) {
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

size_t default_budget(const std::vector<EncodedPair>& corpus, size_t n_sentences) {
  if (corpus.empty()) return n_sentences;
  size_t total = 0;
  for (const auto& p : corpus) total += p.trg.size();
  return static_cast<size_t>(static_cast<double>(total) / corpus.size() * n_sentences + 0.5);
}

}  // namespace

void CheckpointKeeper::offer(double metric, Checkpoint ckpt) {
  ckpt.dev_metric = metric;
  auto pos = std::find_if(kept_.begin(), kept_.end(),
                          [&](const auto& e) { return metric > e.first; });
  kept_.insert(pos, {metric, std::move(ckpt)});
  if (static_cast<int>(kept_.size()) > k_) kept_.resize(static_cast<size_t>(k_));
}

std::vector<Checkpoint> CheckpointKeeper::checkpoints() const {
  std::vector<Checkpoint> out;
  out.reserve(kept_.size());
  for (const auto& [_, c] : kept_) out.push_back(c);
  return out;
}

double dev_cross_entropy(Seq2SeqModelF& model, const std::vector<EncodedPair>& dev, int threads) {
  std::vector<size_t> all(dev.size());
  std::iota(all.begin(), all.end(), 0);
  BatchLoss l = mle_loss(model, dev, all, /*step_seed=*/0, /*training=*/false, threads);
  return l.per_token();
}

TrainResult train(Seq2SeqModelF& model, const std::vector<EncodedPair>& corpus,
                  const std::vector<EncodedPair>& dev, const TrainConfig& cfg,
                  const DevMetricFn& dev_metric, const std::string& log_path) {
  if (dev.empty()) throw std::invalid_argument("train: dev set must be non-empty");
  if (corpus.empty()) throw std::invalid_argument("train: empty training corpus");

  size_t budget = cfg.batch_tokens ? cfg.batch_tokens : default_budget(corpus, 200);
  AdamState adam;
  EarlyStopper stopper(cfg.patience);
  CheckpointKeeper keeper(cfg.keep_best_k);
  TrainResult result;

  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path);
    log << "step\tlr\ttrain_loss\tdev_loss\tdev_metric\n";
  }

  auto t0 = std::chrono::steady_clock::now();
  auto out_of_budget = [&] {
    if (cfg.max_seconds <= 0) return false;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() >=
           cfg.max_seconds;
  };

  uint64_t step = 0;
  double run_loss = 0.0;
  size_t run_tokens = 0;
  bool done = false;

  auto validate = [&] {
    double dl = dev_cross_entropy(model, dev, cfg.threads);
    double dm = dev_metric ? dev_metric(model) : -dl;
    Checkpoint ckpt = checkpoint_of(model);
    ckpt.step = step;
    ckpt.dev_loss = dl;
    keeper.offer(dm, std::move(ckpt));
    TrainLogEntry e{step, lr_at(cfg.lr, cfg.schedule, step, cfg.warmup_steps),
                    run_tokens ? run_loss / run_tokens : 0.0, dl, dm};
    result.log.push_back(e);
    if (log)
      log << e.step << '\t' << e.lr << '\t' << e.train_loss << '\t' << e.dev_loss << '\t'
          << e.dev_metric << '\n';
    run_loss = 0.0;
    run_tokens = 0;
    return stopper.update(dl);
  };

  for (int epoch = 0; epoch < cfg.max_epochs && !done; ++epoch) {
    auto batches = length_batches(corpus, budget, cfg.seed + static_cast<uint64_t>(epoch));
    for (const auto& batch : batches) {
      ++step;
      model.store.zero_grads();
      BatchLoss l = edit_weighted_mle_loss(model, corpus, batch, cfg.seed ^ (step * 0x9e37u),
                                           /*training=*/true, cfg.threads);
      if (!std::isfinite(l.loss_sum))
        throw std::runtime_error("train: non-finite loss at step " + std::to_string(step) +
                                 " (per-token " + std::to_string(l.per_token()) + ")");
      clip_gradients(model.store, cfg.clip_norm);
      adam_step(model.store, adam, lr_at(cfg.lr, cfg.schedule, step, cfg.warmup_steps),
                cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
      run_loss += l.loss_sum;
      run_tokens += l.target_tokens;

      if (step % cfg.checkpoint_every == 0 && validate()) {
        result.early_stopped = true;
        done = true;
        break;
      }
      if ((cfg.max_steps && step >= cfg.max_steps) || out_of_budget()) {
        done = true;
        break;
      }
    }
  }
  if (!result.early_stopped && (step % cfg.checkpoint_every != 0 || step == 0)) validate();

  result.best = keeper.checkpoints();
  result.steps = step;
  return result;
}

void train_decoder_lm(DecoderLmF& lm, const std::vector<std::vector<int>>& mono, uint64_t seed,
                      int epochs, double lr, size_t batch_sentences, int threads,
                      LmTrainTrace* trace) {
  AdamStateT<float> adam;
  uint64_t step = 0;

  std::vector<size_t> order(mono.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < epochs; ++epoch) {
    SplitRng shuffle(seed, "lm-epoch", static_cast<uint64_t>(epoch));
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle.uniform_int(i)]);

    double epoch_nll = 0.0;
    size_t epoch_tokens = 0;
    for (size_t start = 0; start < order.size(); start += batch_sentences) {
      size_t end = std::min(order.size(), start + batch_sentences);
      ++step;
      lm.store.zero_grads();

      std::vector<double> losses(end - start, 0.0);
      std::vector<size_t> tokens(end - start, 0);
      auto run_range = [&](size_t lo, size_t hi, std::map<std::string, TensorF>* grads) {
        for (size_t k = lo; k < hi; ++k) {
          const auto& ids = mono[order[start + k]];
          if (ids.empty()) continue;
          GraphT<float> g;
          SplitRng rng(seed, "lm-sent", order[start + k] ^ (step << 24));
          auto* loss = lm.build_loss(g, ids, rng, /*training=*/true);
          losses[k] = static_cast<double>(loss->val().data[0]);
          tokens[k] = ids.size() + 1;
          g.backward(loss);
          g.accumulate_param_grads(*grads);
        }
      };
      int T = std::max(1, threads);
      if (T == 1) {
        run_range(0, end - start, &lm.store.grads);
      } else {
        size_t n = end - start;
        T = static_cast<int>(std::min<size_t>(static_cast<size_t>(T), std::max<size_t>(n, 1)));
        std::vector<std::map<std::string, TensorF>> shards(static_cast<size_t>(T));
        std::vector<std::thread> pool;
        for (int t = 0; t < T; ++t) {
          size_t lo = n * static_cast<size_t>(t) / static_cast<size_t>(T);
          size_t hi = n * static_cast<size_t>(t + 1) / static_cast<size_t>(T);
          pool.emplace_back(run_range, lo, hi, &shards[static_cast<size_t>(t)]);
        }
        for (auto& th : pool) th.join();
        for (auto& shard : shards)
          for (auto& [name, gt] : shard) {
            auto it = lm.store.grads.find(name);
            if (it == lm.store.grads.end())
              it = lm.store.grads.emplace(name, TensorF::zeros(gt.rows(), gt.cols())).first;
            for (size_t i = 0; i < gt.data.size(); ++i) it->second.data[i] += gt.data[i];
          }
      }
      for (size_t k = 0; k < losses.size(); ++k) {
        epoch_nll += losses[k];
        epoch_tokens += tokens[k];
      }
      clip_gradients(lm.store, 1.0);
      adam_step(lm.store, adam, lr, 0.9, 0.999, 1e-8);
    }
    if (trace && epoch_tokens)
      trace->epoch_perplexity.push_back(std::exp(epoch_nll / static_cast<double>(epoch_tokens)));
  }
}

DecoderLmF pretrain_decoder_lm(const std::vector<std::vector<int>>& mono, const ModelConfig& cfg,
                               uint64_t seed, int epochs, double lr, size_t batch_sentences,
                               int threads, LmTrainTrace* trace) {
  DecoderLmF lm = DecoderLmF::init(cfg, seed);
  train_decoder_lm(lm, mono, seed, epochs, lr, batch_sentences, threads, trace);
  return lm;
}

}  // namespace gec
