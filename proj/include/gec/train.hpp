#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "gec/checkpoint.hpp"
#include "gec/loss.hpp"
#include "gec/model.hpp"

namespace gec {

enum class LrSchedule { kConstant, kWarmupInvSqrt };

// base * min(step/warmup, sqrt(warmup/step)); continuous at step == warmup.
inline double lr_at(double base, LrSchedule schedule, uint64_t step, uint64_t warmup_steps) {
  if (schedule == LrSchedule::kConstant) return base;
  double s = static_cast<double>(std::max<uint64_t>(step, 1));
  double w = static_cast<double>(std::max<uint64_t>(warmup_steps, 1));
  return base * std::min(s / w, std::sqrt(w / s));
}

struct TrainConfig {
  double lr = 3e-4;
  LrSchedule schedule = LrSchedule::kConstant;
  uint64_t warmup_steps = 16000;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 1.0;  // 0 disables
  int patience = 10;
  uint64_t checkpoint_every = 10000;  // batches between validations/checkpoints
  int keep_best_k = 8;
  double Lambda = 1.0;  // recorded for provenance; weights live on the pairs
  uint64_t seed = 1;

  size_t batch_tokens = 0;  // 0 -> budget targeting ~200 sentences per batch
  int max_epochs = 50;
  uint64_t max_steps = 0;  // 0 -> unlimited
  int threads = 1;
  double max_seconds = 0.0;  // 0 -> unlimited wall-clock budget
};

template <typename F>
struct AdamStateT {
  std::map<std::string, TensorT<F>> m, v;
  uint64_t t = 0;
};
using AdamState = AdamStateT<float>;

// Standard Adam with bias correction. Zero gradients with zero state leave
// parameters unchanged.
template <typename F>
void adam_step(ParamStoreT<F>& store, AdamStateT<F>& state, double lr, double beta1,
               double beta2, double eps) {
  state.t += 1;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (auto& [name, p] : store.params) {
    auto git = store.grads.find(name);
    if (git == store.grads.end()) continue;
    const auto& g = git->second;
    auto& m = state.m.try_emplace(name, TensorT<F>::zeros(p.rows(), p.cols())).first->second;
    auto& v = state.v.try_emplace(name, TensorT<F>::zeros(p.rows(), p.cols())).first->second;
    for (size_t i = 0; i < p.data.size(); ++i) {
      double gi = static_cast<double>(g.data[i]);
      double mi = beta1 * static_cast<double>(m.data[i]) + (1.0 - beta1) * gi;
      double vi = beta2 * static_cast<double>(v.data[i]) + (1.0 - beta2) * gi * gi;
      m.data[i] = static_cast<F>(mi);
      v.data[i] = static_cast<F>(vi);
      p.data[i] -= static_cast<F>(lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps));
    }
  }
}

// Global-norm gradient clipping; returns the pre-clip norm.
template <typename F>
double clip_gradients(ParamStoreT<F>& store, double max_norm) {
  double sq = 0.0;
  for (const auto& [_, g] : store.grads)
    for (F v : g.data) sq += static_cast<double>(v) * static_cast<double>(v);
  double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    F scale = static_cast<F>(max_norm / norm);
    for (auto& [_, g] : store.grads)
      for (F& v : g.data) v *= scale;
  }
  return norm;
}

// Stops after `patience` consecutive validations without improvement.
class EarlyStopper {
public:
  explicit EarlyStopper(int patience) : patience_(patience) {}

  // feed one validation loss; returns true when training should stop
  bool update(double dev_loss) {
    if (dev_loss < best_) {
      best_ = dev_loss;
      bad_ = 0;
    } else {
      ++bad_;
    }
    return bad_ >= patience_;
  }

  int consecutive_bad() const { return bad_; }
  double best() const { return best_; }

private:
  int patience_;
  int bad_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

// Retains the k best checkpoints by dev metric (higher is better; ties keep
// the earlier checkpoint).
class CheckpointKeeper {
public:
  explicit CheckpointKeeper(int k) : k_(k) {}

  void offer(double metric, Checkpoint ckpt);
  const std::vector<std::pair<double, Checkpoint>>& best() const { return kept_; }
  std::vector<Checkpoint> checkpoints() const;

private:
  int k_;
  std::vector<std::pair<double, Checkpoint>> kept_;  // sorted desc by metric
};

struct TrainLogEntry {
  uint64_t step = 0;
  double lr = 0.0;
  double train_loss = 0.0;  // per-token, running mean since last validation
  double dev_loss = 0.0;    // per-token cross-entropy
  double dev_metric = 0.0;
};

struct TrainResult {
  std::vector<Checkpoint> best;  // by dev metric, best first
  std::vector<TrainLogEntry> log;
  uint64_t steps = 0;
  bool early_stopped = false;
};

// Dev decode metric used to rank checkpoints (dev cross-entropy drives the
// early stopping, exactly the split the training procedure prescribes).
using DevMetricFn = std::function<double(Seq2SeqModelF&)>;

TrainResult train(Seq2SeqModelF& model, const std::vector<EncodedPair>& corpus,
                  const std::vector<EncodedPair>& dev, const TrainConfig& cfg,
                  const DevMetricFn& dev_metric = nullptr, const std::string& log_path = "");

struct LmTrainTrace {
  std::vector<double> epoch_perplexity;
};

// Next-token MLE over the monolingual corpus, in place.
void train_decoder_lm(DecoderLmF& lm, const std::vector<std::vector<int>>& mono,
                      uint64_t seed, int epochs = 2, double lr = 3e-4,
                      size_t batch_sentences = 64, int threads = 1,
                      LmTrainTrace* trace = nullptr);

DecoderLmF pretrain_decoder_lm(const std::vector<std::vector<int>>& mono, const ModelConfig& cfg,
                               uint64_t seed, int epochs = 2, double lr = 3e-4,
                               size_t batch_sentences = 64, int threads = 1,
                               LmTrainTrace* trace = nullptr);

// Per-token dev cross-entropy (no dropout).
double dev_cross_entropy(Seq2SeqModelF& model, const std::vector<EncodedPair>& dev, int threads = 1);

}  // namespace gec
