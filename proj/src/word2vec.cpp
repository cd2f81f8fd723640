#include "gec/word2vec.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gec/rng.hpp"

namespace gec {

namespace {

inline float fast_sigmoid(float x) {
  if (x >= 0.f) return 1.f / (1.f + std::exp(-x));
  float e = std::exp(x);
  return e / (1.f + e);
}

}  // namespace

TensorF pretrain_embeddings(const std::vector<std::vector<int>>& corpus, int vocab_size,
                            const Word2VecConfig& cfg) {
  if (vocab_size < 1) throw std::invalid_argument("pretrain_embeddings: bad vocab size");
  size_t total_tokens = 0;
  for (const auto& s : corpus) total_tokens += s.size();
  if (total_tokens == 0) throw std::invalid_argument("pretrain_embeddings: empty corpus");

  SplitRng init_rng(cfg.seed, "w2v-init");
  TensorF in(vocab_size, cfg.dim);
  for (auto& v : in.data)
    v = static_cast<float>(init_rng.uniform(-0.5, 0.5) / cfg.dim);
  TensorF out = TensorF::zeros(vocab_size, cfg.dim);

  // unigram^0.75 negative-sampling table
  std::vector<int64_t> freq(vocab_size, 0);
  for (const auto& s : corpus)
    for (int id : s)
      if (id >= 0 && id < vocab_size) freq[static_cast<size_t>(id)]++;
  std::vector<double> cum(vocab_size, 0.0);
  double z = 0.0;
  for (int w = 0; w < vocab_size; ++w) {
    z += std::pow(static_cast<double>(freq[static_cast<size_t>(w)]), 0.75);
    cum[static_cast<size_t>(w)] = z;
  }
  if (z <= 0.0) throw std::invalid_argument("pretrain_embeddings: empty vocabulary");
  auto sample_negative = [&](SplitRng& rng) {
    double u = rng.uniform() * z;
    return static_cast<int>(std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
  };

  std::vector<float> grad_center(static_cast<size_t>(cfg.dim));
  const size_t total_steps = static_cast<size_t>(cfg.epochs) * total_tokens;
  size_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (size_t si = 0; si < corpus.size(); ++si) {
      const auto& sent = corpus[si];
      SplitRng rng(cfg.seed, "w2v-train", (static_cast<uint64_t>(epoch) << 32) | si);
      for (size_t pos = 0; pos < sent.size(); ++pos, ++step) {
        float lr = static_cast<float>(
            cfg.lr * std::max(1.0 - static_cast<double>(step) / total_steps, 1e-4));
        int center = sent[pos];
        if (center < 0 || center >= vocab_size) continue;
        int reach = 1 + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(cfg.window)));
        for (int off = -reach; off <= reach; ++off) {
          if (off == 0) continue;
          int64_t cpos = static_cast<int64_t>(pos) + off;
          if (cpos < 0 || cpos >= static_cast<int64_t>(sent.size())) continue;
          int ctx = sent[static_cast<size_t>(cpos)];
          if (ctx < 0 || ctx >= vocab_size) continue;

          float* vin = &in.data[static_cast<size_t>(center) * cfg.dim];
          std::fill(grad_center.begin(), grad_center.end(), 0.f);
          for (int k = 0; k <= cfg.negatives; ++k) {
            int target = k == 0 ? ctx : sample_negative(rng);
            float label = k == 0 ? 1.f : 0.f;
            if (k > 0 && target == ctx) continue;
            float* vout = &out.data[static_cast<size_t>(target) * cfg.dim];
            float dot = 0.f;
            for (int d = 0; d < cfg.dim; ++d) dot += vin[d] * vout[d];
            float err = (label - fast_sigmoid(dot)) * lr;
            for (int d = 0; d < cfg.dim; ++d) {
              grad_center[static_cast<size_t>(d)] += err * vout[d];
              vout[d] += err * vin[d];
            }
          }
          for (int d = 0; d < cfg.dim; ++d) vin[d] += grad_center[static_cast<size_t>(d)];
        }
      }
    }
  }
  return in;
}

}  // namespace gec
