#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "gec/align.hpp"
#include "gec/checkpoint.hpp"
#include "gec/synth.hpp"
#include "gec/train.hpp"
#include "gec/vocab.hpp"

using namespace gec;

namespace {

ModelConfig tiny_config(int vocab, int emb = 8, int rnn = 8) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.emb_dim = emb;
  c.rnn_dim = rnn;
  c.p_dropout_rnn = 0.0;
  c.max_len = 24;
  return c;
}

std::vector<EncodedPair> encode_corpus(const Corpus& corpus, const Vocab& vocab,
                                       double Lambda = 1.0) {
  std::vector<EncodedPair> out;
  for (const auto& p : corpus) {
    EncodedPair e;
    e.src = vocab.encode(p.src);
    e.trg = vocab.encode(p.trg);
    if (Lambda > 1.0) {
      Alignment a = levenshtein_align(p.src, p.trg);
      e.lambda = edit_weights(a, p.src, p.trg, Lambda).lambda;
    }
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace

TEST_CASE("uniform model has per-token loss ln V") {
  // zeroed parameters produce a uniform distribution over V
  ModelConfig cfg = tiny_config(12);
  auto model = Seq2SeqModelF::init(cfg, 1);
  for (auto& [name, t] : model.store.params)
    std::fill(t.data.begin(), t.data.end(), 0.f);
  std::vector<EncodedPair> corpus{{{4, 5}, {4, 5}, {}}, {{6}, {6, 7}, {}}};
  std::vector<size_t> all{0, 1};
  BatchLoss l = mle_loss(model, corpus, all, 0, false);
  CHECK(l.per_token() == doctest::Approx(std::log(12.0)).epsilon(1e-6));
}

TEST_CASE("edit-weighted loss with unit weights equals plain MLE bitwise") {
  ModelConfig cfg = tiny_config(14);
  auto model = Seq2SeqModelF::init(cfg, 5);
  SplitRng rng(3, "batches");
  std::vector<EncodedPair> corpus;
  for (int i = 0; i < 20; ++i) {
    EncodedPair e;
    size_t ls = 1 + rng.uniform_int(5), lt = 1 + rng.uniform_int(5);
    for (size_t k = 0; k < ls; ++k) e.src.push_back(4 + static_cast<int>(rng.uniform_int(10)));
    for (size_t k = 0; k < lt; ++k) e.trg.push_back(4 + static_cast<int>(rng.uniform_int(10)));
    e.lambda.assign(e.trg.size(), 1.0);  // explicit unit weights
    corpus.push_back(std::move(e));
  }
  std::vector<size_t> batch(corpus.size());
  std::iota(batch.begin(), batch.end(), 0);

  BatchLoss weighted = edit_weighted_mle_loss(model, corpus, batch, 9, false);
  BatchLoss plain = mle_loss(model, corpus, batch, 9, false);
  CHECK(weighted.loss_sum == plain.loss_sum);  // bitwise
}

TEST_CASE("single-edit sentence at Lambda=3 adds twice the edited position's loss") {
  ModelConfig cfg = tiny_config(14);
  auto model = Seq2SeqModelF::init(cfg, 8);
  EncodedPair plain{{4, 5, 6}, {4, 9, 6}, {}};
  EncodedPair weighted = plain;
  weighted.lambda = {1.0, 3.0, 1.0};  // position 1 is the edit

  std::vector<double> step_logprobs;
  GraphT<float> g;
  model.build_loss(g, plain.src, plain.trg, nullptr, SplitRng(0, "x"), false, &step_logprobs);

  std::vector<EncodedPair> corpus{plain, weighted};
  BatchLoss base = edit_weighted_mle_loss(model, corpus, {0}, 0, false);
  BatchLoss up = edit_weighted_mle_loss(model, corpus, {1}, 0, false);
  double expected = base.loss_sum + 2.0 * (-step_logprobs[1]);
  CHECK(up.loss_sum == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("edit-weighted loss is non-decreasing in Lambda on a fixed batch") {
  Corpus raw = generate_synthetic(4, 40, 30, CorruptionSpec{0.3, 0.3, 0.1, 0.3});
  Vocab vocab;
  for (const auto& p : raw) {
    for (const auto& t : p.src) vocab.add(t);
    for (const auto& t : p.trg) vocab.add(t);
  }
  ModelConfig cfg = tiny_config(vocab.size());
  auto model = Seq2SeqModelF::init(cfg, 2);
  double prev = -1.0;
  for (double L : {1.0, 3.0, 5.0}) {  // tested Lambda grid
    auto enc = encode_corpus(raw, vocab, L);
    std::vector<size_t> all(enc.size());
    std::iota(all.begin(), all.end(), 0);
    BatchLoss l = edit_weighted_mle_loss(model, enc, all, 0, false);
    CHECK(l.loss_sum > prev);
    prev = l.loss_sum;
  }
}

TEST_CASE("loss gradients match between threaded shards and single thread") {
  ModelConfig cfg = tiny_config(14);
  auto model = Seq2SeqModelF::init(cfg, 5);
  SplitRng rng(31, "t");
  std::vector<EncodedPair> corpus;
  for (int i = 0; i < 12; ++i) {
    EncodedPair e;
    for (int k = 0; k < 4; ++k) e.src.push_back(4 + static_cast<int>(rng.uniform_int(10)));
    for (int k = 0; k < 4; ++k) e.trg.push_back(4 + static_cast<int>(rng.uniform_int(10)));
    corpus.push_back(std::move(e));
  }
  std::vector<size_t> batch(corpus.size());
  std::iota(batch.begin(), batch.end(), 0);

  model.store.zero_grads();
  BatchLoss a = mle_loss(model, corpus, batch, 7, true, 1);
  auto g1 = model.store.grads;
  model.store.zero_grads();
  BatchLoss b = mle_loss(model, corpus, batch, 7, true, 4);
  CHECK(a.loss_sum == b.loss_sum);  // losses reduce in sentence order
  for (const auto& [name, t] : g1) {
    const auto& t2 = model.store.grads.at(name);
    for (size_t i = 0; i < t.data.size(); ++i)
      CHECK(t.data[i] == doctest::Approx(t2.data[i]).epsilon(1e-5));
  }
}

TEST_CASE("lr schedule: constant and warmup inverse sqrt") {
  CHECK(lr_at(3e-4, LrSchedule::kConstant, 123456, 16000) == 3e-4);
  CHECK(lr_at(3e-4, LrSchedule::kWarmupInvSqrt, 4000, 16000) ==
        doctest::Approx(3e-4 * 4000.0 / 16000.0));
  // continuity at the warmup boundary
  double at = lr_at(3e-4, LrSchedule::kWarmupInvSqrt, 16000, 16000);
  double before = lr_at(3e-4, LrSchedule::kWarmupInvSqrt, 15999, 16000);
  double after = lr_at(3e-4, LrSchedule::kWarmupInvSqrt, 16001, 16000);
  CHECK(at == doctest::Approx(3e-4));
  CHECK(std::fabs(before - at) < 1e-7);
  CHECK(std::fabs(after - at) < 1e-7);
  CHECK(lr_at(3e-4, LrSchedule::kWarmupInvSqrt, 64000, 16000) == doctest::Approx(3e-4 / 2.0));
}

TEST_CASE("adam: zero gradients from zero state leave parameters unchanged") {
  ParamStoreT<float> store;
  store.seed = 1;
  store.add_glorot("w", 3, 3);
  TensorF before = store.at("w");
  store.zero_grads();
  AdamState state;
  adam_step(store, state, 1e-3, 0.9, 0.999, 1e-8);
  CHECK(store.at("w").data == before.data);
}

TEST_CASE("adam drives a quadratic to its optimum") {
  // f(w) = 0.5 * (w - 3)^2, gradient w - 3
  ParamStoreT<float> store;
  store.add("w", TensorF::full(1, 1, 10.f));
  AdamState state;
  for (int step = 0; step < 500; ++step) {
    store.grads.clear();
    store.grads.emplace("w", TensorF::full(1, 1, store.at("w").data[0] - 3.f));
    adam_step(store, state, 0.05, 0.9, 0.999, 1e-8);
  }
  CHECK(std::fabs(store.at("w").data[0] - 3.f) < 1e-3);
}

TEST_CASE("early stopper fires after exactly `patience` non-improvements") {
  EarlyStopper s(3);
  CHECK_FALSE(s.update(5.0));
  CHECK_FALSE(s.update(4.0));  // improvement resets
  CHECK_FALSE(s.update(4.5));
  CHECK_FALSE(s.update(4.4));
  CHECK(s.update(4.3));  // third consecutive non-improvement

  // strictly improving never stops
  EarlyStopper t(2);
  double loss = 10.0;
  for (int i = 0; i < 50; ++i) {
    CHECK_FALSE(t.update(loss));
    loss -= 0.1;
  }

  // plateau injected after validation k stops at validation k + patience
  for (int patience : {1, 2, 5, 10}) {
    EarlyStopper u(patience);
    const int k = 4;
    int stop_at = -1;
    for (int v = 0; v < 100 && stop_at < 0; ++v) {
      double dev = v <= k ? 10.0 - v : 10.0 - k;  // last improvement at v == k
      if (u.update(dev)) stop_at = v;
    }
    CHECK(stop_at == k + patience);
  }
}

TEST_CASE("checkpoint keeper retains the best k by metric") {
  CheckpointKeeper keeper(3);
  for (double m : {0.1, 0.5, 0.3, 0.9, 0.2}) {
    Checkpoint c;
    c.step = static_cast<uint64_t>(m * 100);
    keeper.offer(m, c);
  }
  auto best = keeper.best();
  REQUIRE(best.size() == 3);
  CHECK(best[0].first == 0.9);
  CHECK(best[1].first == 0.5);
  CHECK(best[2].first == 0.3);
}

TEST_CASE("checkpoint files round-trip bit-exactly") {
  ModelConfig cfg = tiny_config(10, 6, 6);
  auto model = Seq2SeqModelF::init(cfg, 77);
  Checkpoint c = checkpoint_of(model);
  c.step = 1234;
  c.dev_loss = 1.5;
  c.dev_metric = 0.42;
  c.config_hash = "cafebabe";

  auto path = std::filesystem::temp_directory_path() / "gec_test.ckpt";
  save_checkpoint(path.string(), c);
  Checkpoint loaded = load_checkpoint(path.string());
  CHECK(loaded.step == c.step);
  CHECK(loaded.dev_loss == c.dev_loss);
  CHECK(loaded.dev_metric == c.dev_metric);
  CHECK(loaded.config_hash == c.config_hash);
  CHECK(loaded.kind == "seq2seq");
  CHECK(loaded.model_config.vocab_size == cfg.vocab_size);
  REQUIRE(loaded.tensors.size() == c.tensors.size());
  for (const auto& [name, t] : c.tensors) CHECK(loaded.tensors.at(name).data == t.data);

  std::ifstream in(path, std::ios::binary);
  char magic[4];
  in.read(magic, 4);
  CHECK(std::string(magic, 4) == "GECF");
  std::filesystem::remove(path);

  auto restored = model_from_checkpoint(loaded);
  for (const auto& [name, t] : model.store.params)
    CHECK(restored.store.at(name).data == t.data);
}

TEST_CASE("average_checkpoints is the element-wise mean") {
  ModelConfig cfg = tiny_config(8, 4, 4);
  auto m0 = Seq2SeqModelF::init(cfg, 1);
  Checkpoint a = checkpoint_of(m0);
  Checkpoint b = a;
  for (auto& [name, t] : a.tensors) std::fill(t.data.begin(), t.data.end(), 0.f);
  for (auto& [name, t] : b.tensors) std::fill(t.data.begin(), t.data.end(), 2.f);
  Checkpoint avg = average_checkpoints({a, b});
  for (const auto& [name, t] : avg.tensors)
    for (float v : t.data) CHECK(v == 1.f);
  CHECK(avg.sources.size() == 2);

  // k identical checkpoints average to themselves
  Checkpoint c = checkpoint_of(m0);
  Checkpoint avg8 = average_checkpoints(std::vector<Checkpoint>(8, c));
  for (const auto& [name, t] : avg8.tensors) {
    const auto& orig = c.tensors.at(name);
    for (size_t i = 0; i < t.data.size(); ++i)
      CHECK(t.data[i] == doctest::Approx(orig.data[i]).epsilon(1e-7));
  }

  Checkpoint broken = c;
  broken.tensors.erase(broken.tensors.begin());
  CHECK_THROWS(average_checkpoints({c, broken}));
}

TEST_CASE("train loop runs, logs, validates and keeps checkpoints") {
  Corpus raw = generate_synthetic(11, 40, 200, CorruptionSpec::for_rate(0.15, 40, "general"));
  Vocab vocab;
  for (const auto& p : raw) {
    for (const auto& t : p.src) vocab.add(t);
    for (const auto& t : p.trg) vocab.add(t);
  }
  auto corpus = encode_corpus(raw, vocab);
  std::vector<EncodedPair> dev(corpus.begin(), corpus.begin() + 30);

  ModelConfig cfg = tiny_config(vocab.size(), 12, 12);
  auto model = Seq2SeqModelF::init(cfg, 3);
  TrainConfig tc;
  tc.lr = 3e-3;
  tc.checkpoint_every = 5;
  tc.patience = 10;
  tc.keep_best_k = 3;
  tc.max_epochs = 3;
  tc.batch_tokens = 128;
  auto log_path = std::filesystem::temp_directory_path() / "gec_train_log.tsv";
  TrainResult res = train(model, corpus, dev, tc, nullptr, log_path.string());
  CHECK(res.steps > 0);
  CHECK(!res.best.empty());
  CHECK(res.best.size() <= 3);
  CHECK(!res.log.empty());
  std::ifstream in(log_path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "step\tlr\ttrain_loss\tdev_loss\tdev_metric");
  std::filesystem::remove(log_path);

  // the best checkpoint beats the initial model on dev cross-entropy
  auto fresh = Seq2SeqModelF::init(cfg, 3);
  double before = dev_cross_entropy(fresh, dev);
  auto best = model_from_checkpoint(res.best.front());
  CHECK(dev_cross_entropy(best, dev) < before);
}

TEST_CASE("train rejects an empty dev set") {
  ModelConfig cfg = tiny_config(10);
  auto model = Seq2SeqModelF::init(cfg, 1);
  std::vector<EncodedPair> corpus{{{4}, {4}, {}}};
  CHECK_THROWS(train(model, corpus, {}, TrainConfig{}));
}

TEST_CASE("LM pretraining lowers perplexity and defaults to two epochs") {
  SplitRng rng(13, "lm-data");
  std::vector<std::vector<int>> mono;
  for (int i = 0; i < 150; ++i) {
    std::vector<int> ids;
    int len = 3 + static_cast<int>(rng.uniform_int(5));
    int start = 4 + static_cast<int>(rng.uniform_int(4));
    for (int k = 0; k < len; ++k) ids.push_back(4 + (start + k) % 10);  // predictable runs
    mono.push_back(ids);
  }
  ModelConfig cfg = tiny_config(14, 8, 8);
  LmTrainTrace trace;
  DecoderLmF lm = pretrain_decoder_lm(mono, cfg, 5, /*epochs=*/2, 3e-3, 16, 1, &trace);
  REQUIRE(trace.epoch_perplexity.size() == 2);
  CHECK(trace.epoch_perplexity[1] < trace.epoch_perplexity[0]);
  CHECK(trace.epoch_perplexity[1] < 14.0);  // well under uniform

  Checkpoint c = checkpoint_of_lm(lm);
  CHECK(c.kind == "lm");
  CHECK(c.tensors.size() == DecoderLmF::param_names().size());
  auto restored = lm_from_checkpoint(c);
  for (const auto& [name, t] : lm.store.params)
    CHECK(restored.store.at(name).data == t.data);
}
