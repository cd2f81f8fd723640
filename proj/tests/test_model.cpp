#include <doctest.h>

#include <cmath>
#include <set>

#include "gec/model.hpp"
#include "gec/word2vec.hpp"
#include "gradcheck.hpp"

using namespace gec;
using gec::testing::check_gradients;

namespace {

ModelConfig tiny_config(int vocab = 9, int emb = 4, int rnn = 5, bool tied = true) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.emb_dim = emb;
  c.rnn_dim = rnn;
  c.p_dropout_rnn = 0.0;
  c.p_src = 0.0;
  c.tied = tied;
  c.max_len = 16;
  return c;
}

std::vector<int> rand_ids(SplitRng& rng, size_t len, int vocab) {
  std::vector<int> ids;
  for (size_t i = 0; i < len; ++i)
    ids.push_back(4 + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(vocab - 4))));
  return ids;
}

}  // namespace

TEST_CASE("encode produces the contracted shapes") {
  auto model = Seq2SeqModelT<double>::init(tiny_config(), 7);
  auto ctx = model.encode({4, 5, 6});
  CHECK(ctx.annotations.rows() == 4);  // + eos
  CHECK(ctx.annotations.cols() == 2 * model.cfg.rnn_dim);
  CHECK(ctx.init_state.rows() == 1);
  CHECK(ctx.init_state.cols() == model.cfg.rnn_dim);
  CHECK_THROWS(model.encode({}));
  CHECK_THROWS(model.encode({1000}));
}

TEST_CASE("encode is deterministic") {
  auto model = Seq2SeqModelT<double>::init(tiny_config(), 7);
  auto a = model.encode({4, 5, 6, 7});
  auto b = model.encode({4, 5, 6, 7});
  CHECK(a.annotations.data == b.annotations.data);
  CHECK(a.init_state.data == b.init_state.data);
}

TEST_CASE("decode_step distributions normalize and attention sums to one") {
  auto model = Seq2SeqModelT<double>::init(tiny_config(), 3);
  auto ctx = model.encode({4, 5, 6});
  auto out = model.decode_step(ctx, ctx.init_state, kBosId);
  double z = 0.0;
  for (double lp : out.log_probs.data) z += std::exp(lp);
  CHECK(std::fabs(z - 1.0) < 1e-6);
  double az = 0.0;
  for (double a : out.att_weights.data) az += a;
  CHECK(std::fabs(az - 1.0) < 1e-6);
}

TEST_CASE("teacher-forced loss equals the sum of independent step log-probs") {
  auto model = Seq2SeqModelT<double>::init(tiny_config(), 11);
  std::vector<int> src{4, 7, 5}, trg{4, 8, 5};

  GraphT<double> g;
  std::vector<double> step_logprobs;
  auto* loss = model.build_loss(g, src, trg, nullptr, SplitRng(0, "t"), false, &step_logprobs);

  // independent recomputation through the value-level API
  auto ctx = model.encode(src);
  TensorD state = ctx.init_state;
  int prev = kBosId;
  double nll = 0.0;
  std::vector<int> steps = trg;
  steps.push_back(kEosId);
  for (size_t t = 0; t < steps.size(); ++t) {
    auto out = model.decode_step(ctx, state, prev);
    double lp = out.log_probs.data[static_cast<size_t>(steps[t])];
    CHECK(lp == doctest::Approx(step_logprobs[t]).epsilon(1e-12));
    nll -= lp;
    state = out.state;
    prev = steps[t];
  }
  CHECK(loss->val().data[0] == doctest::Approx(nll).epsilon(1e-10));
}

TEST_CASE("decoding is Markovian in the state") {
  auto model = Seq2SeqModelT<double>::init(tiny_config(), 13);
  auto ctx = model.encode({4, 5, 6, 7});
  auto s1 = model.decode_step(ctx, ctx.init_state, kBosId);
  auto s2 = model.decode_step(ctx, s1.state, 5);
  TensorD saved = s1.state;  // recompute from a saved copy
  auto s2b = model.decode_step(ctx, saved, 5);
  CHECK(s2.log_probs.data == s2b.log_probs.data);
  CHECK(s2.state.data == s2b.state.data);
}

TEST_CASE("full encoder-decoder gradients pass finite differences") {
  SplitRng rng(99, "model-fd");
  for (int trial = 0; trial < 6; ++trial) {
    int vocab = 7 + static_cast<int>(rng.uniform_int(4));
    int emb = 3 + static_cast<int>(rng.uniform_int(3));
    int rnn = 3 + static_cast<int>(rng.uniform_int(3));
    bool tied = rng.bernoulli(0.7);
    auto model =
        Seq2SeqModelT<double>::init(tiny_config(vocab, emb, rnn, tied), rng.next_u64());
    std::vector<int> src = rand_ids(rng, 1 + rng.uniform_int(3), vocab);
    std::vector<int> trg = rand_ids(rng, 1 + rng.uniform_int(3), vocab);
    std::vector<double> lambda(trg.size(), 1.0);
    if (!lambda.empty()) lambda[0] = 3.0;

    auto build = [&](GraphT<double>& g, ParamStoreT<double>&) {
      return model.build_loss(g, src, trg, &lambda, SplitRng(0, "fd"), false);
    };
    auto stats = check_gradients(model.store, build, 1e-5, 1e-4, 25, &rng);
    CAPTURE(trial);
    CAPTURE(stats.worst_at);
    CHECK(stats.worst < 1e-4);
  }
}

TEST_CASE("gradients flow correctly with dropout masks active") {
  // masks are a pure function of the fixed rng, so the loss stays
  // deterministic across FD evaluations
  SplitRng rng(17, "drop-fd");
  ModelConfig cfg = tiny_config(8, 3, 4);
  cfg.p_dropout_rnn = 0.3;
  cfg.p_src = 0.25;
  auto model = Seq2SeqModelT<double>::init(cfg, 3);
  std::vector<int> src{4, 5, 6}, trg{5, 6};
  auto build = [&](GraphT<double>& g, ParamStoreT<double>&) {
    return model.build_loss(g, src, trg, nullptr, SplitRng(42, "mask"), true);
  };
  auto stats = check_gradients(model.store, build, 1e-5, 1e-4, 20, &rng);
  CAPTURE(stats.worst_at);
  CHECK(stats.worst < 1e-4);
}

TEST_CASE("three-way tying eliminates two embedding matrices") {
  ModelConfig tied_cfg = tiny_config(20, 6, 5, true);
  ModelConfig untied_cfg = tiny_config(20, 6, 5, false);
  auto tied = Seq2SeqModelT<double>::init(tied_cfg, 1);
  auto untied = Seq2SeqModelT<double>::init(untied_cfg, 1);
  size_t v_e = static_cast<size_t>(tied_cfg.vocab_size) * tied_cfg.emb_dim;
  CHECK(untied.store.total_params() - tied.store.total_params() == 2 * v_e);
}

TEST_CASE("tied embedding gradient sums over its three uses") {
  auto model = Seq2SeqModelT<double>::init(tiny_config(8, 3, 4, true), 11);
  std::vector<int> src{4, 5}, trg{5, 6};
  auto build = [&](GraphT<double>& g, ParamStoreT<double>&) {
    return model.build_loss(g, src, trg, nullptr, SplitRng(0, "fd"), false);
  };
  model.store.zero_grads();
  {
    GraphT<double> g;
    auto* loss = build(g, model.store);
    g.backward(loss);
    g.accumulate_param_grads(model.store);
  }
  const auto& grad = model.store.grads.at("emb");
  auto eval = [&] {
    GraphT<double> g;
    return build(g, model.store)->val().data[0];
  };
  auto& E = model.store.at("emb");
  for (size_t i = 0; i < E.data.size(); ++i) {
    double saved = E.data[i];
    E.data[i] = saved + 1e-5;
    double f1 = eval();
    E.data[i] = saved - 1e-5;
    double f2 = eval();
    E.data[i] = saved;
    double fd = (f1 - f2) / 2e-5;
    CHECK(std::fabs(fd - grad.data[i]) /
              std::max({std::fabs(fd), std::fabs(grad.data[i]), 1e-2}) <
          1e-4);
  }
}

TEST_CASE("source_word_dropout basics") {
  GraphT<double> g;
  std::vector<NodeT<double>*> seq;
  for (int t = 0; t < 5; ++t) seq.push_back(g.input(TensorD::full(1, 3, 2.0)));
  SplitRng rng(3, "swd");

  auto ident = source_word_dropout(g, seq, 0.0, rng, true);
  CHECK(ident == seq);
  auto inference = source_word_dropout(g, seq, 0.5, rng, false);
  CHECK(inference == seq);

  auto dropped = source_word_dropout(g, seq, 0.4, rng.split("x"), true);
  for (auto* n : dropped) {
    double v = n->val().data[0];
    CHECK((v == 0.0 || v == doctest::Approx(2.0 / 0.6)));
    for (double u : n->val().data) CHECK(u == v);  // whole vector together
  }
}

TEST_CASE("source_word_dropout literal variant scales dropped vectors by 1/p") {
  GraphT<double> g;
  std::vector<NodeT<double>*> seq{g.input(TensorD::full(1, 2, 1.0))};
  bool saw_scaled = false, saw_kept = false;
  for (int i = 0; i < 200 && !(saw_scaled && saw_kept); ++i) {
    auto out = source_word_dropout(g, seq, 0.2, SplitRng(static_cast<uint64_t>(i), "lit"), true,
                                   /*literal=*/true);
    double v = out[0]->val().data[0];
    if (v == doctest::Approx(5.0)) saw_scaled = true;
    if (v == 1.0) saw_kept = true;
  }
  CHECK(saw_scaled);
  CHECK(saw_kept);
}

TEST_CASE("source_word_dropout empirical mean within 3 sigma") {
  const double p = 0.2, x = 1.5;
  const int N = 10000;
  double acc = 0.0;
  for (int i = 0; i < N; ++i) {
    GraphT<double> g;
    std::vector<NodeT<double>*> seq{g.input(TensorD::full(1, 1, x))};
    auto out =
        source_word_dropout(g, seq, p, SplitRng(777, "stat", static_cast<uint64_t>(i)), true);
    acc += out[0]->val().data[0];
  }
  double mean = acc / N;
  double sigma = x * std::sqrt(p / (1 - p)) / std::sqrt(static_cast<double>(N));
  CHECK(std::fabs(mean - x) < 3 * sigma);
}

TEST_CASE("decoder LM parameter names are a strict subset of the decoder's") {
  auto model = Seq2SeqModelF::init(tiny_config(12, 4, 5), 1);
  auto lm = DecoderLmF::init(tiny_config(12, 4, 5), 2);
  for (const auto& [name, t] : lm.store.params) {
    REQUIRE(model.store.has(name));
    CHECK(model.store.at(name).same_shape(t));
  }
  CHECK(lm.store.params.size() < model.store.params.size());
  CHECK(lm.store.params.size() == DecoderLmF::param_names().size());
}

TEST_CASE("LM distributions normalize") {
  auto lm = DecoderLmT<double>::init(tiny_config(10, 4, 5), 5);
  auto out = lm.value_step(lm.initial_state(), kBosId);
  double z = 0.0;
  for (double lp : out.log_probs.data) z += std::exp(lp);
  CHECK(std::fabs(z - 1.0) < 1e-6);
}

TEST_CASE("transfer copies exactly the LM parameter set") {
  ModelConfig cfg = tiny_config(14, 5, 6);
  auto lm = DecoderLmF::init(cfg, 21);
  auto model = Seq2SeqModelF::init(cfg, 22);
  TransferReport report = transfer_from_lm(lm.store, model);

  std::set<std::string> copied(report.copied.begin(), report.copied.end());
  std::set<std::string> lm_names;
  for (const auto& [n, _] : lm.store.params) lm_names.insert(n);
  CHECK(copied == lm_names);
  for (const auto& name : report.copied)
    CHECK(model.store.at(name).data == lm.store.at(name).data);
  for (const auto& name : report.random) CHECK(lm_names.count(name) == 0);
  CHECK(copied.size() + report.random.size() == model.store.params.size());
}

TEST_CASE("transfer shape mismatch is an error") {
  auto lm = DecoderLmF::init(tiny_config(14, 5, 6), 21);
  auto model = Seq2SeqModelF::init(tiny_config(14, 5, 7), 22);  // different rnn_dim
  CHECK_THROWS(transfer_from_lm(lm.store, model));
}

TEST_CASE("transferred decoder at zero context reproduces the LM") {
  ModelConfig cfg = tiny_config(16, 6, 7);
  auto lm = DecoderLmF::init(cfg, 31);
  auto model = Seq2SeqModelF::init(cfg, 32);
  transfer_from_lm(lm.store, model);

  std::vector<int> prefix{kBosId, 4, 9, 6, 12};
  TensorF lm_state = lm.initial_state();
  TensorF probe_state = lm.initial_state();
  for (size_t t = 0; t < prefix.size(); ++t) {
    auto lm_out = lm.value_step(lm_state, prefix[t]);
    auto probe_out = model.lm_mode_step(probe_state, prefix[t]);
    REQUIRE(lm_out.log_probs.numel() == probe_out.log_probs.numel());
    for (size_t i = 0; i < lm_out.log_probs.data.size(); ++i)
      CHECK(std::fabs(lm_out.log_probs.data[i] - probe_out.log_probs.data[i]) < 1e-5);
    lm_state = lm_out.state;
    probe_state = probe_out.state;
  }
}

TEST_CASE("LM loss gradients pass finite differences") {
  auto lm = DecoderLmT<double>::init(tiny_config(9, 4, 4), 8);
  std::vector<int> ids{4, 7, 5};
  auto build = [&](GraphT<double>& g, ParamStoreT<double>&) {
    return lm.build_loss(g, ids, SplitRng(0, "lm-fd"), false);
  };
  SplitRng rng(2, "lm");
  auto stats = check_gradients(lm.store, build, 1e-5, 1e-4, 30, &rng);
  CAPTURE(stats.worst_at);
  CHECK(stats.worst < 1e-4);
}

TEST_CASE("skip-gram embeddings pull co-occurring tokens together") {
  // tokens 4&5 always co-occur, 6&7 always co-occur
  std::vector<std::vector<int>> corpus;
  SplitRng rng(6, "w2v-corpus");
  for (int i = 0; i < 400; ++i) {
    if (rng.bernoulli(0.5))
      corpus.push_back({4, 5, 4, 5});
    else
      corpus.push_back({6, 7, 6, 7});
  }
  Word2VecConfig cfg;
  cfg.dim = 16;
  cfg.epochs = 3;
  cfg.window = 2;
  cfg.negatives = 4;
  cfg.seed = 9;
  TensorF E = pretrain_embeddings(corpus, 8, cfg);
  REQUIRE(E.rows() == 8);

  auto cosine = [&](int a, int b) {
    double dot = 0, na = 0, nb = 0;
    for (int d = 0; d < cfg.dim; ++d) {
      dot += E.at(a, d) * E.at(b, d);
      na += E.at(a, d) * E.at(a, d);
      nb += E.at(b, d) * E.at(b, d);
    }
    return dot / std::sqrt(na * nb);
  };
  CHECK(cosine(4, 5) > cosine(4, 6));
  CHECK(cosine(6, 7) > cosine(6, 5));
}

TEST_CASE("skip-gram training is deterministic for a fixed seed") {
  std::vector<std::vector<int>> corpus{{4, 5, 6}, {5, 6, 7}, {4, 6, 5}};
  Word2VecConfig cfg;
  cfg.dim = 8;
  cfg.epochs = 2;
  cfg.seed = 12;
  TensorF a = pretrain_embeddings(corpus, 8, cfg);
  TensorF b = pretrain_embeddings(corpus, 8, cfg);
  CHECK(a.data == b.data);
  CHECK_THROWS(pretrain_embeddings({}, 8, cfg));
}

TEST_CASE("vocab reserves ids 0-3 and round-trips through its file") {
  Vocab v = Vocab::build({{"cat", "sat", "cat"}, {"mat"}});
  CHECK(v.id("cat") == 4);  // most frequent after reserved
  CHECK(v.sym(kPadId) == "<pad>");
  CHECK(v.sym(kEosId) == "<eos>");
  CHECK(v.id("unknown-token") == kUnkId);

  auto path = std::string("/tmp/gec_test_vocab.txt");
  v.save(path);
  Vocab loaded = Vocab::load(path);
  CHECK(loaded.size() == v.size());
  CHECK(loaded.id("mat") == v.id("mat"));
  std::remove(path.c_str());
}
