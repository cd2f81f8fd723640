#pragma once

#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "gec/graph.hpp"
#include "gec/vocab.hpp"

namespace gec {

struct ModelConfig {
  int vocab_size = 0;
  int emb_dim = 512;
  int rnn_dim = 1024;
  int att_dim = 0;  // 0 -> rnn_dim
  double p_dropout_rnn = 0.2;
  double p_src = 0.0;
  bool tied = true;
  bool literal_src_dropout = false;  // scale dropped vectors by 1/p_src instead of zeroing
  int max_len = 120;

  int attention_dim() const { return att_dim > 0 ? att_dim : rnn_dim; }

  void validate() const {
    if (vocab_size < 5) throw std::invalid_argument("ModelConfig: vocab_size must cover the reserved ids");
    if (emb_dim < 1 || rnn_dim < 1) throw std::invalid_argument("ModelConfig: dims must be positive");
    if (p_dropout_rnn < 0 || p_dropout_rnn >= 1 || p_src < 0 || p_src >= 1)
      throw std::invalid_argument("ModelConfig: dropout probabilities must lie in [0,1)");
    if (max_len < 1) throw std::invalid_argument("ModelConfig: max_len must be positive");
  }
};

// Drops whole source-embedding vectors with probability p_src; survivors are
// scaled by 1/(1-p_src). The literal variant instead scales dropped vectors
// by 1/p_src and leaves survivors alone.
template <typename F>
std::vector<NodeT<F>*> source_word_dropout(GraphT<F>& g, const std::vector<NodeT<F>*>& seq,
                                           double p_src, SplitRng rng, bool training,
                                           bool literal = false) {
  if (p_src < 0.0 || p_src >= 1.0)
    throw std::invalid_argument("source_word_dropout: p_src must lie in [0,1)");
  if (p_src == 0.0 || !training) return seq;
  std::vector<NodeT<F>*> out;
  out.reserve(seq.size());
  for (auto* x : seq) {
    bool drop = rng.bernoulli(p_src);
    F factor;
    if (literal)
      factor = drop ? static_cast<F>(1.0 / p_src) : F(1);
    else
      factor = drop ? F(0) : static_cast<F>(1.0 / (1.0 - p_src));
    out.push_back(g.affine(x, factor, F(0)));
  }
  return out;
}

namespace detail {

template <typename F>
struct GruRefs {
  NodeT<F>*Wz, *Uz, *bz, *Wr, *Ur, *br, *Wh, *Uh, *bh;
};

template <typename F>
GruRefs<F> gru_refs(GraphT<F>& g, ParamStoreT<F>& store, const std::string& prefix) {
  return {g.param(store, prefix + ".Wz"), g.param(store, prefix + ".Uz"),
          g.param(store, prefix + ".bz"), g.param(store, prefix + ".Wr"),
          g.param(store, prefix + ".Ur"), g.param(store, prefix + ".br"),
          g.param(store, prefix + ".Wh"), g.param(store, prefix + ".Uh"),
          g.param(store, prefix + ".bh")};
}

template <typename F>
NodeT<F>* gru_step(GraphT<F>& g, const GruRefs<F>& p, NodeT<F>* x, NodeT<F>* h) {
  auto* z = g.sigmoid(g.add(g.add(g.matmul(x, p.Wz), g.matmul(h, p.Uz)), p.bz));
  auto* r = g.sigmoid(g.add(g.add(g.matmul(x, p.Wr), g.matmul(h, p.Ur)), p.br));
  auto* hc = g.tanh(g.add(g.add(g.matmul(x, p.Wh), g.matmul(g.mul(r, h), p.Uh)), p.bh));
  // (1-z) * h + z * hc
  return g.add(g.mul(g.affine(z, F(-1), F(1)), h), g.mul(z, hc));
}

}  // namespace detail

// Decoder-only language model sharing the decoder's parameter layout:
// embedding, first decoder transition and the context-free readout. Its
// parameter names are a strict subset of the seq2seq decoder's.
template <typename F>
class DecoderLmT {
public:
  ModelConfig cfg;
  ParamStoreT<F> store;

  static const std::set<std::string>& param_names();

  static DecoderLmT init(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    if (!cfg.tied) throw std::invalid_argument("DecoderLm: requires tied embeddings");
    DecoderLmT lm;
    lm.cfg = cfg;
    lm.store.seed = seed;
    int V = cfg.vocab_size, e = cfg.emb_dim, r = cfg.rnn_dim;
    lm.store.add_glorot("emb", V, e);
    for (const char* gate : {"z", "r", "h"}) {
      lm.store.add_glorot(std::string("dec.gru1.W") + gate, e, r);
      lm.store.add_glorot(std::string("dec.gru1.U") + gate, r, r);
      lm.store.add_zeros(std::string("dec.gru1.b") + gate, 1, r);
    }
    lm.store.add_glorot("out.Ws", r, e);
    lm.store.add_glorot("out.We", e, e);
    lm.store.add_zeros("out.b", 1, e);
    lm.store.add_zeros("out.bv", 1, V);
    return lm;
  }

  TensorT<F> initial_state() const { return TensorT<F>::zeros(1, cfg.rnn_dim); }

  // One next-token step at the node level (shared with the seq2seq zero-
  // context probe, which passes its own store).
  static NodeT<F>* step_nodes(GraphT<F>& g, ParamStoreT<F>& store, NodeT<F>*& state,
                              NodeT<F>* emb) {
    auto gru = detail::gru_refs(g, store, "dec.gru1");
    state = detail::gru_step(g, gru, emb, state);
    auto* ro = g.tanh(g.add(
        g.add(g.matmul(state, g.param(store, "out.Ws")), g.matmul(emb, g.param(store, "out.We"))),
        g.param(store, "out.b")));
    auto* logits = g.add(g.matmul_nt(ro, g.param(store, "emb")), g.param(store, "out.bv"));
    return g.log_softmax_rows(logits);
  }

  // Teacher-forced NLL over ids (bos/eos added internally).
  NodeT<F>* build_loss(GraphT<F>& g, const std::vector<int>& ids, SplitRng rng, bool training) {
    auto* E = g.param(store, "emb");
    std::vector<NodeT<F>*> embs;
    embs.push_back(g.gather_rows(E, {kBosId}));
    for (int id : ids) embs.push_back(g.gather_rows(E, {id}));
    embs = variational_dropout(g, embs, cfg.p_dropout_rnn, rng.split("lm-x"), training);
    SplitRng hrng = rng.split("lm-h");
    NodeT<F>* mask_h = nullptr;
    if (training && cfg.p_dropout_rnn > 0) {
      TensorT<F> m(1, cfg.rnn_dim);
      F ks = static_cast<F>(1.0 / (1.0 - cfg.p_dropout_rnn));
      for (auto& v : m.data) v = hrng.bernoulli(cfg.p_dropout_rnn) ? F(0) : ks;
      mask_h = g.input(std::move(m));
    }

    NodeT<F>* state = g.input(initial_state());
    NodeT<F>* loss = g.input(TensorT<F>::zeros(1, 1));
    for (size_t t = 0; t < embs.size(); ++t) {
      int target = t + 1 < embs.size() ? ids[t] : kEosId;
      NodeT<F>* s = mask_h ? g.mul(state, mask_h) : state;
      auto* logp = step_nodes(g, store, s, embs[t]);
      state = s;  // step_nodes advanced it
      loss = g.add(loss, g.affine(g.pick(logp, 0, target), F(-1), F(0)));
    }
    return loss;
  }

  struct StepOut {
    TensorT<F> state;
    TensorT<F> log_probs;
  };

  StepOut value_step(const TensorT<F>& state, int prev_id) {
    GraphT<F> g;
    g.grad_enabled = false;
    NodeT<F>* s = g.input(state);
    auto* emb = g.gather_rows(g.param(store, "emb"), {prev_id});
    auto* logp = step_nodes(g, store, s, emb);
    return {s->val(), logp->val()};
  }
};

template <typename F>
const std::set<std::string>& DecoderLmT<F>::param_names() {
  static const std::set<std::string> names = {
      "emb",          "dec.gru1.Wz", "dec.gru1.Uz", "dec.gru1.bz", "dec.gru1.Wr",
      "dec.gru1.Ur",  "dec.gru1.br", "dec.gru1.Wh", "dec.gru1.Uh", "dec.gru1.bh",
      "out.Ws",       "out.We",      "out.b",       "out.bv"};
  return names;
}

// Shallow attentional encoder-decoder. The decoder is a two-transition
// conditional cell: a full GRU over the previous state and embedding,
// an MLP attention read, then a context-gated additive update whose
// contribution vanishes at zero context with freshly initialized biases
// (this makes the decoder collapse onto DecoderLm exactly when the
// context is forced to zero, which the LM-transfer probe relies on).
template <typename F>
class Seq2SeqModelT {
public:
  ModelConfig cfg;
  ParamStoreT<F> store;

  static Seq2SeqModelT init(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    Seq2SeqModelT m;
    m.cfg = cfg;
    m.store.seed = seed;
    int V = cfg.vocab_size, e = cfg.emb_dim, r = cfg.rnn_dim, a = cfg.attention_dim();

    if (cfg.tied) {
      m.store.add_glorot("emb", V, e);
    } else {
      m.store.add_glorot("emb_src", V, e);
      m.store.add_glorot("emb_trg", V, e);
      m.store.add_glorot("emb_out", V, e);
    }
    for (const char* dir : {"enc_fwd", "enc_bwd"})
      for (const char* gate : {"z", "r", "h"}) {
        m.store.add_glorot(std::string(dir) + ".W" + gate, e, r);
        m.store.add_glorot(std::string(dir) + ".U" + gate, r, r);
        m.store.add_zeros(std::string(dir) + ".b" + gate, 1, r);
      }
    m.store.add_glorot("init.W", 2 * r, r);
    m.store.add_zeros("init.b", 1, r);
    for (const char* gate : {"z", "r", "h"}) {
      m.store.add_glorot(std::string("dec.gru1.W") + gate, e, r);
      m.store.add_glorot(std::string("dec.gru1.U") + gate, r, r);
      m.store.add_zeros(std::string("dec.gru1.b") + gate, 1, r);
    }
    m.store.add_glorot("att.W", r, a);
    m.store.add_glorot("att.U", 2 * r, a);
    m.store.add_zeros("att.b", 1, a);
    m.store.add_glorot("att.v", 1, a);
    m.store.add_glorot("dec.ctx.Wz", 2 * r, r);
    m.store.add_glorot("dec.ctx.Uz", r, r);
    m.store.add_zeros("dec.ctx.bz", 1, r);
    m.store.add_glorot("dec.ctx.Wh", 2 * r, r);
    m.store.add_zeros("dec.ctx.bh", 1, r);
    m.store.add_glorot("out.Ws", r, e);
    m.store.add_glorot("out.Wc", 2 * r, e);
    m.store.add_glorot("out.We", e, e);
    m.store.add_zeros("out.b", 1, e);
    m.store.add_zeros("out.bv", 1, V);
    return m;
  }

  const std::string& src_emb_name() const {
    static const std::string tied = "emb", untied = "emb_src";
    return cfg.tied ? tied : untied;
  }
  const std::string& trg_emb_name() const {
    static const std::string tied = "emb", untied = "emb_trg";
    return cfg.tied ? tied : untied;
  }
  const std::string& out_emb_name() const {
    static const std::string tied = "emb", untied = "emb_out";
    return cfg.tied ? tied : untied;
  }

  struct EncodeNodes {
    NodeT<F>* annotations;  // {T_x+1, 2r}, eos appended
    NodeT<F>* att_pre;      // {T_x+1, a}
    NodeT<F>* init_state;   // {1, r}
  };

  EncodeNodes encode_nodes(GraphT<F>& g, const std::vector<int>& src_ids, SplitRng rng,
                           bool training) {
    if (src_ids.empty()) throw std::invalid_argument("encode: empty source sequence");
    for (int id : src_ids)
      if (id < 0 || id >= cfg.vocab_size) throw std::invalid_argument("encode: id out of range");

    std::vector<int> ids = src_ids;
    ids.push_back(kEosId);
    auto* E = g.param(store, src_emb_name());
    std::vector<NodeT<F>*> embs;
    embs.reserve(ids.size());
    for (int id : ids) embs.push_back(g.gather_rows(E, {id}));

    embs = source_word_dropout(g, embs, cfg.p_src, rng.split("src-word"), training,
                               cfg.literal_src_dropout);
    embs = variational_dropout(g, embs, cfg.p_dropout_rnn, rng.split("enc-x"), training);

    auto recurrent_mask = [&](const char* name) -> NodeT<F>* {
      if (!training || cfg.p_dropout_rnn == 0) return nullptr;
      SplitRng mrng = rng.split(name);
      TensorT<F> m(1, cfg.rnn_dim);
      F ks = static_cast<F>(1.0 / (1.0 - cfg.p_dropout_rnn));
      for (auto& v : m.data) v = mrng.bernoulli(cfg.p_dropout_rnn) ? F(0) : ks;
      return g.input(std::move(m));
    };
    NodeT<F>* mask_fwd = recurrent_mask("enc-h-fwd");
    NodeT<F>* mask_bwd = recurrent_mask("enc-h-bwd");

    auto fwd_refs = detail::gru_refs(g, store, "enc_fwd");
    auto bwd_refs = detail::gru_refs(g, store, "enc_bwd");
    size_t T = embs.size();
    std::vector<NodeT<F>*> fwd(T), bwd(T);
    NodeT<F>* h = g.input(TensorT<F>::zeros(1, cfg.rnn_dim));
    for (size_t t = 0; t < T; ++t) {
      NodeT<F>* h_in = mask_fwd ? g.mul(h, mask_fwd) : h;
      h = detail::gru_step(g, fwd_refs, embs[t], h_in);
      fwd[t] = h;
    }
    h = g.input(TensorT<F>::zeros(1, cfg.rnn_dim));
    for (size_t t = T; t-- > 0;) {
      NodeT<F>* h_in = mask_bwd ? g.mul(h, mask_bwd) : h;
      h = detail::gru_step(g, bwd_refs, embs[t], h_in);
      bwd[t] = h;
    }
    std::vector<NodeT<F>*> rows(T);
    for (size_t t = 0; t < T; ++t) rows[t] = g.concat_cols(fwd[t], bwd[t]);
    auto* annotations = g.stack_rows(rows);
    auto* init_state = g.tanh(
        g.add(g.matmul(g.mean_rows(annotations), g.param(store, "init.W")), g.param(store, "init.b")));
    auto* att_pre = g.add(g.matmul(annotations, g.param(store, "att.U")), g.param(store, "att.b"));
    return {annotations, att_pre, init_state};
  }

  struct StepNodes {
    NodeT<F>* state;
    NodeT<F>* log_probs;
    NodeT<F>* att_weights;
  };

  StepNodes decode_step_nodes(GraphT<F>& g, NodeT<F>* state, NodeT<F>* emb,
                              const EncodeNodes& enc) {
    auto gru1 = detail::gru_refs(g, store, "dec.gru1");
    auto* s1 = detail::gru_step(g, gru1, emb, state);

    auto* q = g.matmul(s1, g.param(store, "att.W"));
    auto* scores = g.matmul_nt(g.tanh(g.add(enc.att_pre, q)), g.param(store, "att.v"));
    auto* alpha = g.softmax_rows(g.reshape(scores, 1, enc.annotations->val().rows()));
    auto* context = g.matmul(alpha, enc.annotations);

    auto* s2 = context_update(g, s1, context);
    auto* logp = readout(g, s2, context, emb);
    return {s2, logp, alpha};
  }

  // value-level inference API

  struct EncodeCtx {
    TensorT<F> annotations;
    TensorT<F> att_pre;
    TensorT<F> init_state;
  };

  EncodeCtx encode(const std::vector<int>& src_ids) {
    GraphT<F> g;
    g.grad_enabled = false;
    auto enc = encode_nodes(g, src_ids, SplitRng(0, "inference"), false);
    return {enc.annotations->val(), enc.att_pre->val(), enc.init_state->val()};
  }

  struct StepOut {
    TensorT<F> state;
    TensorT<F> log_probs;
    TensorT<F> att_weights;
  };

  StepOut decode_step(const EncodeCtx& ctx, const TensorT<F>& state, int prev_id) {
    GraphT<F> g;
    g.grad_enabled = false;
    EncodeNodes enc{g.input(ctx.annotations), g.input(ctx.att_pre), nullptr};
    auto* emb = g.gather_rows(g.param(store, trg_emb_name()), {prev_id});
    auto out = decode_step_nodes(g, g.input(state), emb, enc);
    return {out.state->val(), out.log_probs->val(), out.att_weights->val()};
  }

  // Decoder step with the source context forced to zero: the exact
  // DecoderLm computation over this model's parameters.
  typename DecoderLmT<F>::StepOut lm_mode_step(const TensorT<F>& state, int prev_id) {
    if (!cfg.tied) throw std::invalid_argument("lm_mode_step: requires tied embeddings");
    GraphT<F> g;
    g.grad_enabled = false;
    NodeT<F>* s = g.input(state);
    auto* emb = g.gather_rows(g.param(store, "emb"), {prev_id});
    auto* logp = DecoderLmT<F>::step_nodes(g, store, s, emb);
    return {s->val(), logp->val()};
  }

  // Teacher-forced loss: sum over target tokens (and eos) of
  // -lambda_t * log P(y_t | x, y_<t). lambda covers the target tokens;
  // the eos step always weighs 1.
  NodeT<F>* build_loss(GraphT<F>& g, const std::vector<int>& src_ids,
                       const std::vector<int>& trg_ids, const std::vector<double>* lambda,
                       SplitRng rng, bool training,
                       std::vector<double>* step_logprobs = nullptr) {
    if (lambda && lambda->size() != trg_ids.size())
      throw std::invalid_argument("build_loss: edit-weight vector length mismatch");
    auto enc = encode_nodes(g, src_ids, rng, training);

    auto* E_trg = g.param(store, trg_emb_name());
    std::vector<int> prev_ids;
    prev_ids.push_back(kBosId);
    for (int id : trg_ids) {
      if (id < 0 || id >= cfg.vocab_size) throw std::invalid_argument("build_loss: id out of range");
      prev_ids.push_back(id);
    }
    std::vector<NodeT<F>*> embs;
    embs.reserve(prev_ids.size());
    for (int id : prev_ids) embs.push_back(g.gather_rows(E_trg, {id}));
    embs = variational_dropout(g, embs, cfg.p_dropout_rnn, rng.split("dec-x"), training);

    NodeT<F>* mask_h = nullptr;
    if (training && cfg.p_dropout_rnn > 0) {
      SplitRng mrng = rng.split("dec-h");
      TensorT<F> m(1, cfg.rnn_dim);
      F ks = static_cast<F>(1.0 / (1.0 - cfg.p_dropout_rnn));
      for (auto& v : m.data) v = mrng.bernoulli(cfg.p_dropout_rnn) ? F(0) : ks;
      mask_h = g.input(std::move(m));
    }

    NodeT<F>* state = enc.init_state;
    NodeT<F>* loss = g.input(TensorT<F>::zeros(1, 1));
    for (size_t t = 0; t < embs.size(); ++t) {
      int target = t < trg_ids.size() ? trg_ids[t] : kEosId;
      NodeT<F>* s_in = mask_h ? g.mul(state, mask_h) : state;
      auto step = decode_step_nodes(g, s_in, embs[t], enc);
      state = step.state;
      auto* lp = g.pick(step.log_probs, 0, target);
      if (step_logprobs) step_logprobs->push_back(static_cast<double>(lp->val().data[0]));
      double w = (lambda && t < lambda->size()) ? (*lambda)[t] : 1.0;
      loss = g.add(loss, g.affine(lp, static_cast<F>(-w), F(0)));
    }
    return loss;
  }

private:
  NodeT<F>* context_update(GraphT<F>& g, NodeT<F>* s1, NodeT<F>* context) {
    auto* z2 = g.sigmoid(g.add(g.add(g.matmul(context, g.param(store, "dec.ctx.Wz")),
                                     g.matmul(s1, g.param(store, "dec.ctx.Uz"))),
                               g.param(store, "dec.ctx.bz")));
    auto* u2 = g.tanh(g.add(g.matmul(context, g.param(store, "dec.ctx.Wh")),
                            g.param(store, "dec.ctx.bh")));
    return g.add(s1, g.mul(z2, u2));
  }

  NodeT<F>* readout(GraphT<F>& g, NodeT<F>* state, NodeT<F>* context, NodeT<F>* emb) {
    auto* ro = g.tanh(g.add(g.add(g.add(g.matmul(state, g.param(store, "out.Ws")),
                                        g.matmul(context, g.param(store, "out.Wc"))),
                                  g.matmul(emb, g.param(store, "out.We"))),
                            g.param(store, "out.b")));
    auto* logits = g.add(g.matmul_nt(ro, g.param(store, out_emb_name())), g.param(store, "out.bv"));
    return g.log_softmax_rows(logits);
  }
};

struct TransferReport {
  std::vector<std::string> copied;
  std::vector<std::string> random;
};

// Copies every LM parameter into the model by name; everything else keeps
// its fresh initialization. Throws on shape mismatch for a shared name.
template <typename F>
TransferReport transfer_from_lm(const ParamStoreT<F>& lm_store, Seq2SeqModelT<F>& model) {
  if (!model.cfg.tied)
    throw std::invalid_argument("transfer_from_lm: requires a tied-embedding model");
  TransferReport report;
  for (const auto& [name, t] : lm_store.params) {
    auto& dst = model.store.at(name);
    if (!dst.same_shape(t))
      throw std::invalid_argument("transfer_from_lm: shape mismatch on '" + name + "' (" +
                                  dst.shape_str() + " vs " + t.shape_str() + ")");
    dst = t;
    report.copied.push_back(name);
  }
  for (const auto& [name, _] : model.store.params)
    if (!lm_store.params.count(name)) report.random.push_back(name);
  return report;
}

using Seq2SeqModelF = Seq2SeqModelT<float>;
using DecoderLmF = DecoderLmT<float>;

}  // namespace gec
