#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>

#include "gec/align.hpp"
#include "gec/bpe.hpp"
#include "gec/checkpoint.hpp"
#include "gec/corpus.hpp"
#include "gec/decode.hpp"
#include "gec/experiment.hpp"
#include "gec/metrics.hpp"
#include "gec/synth.hpp"
#include "gec/train.hpp"
#include "gec/vocab.hpp"
#include "gec/word2vec.hpp"

namespace {

using namespace gec;

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

Corpus load_parallel(const std::string& src, const std::string& trg, const std::string& tag) {
  return corpus_from_files(src, trg, tag);
}

struct EnsembleFiles {
  std::vector<Seq2SeqModelF> models;
  std::optional<DecoderLmF> lm;

  EnsembleSpec spec(double alpha) {
    EnsembleSpec s;
    for (auto& m : models) s.members.push_back(&m);
    if (lm) s.lm = &*lm;
    s.alpha = lm ? alpha : 0.0;
    return s;
  }
};

EnsembleFiles load_ensemble(const std::string& model_list, const std::string& lm_path) {
  EnsembleFiles out;
  for (const auto& path : split_list(model_list))
    out.models.push_back(model_from_checkpoint(load_checkpoint(path)));
  if (out.models.empty()) throw std::runtime_error("no model checkpoints given");
  if (!lm_path.empty()) out.lm = lm_from_checkpoint(load_checkpoint(lm_path));
  return out;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"desk-scale neural grammatical error correction toolkit"};
  app.require_subcommand(1);

  // ---- bpe-learn ----
  auto* bpe_learn_cmd = app.add_subcommand("bpe-learn", "learn a BPE merge table");
  std::vector<std::string> bl_inputs;
  size_t bl_merges = 50000;
  std::string bl_output;
  bpe_learn_cmd->add_option("--input", bl_inputs, "token file(s)")->required();
  bpe_learn_cmd->add_option("--merges", bl_merges, "number of merges (default 50000)");
  bpe_learn_cmd->add_option("--output", bl_output, "model file")->required();
  bpe_learn_cmd->callback([&] {
    std::vector<TokenSeq> corpus;
    for (const auto& path : bl_inputs) {
      auto part = read_token_file(path);
      corpus.insert(corpus.end(), part.begin(), part.end());
    }
    save_bpe_model(bl_output, bpe_learn(corpus, bl_merges));
  });

  // ---- bpe-apply ----
  auto* bpe_apply_cmd = app.add_subcommand("bpe-apply", "segment text with a BPE model");
  std::string ba_model, ba_input, ba_output;
  bool ba_lower_first = false;
  bpe_apply_cmd->add_option("--model", ba_model)->required();
  bpe_apply_cmd->add_option("--input", ba_input)->required();
  bpe_apply_cmd->add_option("--output", ba_output)->required();
  bpe_apply_cmd->add_flag("--lowercase-first", ba_lower_first,
                          "lowercase the first token before segmenting");
  bpe_apply_cmd->callback([&] {
    BpeModel model = load_bpe_model(ba_model);
    auto corpus = read_token_file(ba_input);
    std::vector<TokenSeq> out;
    for (auto& sent : corpus) {
      if (ba_lower_first) sent = lowercase_first(sent);
      out.push_back(bpe_apply(model, sent));
    }
    write_token_file(ba_output, out);
  });

  // ---- bpe-revert ----
  auto* bpe_revert_cmd = app.add_subcommand("bpe-revert", "undo BPE segmentation");
  std::string br_input, br_output;
  bool br_upper_first = false;
  bpe_revert_cmd->add_option("--input", br_input)->required();
  bpe_revert_cmd->add_option("--output", br_output)->required();
  bpe_revert_cmd->add_flag("--uppercase-first", br_upper_first,
                           "restore an uppercase first token after reverting");
  bpe_revert_cmd->callback([&] {
    auto corpus = read_token_file(br_input);
    std::vector<TokenSeq> out;
    for (const auto& sent : corpus) {
      TokenSeq r = bpe_revert(sent);
      if (br_upper_first) r = uppercase_first(r);
      out.push_back(std::move(r));
    }
    write_token_file(br_output, out);
  });

  // ---- synth ----
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic parallel corpus");
  uint64_t sy_seed = 1;
  int sy_vocab = 120;
  size_t sy_sentences = 1000;
  double sy_rate = 0.15;
  std::string sy_domain = "general", sy_prefix;
  synth_cmd->add_option("--seed", sy_seed);
  synth_cmd->add_option("--vocab-size", sy_vocab);
  synth_cmd->add_option("--sentences", sy_sentences);
  synth_cmd->add_option("--rate", sy_rate, "target token error rate");
  synth_cmd->add_option("--domain", sy_domain)->check(CLI::IsMember({"general", "in-domain"}));
  synth_cmd->add_option("--out-prefix", sy_prefix, "writes PREFIX.src/.trg/.m2")->required();
  synth_cmd->callback([&] {
    CorruptionSpec spec = CorruptionSpec::for_rate(sy_rate, sy_vocab, sy_domain);
    Corpus corpus = generate_synthetic(sy_seed, sy_vocab, sy_sentences, spec, sy_domain);
    std::vector<TokenSeq> src, trg;
    std::vector<M2Sentence> m2;
    for (const auto& p : corpus) {
      src.push_back(p.src);
      trg.push_back(p.trg);
      M2Sentence s;
      s.src = p.src;
      for (size_t a = 0; a < p.gold.size(); ++a) s.by_annotator[static_cast<int>(a)] = p.gold[a];
      m2.push_back(std::move(s));
    }
    write_token_file(sy_prefix + ".src", src);
    write_token_file(sy_prefix + ".trg", trg);
    std::ofstream m2out(sy_prefix + ".m2");
    serialize_m2(m2out, m2);
  });

  // ---- corpus-stats ----
  auto* stats_cmd = app.add_subcommand("corpus-stats", "sentence/token counts and error rate");
  std::string cs_src, cs_trg;
  stats_cmd->add_option("--src", cs_src)->required();
  stats_cmd->add_option("--trg", cs_trg)->required();
  stats_cmd->callback([&] {
    CorpusStats st = error_rate(load_parallel(cs_src, cs_trg, "general"));
    std::cout << "sentences\t" << st.sentence_count << "\ntokens\t" << st.token_count
              << "\nerror_rate\t" << std::fixed << std::setprecision(4) << st.error_rate << "\n";
  });

  // ---- adapt ----
  auto* adapt_cmd = app.add_subcommand("adapt", "oversample in-domain data and adapt error rate");
  std::string ad_src, ad_trg, ad_id_src, ad_id_trg, ad_prefix;
  int ad_factor = 10;
  double ad_rate = 0.15;
  bool ad_no_rate = false;
  adapt_cmd->add_option("--src", ad_src, "general source")->required();
  adapt_cmd->add_option("--trg", ad_trg, "general target")->required();
  adapt_cmd->add_option("--in-domain-src", ad_id_src);
  adapt_cmd->add_option("--in-domain-trg", ad_id_trg);
  adapt_cmd->add_option("--oversample", ad_factor, "in-domain duplication factor (default 10)");
  adapt_cmd->add_option("--target-rate", ad_rate, "target token error rate (default 0.15)");
  adapt_cmd->add_flag("--no-rate-adapt", ad_no_rate, "skip error-rate adaptation");
  adapt_cmd->add_option("--out-prefix", ad_prefix)->required();
  adapt_cmd->callback([&] {
    Corpus corpus = load_parallel(ad_src, ad_trg, "general");
    if (!ad_id_src.empty()) {
      Corpus in_domain = load_parallel(ad_id_src, ad_id_trg, "in-domain");
      corpus.insert(corpus.end(), in_domain.begin(), in_domain.end());
      corpus = oversample(corpus, "in-domain", ad_factor);
    }
    if (!ad_no_rate) corpus = error_rate_adapt(corpus, ad_rate);
    std::vector<TokenSeq> src, trg;
    for (const auto& p : corpus) {
      src.push_back(p.src);
      trg.push_back(p.trg);
    }
    write_token_file(ad_prefix + ".src", src);
    write_token_file(ad_prefix + ".trg", trg);
  });

  // ---- align-train ----
  auto* align_train_cmd = app.add_subcommand("align-train", "EM-train the IBM-2 style aligner");
  std::string at_src, at_trg, at_output;
  int at_iters = 5;
  double at_tension = 4.0, at_pnull = 0.08;
  align_train_cmd->add_option("--src", at_src)->required();
  align_train_cmd->add_option("--trg", at_trg)->required();
  align_train_cmd->add_option("--iterations", at_iters);
  align_train_cmd->add_option("--tension", at_tension);
  align_train_cmd->add_option("--p-null", at_pnull);
  align_train_cmd->add_option("--output", at_output)->required();
  align_train_cmd->callback([&] {
    auto src = read_token_file(at_src);
    auto trg = read_token_file(at_trg);
    if (src.size() != trg.size()) throw std::runtime_error("line counts differ");
    std::vector<SentencePair> corpus;
    for (size_t i = 0; i < src.size(); ++i) corpus.push_back({src[i], trg[i]});
    EmTrace trace;
    AlignModel model = train_aligner(corpus, at_iters, at_tension, at_pnull, &trace);
    for (size_t i = 0; i < trace.log_likelihood.size(); ++i)
      std::cerr << "iteration " << i + 1 << " log-likelihood " << trace.log_likelihood[i] << '\n';
    save_align_model(at_output, model);
  });

  // ---- align ----
  auto* align_cmd = app.add_subcommand("align", "word-align a parallel corpus");
  std::string al_src, al_trg, al_model, al_output, al_method = "levenshtein";
  align_cmd->add_option("--src", al_src)->required();
  align_cmd->add_option("--trg", al_trg)->required();
  align_cmd->add_option("--method", al_method)->check(CLI::IsMember({"levenshtein", "ibm2"}));
  align_cmd->add_option("--model", al_model, "trained aligner (for --method ibm2)");
  align_cmd->add_option("--output", al_output)->required();
  align_cmd->callback([&] {
    auto src = read_token_file(al_src);
    auto trg = read_token_file(al_trg);
    if (src.size() != trg.size()) throw std::runtime_error("line counts differ");
    std::optional<AlignModel> model;
    if (al_method == "ibm2") {
      if (al_model.empty()) throw std::runtime_error("--method ibm2 requires --model");
      model = load_align_model(al_model);
    }
    std::ofstream out(al_output);
    for (size_t i = 0; i < src.size(); ++i) {
      Alignment a = model ? viterbi_align(*model, src[i], trg[i])
                          : levenshtein_align(src[i], trg[i]);
      out << format_alignment(a) << '\n';
    }
  });

  // ---- edit-weights ----
  auto* ew_cmd = app.add_subcommand("edit-weights", "per-token loss weights from alignments");
  std::string ew_src, ew_trg, ew_model, ew_output, ew_method = "levenshtein";
  double ew_lambda = 3.0;
  ew_cmd->add_option("--src", ew_src)->required();
  ew_cmd->add_option("--trg", ew_trg)->required();
  ew_cmd->add_option("--lambda", ew_lambda, "edit weight (default 3)");
  ew_cmd->add_option("--method", ew_method)->check(CLI::IsMember({"levenshtein", "ibm2"}));
  ew_cmd->add_option("--model", ew_model);
  ew_cmd->add_option("--output", ew_output)->required();
  ew_cmd->callback([&] {
    auto src = read_token_file(ew_src);
    auto trg = read_token_file(ew_trg);
    if (src.size() != trg.size()) throw std::runtime_error("line counts differ");
    std::optional<AlignModel> model;
    if (ew_method == "ibm2") model = load_align_model(ew_model);
    std::ofstream out(ew_output);
    for (size_t i = 0; i < src.size(); ++i) {
      Alignment a = model ? viterbi_align(*model, src[i], trg[i])
                          : levenshtein_align(src[i], trg[i]);
      EditWeights w = edit_weights(a, src[i], trg[i], ew_lambda);
      for (size_t t = 0; t < w.lambda.size(); ++t) out << (t ? " " : "") << w.lambda[t];
      out << '\n';
    }
  });

  // ---- pretrain-emb ----
  auto* pe_cmd = app.add_subcommand("pretrain-emb", "skip-gram embedding pretraining");
  std::string pe_input, pe_vocab, pe_output;
  Word2VecConfig pe_cfg;
  pe_cfg.dim = 512;
  pe_cmd->add_option("--input", pe_input, "BPE-segmented monolingual text")->required();
  pe_cmd->add_option("--vocab", pe_vocab)->required();
  pe_cmd->add_option("--dim", pe_cfg.dim);
  pe_cmd->add_option("--epochs", pe_cfg.epochs);
  pe_cmd->add_option("--window", pe_cfg.window);
  pe_cmd->add_option("--negatives", pe_cfg.negatives);
  pe_cmd->add_option("--lr", pe_cfg.lr);
  pe_cmd->add_option("--seed", pe_cfg.seed);
  pe_cmd->add_option("--output", pe_output)->required();
  pe_cmd->callback([&] {
    Vocab vocab = Vocab::load(pe_vocab);
    std::vector<std::vector<int>> ids;
    for (const auto& sent : read_token_file(pe_input)) ids.push_back(vocab.encode(sent));
    TensorF emb = pretrain_embeddings(ids, vocab.size(), pe_cfg);
    Checkpoint c;
    c.kind = "embedding";
    c.tensors.emplace("emb", std::move(emb));
    c.model_config.vocab_size = vocab.size();
    c.model_config.emb_dim = pe_cfg.dim;
    save_checkpoint(pe_output, c);
  });

  // ---- pretrain-lm ----
  auto* pl_cmd = app.add_subcommand("pretrain-lm", "decoder-shaped language model pretraining");
  std::string pl_input, pl_vocab, pl_output, pl_init_emb;
  int pl_emb = 512, pl_rnn = 1024, pl_epochs = 2;
  double pl_lr = 3e-4, pl_dropout = 0.2;
  uint64_t pl_seed = 1;
  int pl_threads = 1;
  pl_cmd->add_option("--input", pl_input, "BPE-segmented monolingual text")->required();
  pl_cmd->add_option("--vocab", pl_vocab)->required();
  pl_cmd->add_option("--emb-dim", pl_emb);
  pl_cmd->add_option("--rnn-dim", pl_rnn);
  pl_cmd->add_option("--epochs", pl_epochs, "training epochs (default 2)");
  pl_cmd->add_option("--lr", pl_lr);
  pl_cmd->add_option("--dropout", pl_dropout);
  pl_cmd->add_option("--seed", pl_seed);
  pl_cmd->add_option("--threads", pl_threads);
  pl_cmd->add_option("--init-emb", pl_init_emb, "embedding checkpoint to start from");
  pl_cmd->add_option("--output", pl_output)->required();
  pl_cmd->callback([&] {
    Vocab vocab = Vocab::load(pl_vocab);
    std::vector<std::vector<int>> ids;
    for (const auto& sent : read_token_file(pl_input)) ids.push_back(vocab.encode(sent));
    ModelConfig cfg;
    cfg.vocab_size = vocab.size();
    cfg.emb_dim = pl_emb;
    cfg.rnn_dim = pl_rnn;
    cfg.p_dropout_rnn = pl_dropout;
    cfg.tied = true;
    DecoderLmF lm = DecoderLmF::init(cfg, pl_seed);
    if (!pl_init_emb.empty()) {
      Checkpoint init = load_checkpoint(pl_init_emb);
      lm.store.at("emb") = init.tensors.at("emb");
    }
    LmTrainTrace trace;
    train_decoder_lm(lm, ids, pl_seed, pl_epochs, pl_lr, 64, pl_threads, &trace);
    for (size_t e = 0; e < trace.epoch_perplexity.size(); ++e)
      std::cerr << "epoch " << e + 1 << " train perplexity " << trace.epoch_perplexity[e] << '\n';
    save_checkpoint(pl_output, checkpoint_of_lm(lm));
  });

  // ---- train ----
  auto* train_cmd = app.add_subcommand("train", "train one correction model");
  std::string tr_src, tr_trg, tr_dev_src, tr_dev_trg, tr_dev_m2, tr_vocab, tr_bpe, tr_outdir;
  std::string tr_init_emb, tr_init_lm, tr_schedule = "constant";
  int tr_emb = 512, tr_rnn = 1024, tr_epochs = 50, tr_threads = 1, tr_beam = 1;
  double tr_lr = 3e-4, tr_dropout = 0.2, tr_psrc = 0.0, tr_lambda = 1.0;
  bool tr_untied = false, tr_literal_src_dropout = false;
  uint64_t tr_seed = 1, tr_ckpt_every = 10000, tr_max_steps = 0, tr_warmup = 16000;
  size_t tr_batch_tokens = 0;
  int tr_patience = 10, tr_keep = 8;
  double tr_max_seconds = 0.0;
  train_cmd->add_option("--src", tr_src)->required();
  train_cmd->add_option("--trg", tr_trg)->required();
  train_cmd->add_option("--dev-src", tr_dev_src)->required();
  train_cmd->add_option("--dev-trg", tr_dev_trg)->required();
  train_cmd->add_option("--dev-m2", tr_dev_m2, "gold dev annotations for the decode metric");
  train_cmd->add_option("--vocab", tr_vocab)->required();
  train_cmd->add_option("--bpe", tr_bpe, "BPE model applied to all input text")->required();
  train_cmd->add_option("--emb-dim", tr_emb);
  train_cmd->add_option("--rnn-dim", tr_rnn);
  train_cmd->add_option("--dropout", tr_dropout, "variational dropout probability (default 0.2)");
  train_cmd->add_option("--src-dropout", tr_psrc, "source word dropout probability");
  train_cmd->add_flag("--literal-src-dropout", tr_literal_src_dropout,
                      "scale dropped source vectors by 1/p instead of zeroing");
  train_cmd->add_flag("--untied", tr_untied, "separate src/trg/output embeddings");
  train_cmd->add_option("--lambda", tr_lambda, "edit weight for the training loss (default 1)");
  train_cmd->add_option("--lr", tr_lr);
  train_cmd->add_option("--schedule", tr_schedule)
      ->check(CLI::IsMember({"constant", "warmup_invsqrt"}));
  train_cmd->add_option("--warmup-steps", tr_warmup);
  train_cmd->add_option("--epochs", tr_epochs);
  train_cmd->add_option("--max-steps", tr_max_steps);
  train_cmd->add_option("--max-seconds", tr_max_seconds);
  train_cmd->add_option("--batch-tokens", tr_batch_tokens);
  train_cmd->add_option("--patience", tr_patience);
  train_cmd->add_option("--checkpoint-every", tr_ckpt_every);
  train_cmd->add_option("--keep-best", tr_keep);
  train_cmd->add_option("--seed", tr_seed);
  train_cmd->add_option("--threads", tr_threads);
  train_cmd->add_option("--dev-beam", tr_beam, "beam for the dev decode metric");
  train_cmd->add_option("--init-emb", tr_init_emb);
  train_cmd->add_option("--init-lm", tr_init_lm);
  train_cmd->add_option("--out-dir", tr_outdir)->required();
  train_cmd->callback([&] {
    namespace fs = std::filesystem;
    fs::create_directories(tr_outdir);
    Vocab vocab = Vocab::load(tr_vocab);
    BpeModel bpe = load_bpe_model(tr_bpe);
    Corpus train_words = load_parallel(tr_src, tr_trg, "general");
    Corpus dev_words = load_parallel(tr_dev_src, tr_dev_trg, "general");

    auto encode = [&](const Corpus& c, double Lambda) {
      std::vector<EncodedPair> out;
      for (const auto& p : c) {
        TokenSeq sb = bpe_apply(bpe, p.src), tb = bpe_apply(bpe, p.trg);
        EncodedPair e;
        e.src = vocab.encode(sb);
        e.trg = vocab.encode(tb);
        if (Lambda > 1.0)
          e.lambda = edit_weights(levenshtein_align(sb, tb), sb, tb, Lambda).lambda;
        out.push_back(std::move(e));
      }
      return out;
    };
    auto train_pairs = encode(train_words, tr_lambda);
    auto dev_pairs = encode(dev_words, 1.0);

    ModelConfig mc;
    mc.vocab_size = vocab.size();
    mc.emb_dim = tr_emb;
    mc.rnn_dim = tr_rnn;
    mc.p_dropout_rnn = tr_dropout;
    mc.p_src = tr_psrc;
    mc.tied = !tr_untied;
    mc.literal_src_dropout = tr_literal_src_dropout;
    auto model = Seq2SeqModelF::init(mc, tr_seed);
    if (!tr_init_lm.empty()) {
      Checkpoint lmc = load_checkpoint(tr_init_lm);
      TransferReport rep = transfer_from_lm(lm_from_checkpoint(lmc).store, model);
      std::cerr << "transferred " << rep.copied.size() << " parameters, "
                << rep.random.size() << " randomly initialized\n";
    } else if (!tr_init_emb.empty()) {
      Checkpoint init = load_checkpoint(tr_init_emb);
      const TensorF& emb = init.tensors.at("emb");
      if (mc.tied) {
        model.store.at("emb") = emb;
      } else {
        model.store.at("emb_src") = emb;
        model.store.at("emb_trg") = emb;
        model.store.at("emb_out") = emb;
      }
    }

    TrainConfig tc;
    tc.lr = tr_lr;
    tc.schedule = tr_schedule == "constant" ? LrSchedule::kConstant : LrSchedule::kWarmupInvSqrt;
    tc.warmup_steps = tr_warmup;
    tc.patience = tr_patience;
    tc.checkpoint_every = tr_ckpt_every;
    tc.keep_best_k = tr_keep;
    tc.Lambda = tr_lambda;
    tc.seed = tr_seed;
    tc.batch_tokens = tr_batch_tokens;
    tc.max_epochs = tr_epochs;
    tc.max_steps = tr_max_steps;
    tc.max_seconds = tr_max_seconds;
    tc.threads = tr_threads;

    DevMetricFn metric = nullptr;
    if (!tr_dev_m2.empty()) {
      auto gold = parse_m2_file(tr_dev_m2);
      Corpus dev_gold = corpus_from_m2(gold);
      metric = [&, dev_gold](Seq2SeqModelF& m) {
        EnsembleSpec single{{&m}, nullptr, 0.0};
        return score_corpus(single, dev_gold, bpe, vocab, tr_beam, tr_threads, 2).f_half;
      };
    }
    TrainResult res = train(model, train_pairs, dev_pairs, tc, metric,
                            tr_outdir + "/train_log.tsv");
    for (size_t k = 0; k < res.best.size(); ++k)
      save_checkpoint(tr_outdir + "/best-" + std::to_string(k) + ".gecf", res.best[k]);
    Checkpoint avg = average_checkpoints(res.best);
    if (res.best.size() < static_cast<size_t>(tr_keep))
      std::cerr << "averaging only " << res.best.size() << " checkpoints (fewer than "
                << tr_keep << " available)\n";
    save_checkpoint(tr_outdir + "/model.gecf", avg);
    std::cerr << "trained " << res.steps << " steps; averaged " << res.best.size()
              << " checkpoints into " << tr_outdir << "/model.gecf\n";
  });

  // ---- avg-ckpt ----
  auto* avg_cmd = app.add_subcommand("avg-ckpt", "element-wise checkpoint average");
  std::string av_inputs, av_output;
  avg_cmd->add_option("--inputs", av_inputs, "comma-separated checkpoint paths")->required();
  avg_cmd->add_option("--output", av_output)->required();
  avg_cmd->callback([&] {
    std::vector<Checkpoint> ckpts;
    for (const auto& path : split_list(av_inputs)) ckpts.push_back(load_checkpoint(path));
    save_checkpoint(av_output, average_checkpoints(ckpts));
  });

  // ---- correct ----
  auto* correct_cmd = app.add_subcommand("correct", "decode corrections for an input file");
  std::string co_models, co_lm, co_vocab, co_bpe, co_input, co_output, co_nbest_file;
  double co_alpha = 0.0;
  int co_beam = 24, co_threads = 1, co_nbest = 0;
  correct_cmd->add_option("--models", co_models, "comma-separated checkpoints")->required();
  correct_cmd->add_option("--lm", co_lm, "language model checkpoint");
  correct_cmd->add_option("--alpha", co_alpha, "LM weight");
  correct_cmd->add_option("--beam", co_beam, "beam size (default 24)");
  correct_cmd->add_option("--nbest", co_nbest, "emit an n-best list of this size");
  correct_cmd->add_option("--nbest-output", co_nbest_file, "n-best file (default stdout)");
  correct_cmd->add_option("--vocab", co_vocab)->required();
  correct_cmd->add_option("--bpe", co_bpe)->required();
  correct_cmd->add_option("--input", co_input)->required();
  correct_cmd->add_option("--output", co_output)->required();
  correct_cmd->add_option("--threads", co_threads);
  correct_cmd->callback([&] {
    Vocab vocab = Vocab::load(co_vocab);
    BpeModel bpe = load_bpe_model(co_bpe);
    EnsembleFiles ens = load_ensemble(co_models, co_lm);
    EnsembleSpec spec = ens.spec(co_alpha);
    spec.validate();

    auto input = read_token_file(co_input);
    std::vector<TokenSeq> out(input.size());
    std::ofstream nbest_out;
    if (co_nbest > 0 && !co_nbest_file.empty()) nbest_out.open(co_nbest_file);
    std::ostream& nb = nbest_out.is_open() ? nbest_out : std::cout;

    for (size_t i = 0; i < input.size(); ++i) {
      if (input[i].empty()) continue;
      auto ids = vocab.encode(bpe_apply(bpe, input[i]));
      int cap = std::min(spec.members[0]->cfg.max_len, static_cast<int>(ids.size()) * 2 + 6);
      BeamResult res = beam_search(spec, ids, co_beam, cap);
      out[i] = bpe_revert(vocab.decode(res.best));
      if (co_nbest > 0) {
        for (size_t k = 0; k < std::min<size_t>(res.nbest.size(), static_cast<size_t>(co_nbest));
             ++k)
          nb << i << " ||| " << join_tokens(bpe_revert(vocab.decode(res.nbest[k].tokens)))
             << " ||| " << std::setprecision(6) << res.nbest[k].normalized_score(spec.alpha)
             << '\n';
      }
    }
    write_token_file(co_output, out);
  });

  // ---- tune-alpha ----
  auto* ta_cmd = app.add_subcommand("tune-alpha", "grid-search the LM fusion weight");
  std::string ta_models, ta_lm, ta_vocab, ta_bpe, ta_dev_src, ta_dev_m2;
  int ta_beam = 4, ta_threads = 1;
  ta_cmd->add_option("--models", ta_models)->required();
  ta_cmd->add_option("--lm", ta_lm)->required();
  ta_cmd->add_option("--vocab", ta_vocab)->required();
  ta_cmd->add_option("--bpe", ta_bpe)->required();
  ta_cmd->add_option("--dev-src", ta_dev_src)->required();
  ta_cmd->add_option("--dev-m2", ta_dev_m2)->required();
  ta_cmd->add_option("--beam", ta_beam);
  ta_cmd->add_option("--threads", ta_threads);
  ta_cmd->callback([&] {
    Vocab vocab = Vocab::load(ta_vocab);
    BpeModel bpe = load_bpe_model(ta_bpe);
    EnsembleFiles ens = load_ensemble(ta_models, ta_lm);
    EnsembleSpec spec = ens.spec(0.0);

    Corpus dev = corpus_from_m2(parse_m2_file(ta_dev_m2));
    {
      auto stated = read_token_file(ta_dev_src);
      if (stated.size() != dev.size())
        throw std::runtime_error("dev source and M2 sentence counts differ");
      for (size_t i = 0; i < dev.size(); ++i) dev[i].src = stated[i];
    }
    std::vector<std::vector<int>> dev_srcs;
    for (const auto& p : dev) dev_srcs.push_back(vocab.encode(bpe_apply(bpe, p.src)));

    auto metric = [&](const std::vector<std::vector<int>>& hyp_ids) {
      std::vector<M2Item> items;
      for (size_t i = 0; i < dev.size(); ++i)
        items.push_back({dev[i].src, bpe_revert(vocab.decode(hyp_ids[i])), dev[i].gold});
      return m2_score(items).f_half;
    };
    auto [alpha, curve] = tune_alpha(spec, dev_srcs, ta_beam, metric, ta_threads);
    std::cout << std::fixed << std::setprecision(4);
    for (size_t k = 0; k < curve.alphas.size(); ++k)
      std::cout << "alpha\t" << std::setprecision(1) << curve.alphas[k] << '\t'
                << std::setprecision(4) << curve.metrics[k] << '\n';
    std::cout << "best_alpha\t" << std::setprecision(1) << alpha << '\n';
  });

  // ---- m2-score ----
  auto* m2_cmd = app.add_subcommand("m2-score", "MaxMatch scorer");
  std::string m2_hyp, m2_gold;
  int m2_max_unchanged = 2;
  m2_cmd->add_option("--hyp", m2_hyp, "system output, one sentence per line")->required();
  m2_cmd->add_option("--gold", m2_gold, "gold M2 file")->required();
  m2_cmd->add_option("--max-unchanged", m2_max_unchanged);
  m2_cmd->callback([&] {
    auto gold = parse_m2_file(m2_gold);
    auto hyps = read_token_file(m2_hyp);
    if (gold.size() != hyps.size())
      throw std::runtime_error("hypothesis and gold sentence counts differ (" +
                               std::to_string(hyps.size()) + " vs " +
                               std::to_string(gold.size()) + ")");
    std::vector<M2Item> items;
    for (size_t i = 0; i < gold.size(); ++i) {
      M2Item item;
      item.src = gold[i].src;
      item.hyp = hyps[i];
      for (const auto& [annotator, edits] : gold[i].by_annotator) item.gold.push_back(edits);
      if (item.gold.empty()) item.gold.push_back({});
      items.push_back(std::move(item));
    }
    M2Result r = m2_score(items, m2_max_unchanged);
    std::cout << std::fixed << std::setprecision(4) << "Precision : " << r.precision
              << " / Recall : " << r.recall << " / F_0.5 : " << r.f_half << '\n';
  });

  // ---- gleu-score ----
  auto* gleu_cmd = app.add_subcommand("gleu-score", "GLEU scorer");
  std::string gl_src, gl_hyp, gl_refs;
  int gl_iter = 500;
  uint64_t gl_seed = 2222;
  gleu_cmd->add_option("--src", gl_src)->required();
  gleu_cmd->add_option("--hyp", gl_hyp)->required();
  gleu_cmd->add_option("--refs", gl_refs, "comma-separated reference files")->required();
  gleu_cmd->add_option("--iter", gl_iter);
  gleu_cmd->add_option("--seed", gl_seed);
  gleu_cmd->callback([&] {
    auto srcs = read_token_file(gl_src);
    auto hyps = read_token_file(gl_hyp);
    std::vector<std::vector<TokenSeq>> refs(srcs.size());
    for (const auto& path : split_list(gl_refs)) {
      auto r = read_token_file(path);
      if (r.size() != srcs.size()) throw std::runtime_error(path + ": line count differs");
      for (size_t i = 0; i < r.size(); ++i) refs[i].push_back(r[i]);
    }
    if (hyps.size() != srcs.size()) throw std::runtime_error("hyp line count differs");
    GleuConfig cfg;
    cfg.iterations = gl_iter;
    cfg.seed = gl_seed;
    GleuResult r = gleu_score(srcs, hyps, refs, cfg);
    std::cout << std::fixed << std::setprecision(4) << r.score << '\n';
  });

  // ---- experiment ----
  auto* exp_cmd = app.add_subcommand("experiment", "run the full cumulative pipeline");
  std::string ex_config, ex_out;
  std::vector<std::string> ex_sets;
  int ex_threads = 0;
  bool ex_deterministic = false;
  exp_cmd->add_option("--config", ex_config, "experiment JSON config")->required();
  exp_cmd->add_option("--out", ex_out, "output directory")->required();
  exp_cmd->add_option("--set", ex_sets, "config override key=value (dots descend)");
  exp_cmd->add_option("--threads", ex_threads, "overrides config threads");
  exp_cmd->add_flag("--deterministic", ex_deterministic,
                    "force single-threaded, bit-reproducible execution");
  exp_cmd->callback([&] {
    ExperimentConfig cfg = ExperimentConfig::from_json_file(ex_config, ex_sets);
    if (ex_threads > 0) cfg.threads = ex_threads;
    if (ex_deterministic) cfg.deterministic = true;
    ExperimentResult res = run_experiment(cfg, ex_out, &std::cerr);
    write_report_tsv(std::cout, res, cfg.seeds.size());
  });

  // ---- report ----
  auto* rep_cmd = app.add_subcommand("report", "re-emit the TSV report of a finished experiment");
  std::string rp_dir, rp_output;
  rep_cmd->add_option("--experiment-dir", rp_dir)->required();
  rep_cmd->add_option("--output", rp_output, "target file (default stdout)");
  rep_cmd->callback([&] {
    auto [result, n_runs] = load_results_json(rp_dir + "/results.json");
    if (rp_output.empty()) {
      write_report_tsv(std::cout, result, n_runs);
    } else {
      std::ofstream out(rp_output);
      write_report_tsv(out, result, n_runs);
    }
  });

  CLI11_PARSE(app, argc, argv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
