#include "gec/experiment.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>
#include <atomic>
#include <thread>

#include <json.hpp>

#include "gec/align.hpp"
#include "gec/checkpoint.hpp"

namespace gec {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(allowed.begin(), allowed.end(),
                     [&](const char* a) { return key == a; }) == allowed.end())
      throw std::runtime_error("config: unknown key '" + key + "' in " + where);
  }
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["data"] = {{"vocab_size", c.data.vocab_size},
               {"general_sentences", c.data.general_sentences},
               {"in_domain_sentences", c.data.in_domain_sentences},
               {"dev_sentences", c.data.dev_sentences},
               {"test_sentences", c.data.test_sentences},
               {"mono_sentences", c.data.mono_sentences},
               {"general_rate", c.data.general_rate},
               {"in_domain_rate", c.data.in_domain_rate},
               {"dev_rate", c.data.dev_rate},
               {"seed", c.data.seed}};
  j["adapt"] = {{"oversample_factor", c.oversample_factor},
                {"target_error_rate", c.target_error_rate}};
  j["model"] = {{"bpe_merges", c.bpe_merges},
                {"emb_dim", c.emb_dim},
                {"rnn_dim", c.rnn_dim},
                {"p_dropout_rnn", c.p_dropout_rnn},
                {"p_src", c.p_src},
                {"max_len", c.max_len}};
  j["train"] = {{"lr", c.train.lr},
                {"schedule", c.train.schedule == LrSchedule::kWarmupInvSqrt ? "warmup_invsqrt"
                                                                            : "constant"},
                {"warmup_steps", c.train.warmup_steps},
                {"adam_beta1", c.train.adam_beta1},
                {"adam_beta2", c.train.adam_beta2},
                {"adam_eps", c.train.adam_eps},
                {"clip_norm", c.train.clip_norm},
                {"patience", c.train.patience},
                {"checkpoint_every", c.train.checkpoint_every},
                {"keep_best_k", c.train.keep_best_k},
                {"batch_tokens", c.train.batch_tokens},
                {"max_epochs", c.train.max_epochs},
                {"max_steps", c.train.max_steps},
                {"max_seconds", c.train.max_seconds},
                {"lambda", c.Lambda}};
  j["pretrain"] = {{"lm_enabled", c.lm_enabled},
                   {"lm_epochs", c.lm_epochs},
                   {"w2v_epochs", c.w2v.epochs},
                   {"w2v_window", c.w2v.window},
                   {"w2v_negatives", c.w2v.negatives},
                   {"w2v_lr", c.w2v.lr}};
  j["decode"] = {{"beam", c.beam},
                 {"alpha_policy", c.alpha_policy},
                 {"alpha", c.alpha},
                 {"alpha_dev_subset", c.alpha_dev_subset}};
  j["eval"] = {{"max_unchanged_words", c.max_unchanged_words}};
  j["runs"] = {{"seeds", c.seeds}};
  j["stages"] = c.stages;
  j["threads"] = c.threads;
  j["deterministic"] = c.deterministic;
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  check_keys(j, "root",
             {"data", "adapt", "model", "train", "pretrain", "decode", "eval", "runs", "stages",
              "threads", "deterministic"});
  ExperimentConfig c;
  if (j.contains("data")) {
    const auto& d = j["data"];
    check_keys(d, "data",
               {"vocab_size", "general_sentences", "in_domain_sentences", "dev_sentences",
                "test_sentences", "mono_sentences", "general_rate", "in_domain_rate", "dev_rate",
                "seed"});
    c.data.vocab_size = d.value("vocab_size", c.data.vocab_size);
    c.data.general_sentences = d.value("general_sentences", c.data.general_sentences);
    c.data.in_domain_sentences = d.value("in_domain_sentences", c.data.in_domain_sentences);
    c.data.dev_sentences = d.value("dev_sentences", c.data.dev_sentences);
    c.data.test_sentences = d.value("test_sentences", c.data.test_sentences);
    c.data.mono_sentences = d.value("mono_sentences", c.data.mono_sentences);
    c.data.general_rate = d.value("general_rate", c.data.general_rate);
    c.data.in_domain_rate = d.value("in_domain_rate", c.data.in_domain_rate);
    c.data.dev_rate = d.value("dev_rate", c.data.dev_rate);
    c.data.seed = d.value("seed", c.data.seed);
  }
  if (j.contains("adapt")) {
    const auto& a = j["adapt"];
    check_keys(a, "adapt", {"oversample_factor", "target_error_rate"});
    c.oversample_factor = a.value("oversample_factor", c.oversample_factor);
    c.target_error_rate = a.value("target_error_rate", c.target_error_rate);
  }
  if (j.contains("model")) {
    const auto& m = j["model"];
    check_keys(m, "model", {"bpe_merges", "emb_dim", "rnn_dim", "p_dropout_rnn", "p_src", "max_len"});
    c.bpe_merges = m.value("bpe_merges", c.bpe_merges);
    c.emb_dim = m.value("emb_dim", c.emb_dim);
    c.rnn_dim = m.value("rnn_dim", c.rnn_dim);
    c.p_dropout_rnn = m.value("p_dropout_rnn", c.p_dropout_rnn);
    c.p_src = m.value("p_src", c.p_src);
    c.max_len = m.value("max_len", c.max_len);
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    check_keys(t, "train",
               {"lr", "schedule", "warmup_steps", "adam_beta1", "adam_beta2", "adam_eps",
                "clip_norm", "patience", "checkpoint_every", "keep_best_k", "batch_tokens",
                "max_epochs", "max_steps", "max_seconds", "lambda"});
    c.train.lr = t.value("lr", c.train.lr);
    std::string sched = t.value("schedule", std::string("constant"));
    if (sched == "constant")
      c.train.schedule = LrSchedule::kConstant;
    else if (sched == "warmup_invsqrt")
      c.train.schedule = LrSchedule::kWarmupInvSqrt;
    else
      throw std::runtime_error("config: unknown schedule '" + sched + "'");
    c.train.warmup_steps = t.value("warmup_steps", c.train.warmup_steps);
    c.train.adam_beta1 = t.value("adam_beta1", c.train.adam_beta1);
    c.train.adam_beta2 = t.value("adam_beta2", c.train.adam_beta2);
    c.train.adam_eps = t.value("adam_eps", c.train.adam_eps);
    c.train.clip_norm = t.value("clip_norm", c.train.clip_norm);
    c.train.patience = t.value("patience", c.train.patience);
    c.train.checkpoint_every = t.value("checkpoint_every", c.train.checkpoint_every);
    c.train.keep_best_k = t.value("keep_best_k", c.train.keep_best_k);
    c.train.batch_tokens = t.value("batch_tokens", c.train.batch_tokens);
    c.train.max_epochs = t.value("max_epochs", c.train.max_epochs);
    c.train.max_steps = t.value("max_steps", c.train.max_steps);
    c.train.max_seconds = t.value("max_seconds", c.train.max_seconds);
    c.Lambda = t.value("lambda", c.Lambda);
  }
  if (j.contains("pretrain")) {
    const auto& p = j["pretrain"];
    check_keys(p, "pretrain",
               {"lm_enabled", "lm_epochs", "w2v_epochs", "w2v_window", "w2v_negatives", "w2v_lr"});
    c.lm_enabled = p.value("lm_enabled", c.lm_enabled);
    c.lm_epochs = p.value("lm_epochs", c.lm_epochs);
    c.w2v.epochs = p.value("w2v_epochs", c.w2v.epochs);
    c.w2v.window = p.value("w2v_window", c.w2v.window);
    c.w2v.negatives = p.value("w2v_negatives", c.w2v.negatives);
    c.w2v.lr = p.value("w2v_lr", c.w2v.lr);
  }
  if (j.contains("decode")) {
    const auto& d = j["decode"];
    check_keys(d, "decode", {"beam", "alpha_policy", "alpha", "alpha_dev_subset"});
    c.beam = d.value("beam", c.beam);
    c.alpha_policy = d.value("alpha_policy", c.alpha_policy);
    if (c.alpha_policy != "tune" && c.alpha_policy != "fixed")
      throw std::runtime_error("config: alpha_policy must be 'tune' or 'fixed'");
    c.alpha = d.value("alpha", c.alpha);
    c.alpha_dev_subset = d.value("alpha_dev_subset", c.alpha_dev_subset);
  }
  if (j.contains("eval")) {
    check_keys(j["eval"], "eval", {"max_unchanged_words"});
    c.max_unchanged_words = j["eval"].value("max_unchanged_words", c.max_unchanged_words);
  }
  if (j.contains("runs")) {
    check_keys(j["runs"], "runs", {"seeds"});
    if (j["runs"].contains("seeds")) c.seeds = j["runs"]["seeds"].get<std::vector<uint64_t>>();
  }
  if (j.contains("stages")) c.stages = j["stages"].get<std::vector<std::string>>();
  c.threads = j.value("threads", c.threads);
  c.deterministic = j.value("deterministic", c.deterministic);
  if (c.seeds.empty()) throw std::runtime_error("config: at least one run seed required");
  for (const auto& s : c.stages) resolve_stage(s, c);  // validates names
  return c;
}

json m2_to_json(const M2Result& r) {
  return json{{"tp", r.tp},           {"fp", r.fp},         {"fn", r.fn},
              {"precision", r.precision}, {"recall", r.recall}, {"f_half", r.f_half}};
}

M2Result m2_of_json(const json& j) {
  M2Result r;
  r.tp = j.value("tp", int64_t{0});
  r.fp = j.value("fp", int64_t{0});
  r.fn = j.value("fn", int64_t{0});
  r.precision = j.value("precision", 1.0);
  r.recall = j.value("recall", 1.0);
  r.f_half = j.value("f_half", 0.0);
  return r;
}

json result_to_json(const ExperimentResult& result, size_t n_runs) {
  json stages = json::array();
  for (const auto& s : result.stages) {
    json runs = json::array();
    for (const auto& r : s.per_run) runs.push_back(m2_to_json(r));
    json stage{{"stage", s.stage},
               {"per_run", runs},
               {"mean_f", s.mean_f},
               {"ensemble", m2_to_json(s.ensemble)},
               {"alpha_used", s.alpha_used}};
    if (s.ensemble_lm) stage["ensemble_lm"] = m2_to_json(*s.ensemble_lm);
    stages.push_back(std::move(stage));
  }
  return json{{"config_hash", result.config_hash}, {"n_runs", n_runs}, {"stages", stages}};
}

json apply_overrides(json j, const std::vector<std::string>& overrides) {
  for (const auto& kv : overrides) {
    size_t eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("override '" + kv + "' is not key=value");
    std::string path = kv.substr(0, eq);
    std::string value = kv.substr(eq + 1);
    json* cur = &j;
    size_t pos = 0;
    while (true) {
      size_t dot = path.find('.', pos);
      std::string part = path.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
      if (dot == std::string::npos) {
        json parsed = json::parse(value, nullptr, false);
        (*cur)[part] = parsed.is_discarded() ? json(value) : parsed;
        break;
      }
      cur = &(*cur)[part];
      pos = dot + 1;
    }
  }
  return j;
}

}  // namespace

const std::vector<std::string>& ExperimentConfig::default_stages() {
  static const std::vector<std::string> stages = {
      "baseline",  "+dropout-src", "+domain-adapt", "+error-adapt",
      "+tied-emb", "+edit-mle",    "+pretrain-emb", "+pretrain-dec"};
  return stages;
}

StagePlan resolve_stage(const std::string& name, const ExperimentConfig& cfg) {
  const auto& all = ExperimentConfig::default_stages();
  auto it = std::find(all.begin(), all.end(), name);
  if (it == all.end()) throw std::runtime_error("unknown stage '" + name + "'");
  size_t idx = static_cast<size_t>(it - all.begin());
  StagePlan plan;
  plan.name = name;
  plan.src_dropout = idx >= 1;
  plan.domain_adapt = idx >= 2;
  plan.error_adapt = idx >= 3;
  plan.tied = idx >= 4;
  plan.Lambda = idx >= 5 ? cfg.Lambda : 1.0;
  plan.pretrain_emb = idx >= 6;
  plan.pretrain_dec = idx >= 7;
  return plan;
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text,
                                                  const std::vector<std::string>& overrides) {
  json j = json::parse(text);
  return config_from_json(apply_overrides(std::move(j), overrides));
}

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path,
                                                  const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str(), overrides);
}

std::string ExperimentConfig::to_json_text() const { return config_to_json(*this).dump(2); }

std::string fnv1a_hex(const std::string& text) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  std::ostringstream os;
  os << std::hex << std::setfill('0') << std::setw(16) << h;
  return os.str();
}

std::string ExperimentConfig::hash() const { return fnv1a_hex(config_to_json(*this).dump()); }

ExperimentData prepare_data(const ExperimentConfig& cfg) {
  ExperimentData data;
  const auto& d = cfg.data;
  CorruptionSpec general_spec = CorruptionSpec::for_rate(d.general_rate, d.vocab_size, "general");
  CorruptionSpec indomain_spec =
      CorruptionSpec::for_rate(d.in_domain_rate, d.vocab_size, "in-domain");
  CorruptionSpec dev_spec = CorruptionSpec::for_rate(d.dev_rate, d.vocab_size, "in-domain");

  SplitRng seeds(d.seed, "data-seeds");
  data.general = generate_synthetic(seeds.next_u64(), d.vocab_size, d.general_sentences,
                                    general_spec, "general");
  data.in_domain = generate_synthetic(seeds.next_u64(), d.vocab_size, d.in_domain_sentences,
                                      indomain_spec, "in-domain");
  data.dev =
      generate_synthetic(seeds.next_u64(), d.vocab_size, d.dev_sentences, dev_spec, "in-domain");
  data.test =
      generate_synthetic(seeds.next_u64(), d.vocab_size, d.test_sentences, dev_spec, "in-domain");
  Corpus mono = generate_synthetic(seeds.next_u64(), d.vocab_size, d.mono_sentences, {},
                                   "in-domain");
  data.mono.reserve(mono.size());
  for (auto& p : mono) data.mono.push_back(std::move(p.trg));

  // one shared subword model over both sides of the error-annotated data
  std::vector<TokenSeq> bpe_corpus;
  for (const Corpus* c : {&data.general, &data.in_domain}) {
    for (const auto& p : *c) {
      bpe_corpus.push_back(p.src);
      bpe_corpus.push_back(p.trg);
    }
  }
  data.bpe = bpe_learn(bpe_corpus, static_cast<size_t>(cfg.bpe_merges));

  std::vector<TokenSeq> segmented;
  segmented.reserve(bpe_corpus.size());
  for (const auto& s : bpe_corpus) segmented.push_back(bpe_apply(data.bpe, s));
  data.vocab = Vocab::build(segmented);
  return data;
}

std::vector<EncodedPair> encode_pairs(const Corpus& corpus, const BpeModel& bpe,
                                      const Vocab& vocab, double Lambda) {
  std::vector<EncodedPair> out;
  out.reserve(corpus.size());
  for (const auto& p : corpus) {
    TokenSeq src_bpe = bpe_apply(bpe, p.src);
    TokenSeq trg_bpe = bpe_apply(bpe, p.trg);
    EncodedPair e;
    e.src = vocab.encode(src_bpe);
    e.trg = vocab.encode(trg_bpe);
    if (Lambda > 1.0) {
      Alignment a = levenshtein_align(src_bpe, trg_bpe);
      e.lambda = edit_weights(a, src_bpe, trg_bpe, Lambda).lambda;
    }
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<std::vector<int>> encode_sources(const Corpus& corpus, const BpeModel& bpe,
                                             const Vocab& vocab) {
  std::vector<std::vector<int>> out;
  out.reserve(corpus.size());
  for (const auto& p : corpus) out.push_back(vocab.encode(bpe_apply(bpe, p.src)));
  return out;
}

M2Result score_corpus(EnsembleSpec& spec, const Corpus& eval_corpus, const BpeModel& bpe,
                      const Vocab& vocab, int beam, int threads, int max_unchanged_words) {
  auto srcs = encode_sources(eval_corpus, bpe, vocab);
  auto hyp_ids = decode_corpus(spec, srcs, beam, threads);
  std::vector<M2Item> items;
  items.reserve(eval_corpus.size());
  for (size_t i = 0; i < eval_corpus.size(); ++i) {
    M2Item item;
    item.src = eval_corpus[i].src;
    item.hyp = bpe_revert(vocab.decode(hyp_ids[i]));
    item.gold = eval_corpus[i].gold.empty() ? std::vector<EditSet>{EditSet{}}
                                            : eval_corpus[i].gold;
    items.push_back(std::move(item));
  }
  return m2_score(items, max_unchanged_words);
}

namespace {

Corpus stage_training_corpus(const StagePlan& plan, const ExperimentConfig& cfg,
                             const ExperimentData& data) {
  Corpus corpus = data.general;
  corpus.insert(corpus.end(), data.in_domain.begin(), data.in_domain.end());
  if (plan.domain_adapt) corpus = oversample(corpus, "in-domain", cfg.oversample_factor);
  if (plan.error_adapt) corpus = error_rate_adapt(corpus, cfg.target_error_rate);
  return corpus;
}

ModelConfig stage_model_config(const StagePlan& plan, const ExperimentConfig& cfg,
                               const ExperimentData& data) {
  ModelConfig mc;
  mc.vocab_size = data.vocab.size();
  mc.emb_dim = cfg.emb_dim;
  mc.rnn_dim = cfg.rnn_dim;
  mc.p_dropout_rnn = cfg.p_dropout_rnn;
  mc.p_src = plan.src_dropout ? cfg.p_src : 0.0;
  mc.tied = plan.tied;
  mc.max_len = cfg.max_len;
  return mc;
}

}  // namespace

StageMetrics multi_seed_experiment(const StagePlan& plan, const ExperimentConfig& cfg,
                                   const ExperimentData& data, const Corpus& eval_corpus,
                                   DecoderLmF* lm, std::ostream* log,
                                   std::vector<Checkpoint>* run_checkpoints) {
  if (cfg.seeds.empty())
    throw std::invalid_argument("multi_seed_experiment: needs at least one seed");

  Corpus train_words = stage_training_corpus(plan, cfg, data);
  auto train_pairs = encode_pairs(train_words, data.bpe, data.vocab, plan.Lambda);
  auto dev_pairs = encode_pairs(data.dev, data.bpe, data.vocab, 1.0);
  ModelConfig mc = stage_model_config(plan, cfg, data);

  // optional pretrained pieces shared by all runs of the stage
  std::vector<std::vector<int>> mono_ids;
  if (plan.pretrain_emb || plan.pretrain_dec) {
    mono_ids.reserve(data.mono.size());
    for (const auto& s : data.mono)
      mono_ids.push_back(data.vocab.encode(bpe_apply(data.bpe, s)));
  }
  TensorF pretrained_emb;
  if (plan.pretrain_emb) {
    Word2VecConfig w2v = cfg.w2v;
    w2v.dim = mc.emb_dim;
    w2v.seed = cfg.data.seed ^ 0xE5B;
    pretrained_emb = pretrain_embeddings(mono_ids, mc.vocab_size, w2v);
  }

  const int run_threads = cfg.deterministic ? 1 : cfg.threads;
  size_t n_runs = cfg.seeds.size();
  std::vector<M2Result> per_run(n_runs);
  std::vector<Checkpoint> finals(n_runs);

  auto run_one = [&](size_t k) {
    uint64_t seed = cfg.seeds[k];
    auto model = Seq2SeqModelF::init(mc, seed);
    if (plan.pretrain_dec) {
      // each run pretrains its own LM so the remaining weights stay
      // independently initialized
      ModelConfig lm_cfg = mc;
      lm_cfg.tied = true;
      lm_cfg.p_src = 0.0;
      DecoderLmF run_lm = DecoderLmF::init(lm_cfg, seed ^ 0x17D);
      if (plan.pretrain_emb) run_lm.store.at("emb") = pretrained_emb;
      train_decoder_lm(run_lm, mono_ids, seed ^ 0x17D, cfg.lm_epochs, 3e-4, 64, 1);
      transfer_from_lm(run_lm.store, model);
    } else if (plan.pretrain_emb) {
      if (mc.tied) {
        model.store.at("emb") = pretrained_emb;
      } else {
        model.store.at("emb_src") = pretrained_emb;
        model.store.at("emb_trg") = pretrained_emb;
        model.store.at("emb_out") = pretrained_emb;
      }
    }

    TrainConfig tc = cfg.train;
    tc.seed = seed;
    tc.threads = 1;  // runs parallelize at the run level
    auto dev_metric = [&](Seq2SeqModelF& m) {
      EnsembleSpec single{{&m}, nullptr, 0.0};
      size_t subset = std::min<size_t>(data.dev.size(), 150);
      Corpus dev_subset(data.dev.begin(), data.dev.begin() + static_cast<long>(subset));
      return score_corpus(single, dev_subset, data.bpe, data.vocab, 1, 1,
                          cfg.max_unchanged_words)
          .f_half;
    };
    TrainResult res = train(model, train_pairs, dev_pairs, tc, dev_metric);
    if (res.best.size() < static_cast<size_t>(tc.keep_best_k) && log)
      *log << "[stage " << plan.name << " run " << k << "] only " << res.best.size()
           << " checkpoints available for averaging\n";
    Checkpoint avg = average_checkpoints(res.best);
    finals[k] = std::move(avg);

    auto final_model = model_from_checkpoint(finals[k]);
    EnsembleSpec single{{&final_model}, nullptr, 0.0};
    per_run[k] = score_corpus(single, eval_corpus, data.bpe, data.vocab, cfg.beam, 1,
                              cfg.max_unchanged_words);
  };

  if (run_threads <= 1 || n_runs == 1) {
    for (size_t k = 0; k < n_runs; ++k) run_one(k);
  } else {
    std::vector<std::thread> pool;
    std::atomic<size_t> next{0};
    int T = std::min<int>(run_threads, static_cast<int>(n_runs));
    for (int t = 0; t < T; ++t)
      pool.emplace_back([&] {
        while (true) {
          size_t k = next.fetch_add(1);
          if (k >= n_runs) return;
          run_one(k);
        }
      });
    for (auto& th : pool) th.join();
  }

  StageMetrics metrics;
  metrics.stage = plan.name;
  metrics.per_run = per_run;
  double sum = 0.0;
  for (const auto& r : per_run) sum += r.f_half;
  metrics.mean_f = sum / static_cast<double>(n_runs);

  // ensemble of all runs
  std::vector<Seq2SeqModelF> members;
  members.reserve(n_runs);
  for (const auto& c : finals) members.push_back(model_from_checkpoint(c));
  EnsembleSpec ens;
  for (auto& m : members) ens.members.push_back(&m);
  metrics.ensemble = score_corpus(ens, eval_corpus, data.bpe, data.vocab, cfg.beam,
                                  run_threads, cfg.max_unchanged_words);

  if (lm) {
    EnsembleSpec fused = ens;
    fused.lm = lm;
    double alpha = cfg.alpha;
    if (cfg.alpha_policy == "tune") {
      size_t subset = std::min(cfg.alpha_dev_subset, data.dev.size());
      Corpus dev_subset(data.dev.begin(), data.dev.begin() + static_cast<long>(subset));
      auto dev_srcs = encode_sources(dev_subset, data.bpe, data.vocab);
      auto metric = [&](const std::vector<std::vector<int>>& hyp_ids) {
        std::vector<M2Item> items;
        for (size_t i = 0; i < dev_subset.size(); ++i) {
          M2Item item;
          item.src = dev_subset[i].src;
          item.hyp = bpe_revert(data.vocab.decode(hyp_ids[i]));
          item.gold = dev_subset[i].gold;
          items.push_back(std::move(item));
        }
        return m2_score(items, cfg.max_unchanged_words).f_half;
      };
      alpha = tune_alpha(fused, dev_srcs, std::min(cfg.beam, 4), metric, run_threads).first;
    }
    fused.alpha = alpha;
    metrics.alpha_used = alpha;
    metrics.ensemble_lm = score_corpus(fused, eval_corpus, data.bpe, data.vocab, cfg.beam,
                                       run_threads, cfg.max_unchanged_words);
  }

  if (run_checkpoints) *run_checkpoints = std::move(finals);
  if (log) {
    *log << "[stage " << plan.name << "] runs:";
    for (const auto& r : per_run) *log << ' ' << r.f_half;
    *log << " mean=" << metrics.mean_f << " ens=" << metrics.ensemble.f_half;
    if (metrics.ensemble_lm) *log << " ens+lm=" << metrics.ensemble_lm->f_half
                                  << " (alpha=" << metrics.alpha_used << ")";
    *log << '\n';
  }
  return metrics;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir,
                                std::ostream* log) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  ExperimentResult result;
  result.config_hash = cfg.hash();

  ExperimentData data = prepare_data(cfg);

  // persist shared artifacts
  fs::create_directories(out_dir + "/corpus");
  auto dump_corpus = [&](const Corpus& c, const std::string& name) {
    std::vector<TokenSeq> src, trg;
    for (const auto& p : c) {
      src.push_back(p.src);
      trg.push_back(p.trg);
    }
    write_token_file(out_dir + "/corpus/" + name + ".src", src);
    write_token_file(out_dir + "/corpus/" + name + ".trg", trg);
  };
  dump_corpus(data.general, "general");
  dump_corpus(data.in_domain, "in-domain");
  dump_corpus(data.dev, "dev");
  dump_corpus(data.test, "test");
  {
    std::vector<M2Sentence> dev_m2;
    for (const auto& p : data.dev) {
      M2Sentence s;
      s.src = p.src;
      for (size_t a = 0; a < p.gold.size(); ++a)
        s.by_annotator[static_cast<int>(a)] = p.gold[a];
      dev_m2.push_back(std::move(s));
    }
    std::ofstream m2(out_dir + "/corpus/dev.m2");
    serialize_m2(m2, dev_m2);
    write_token_file(out_dir + "/corpus/mono.txt", data.mono);
  }
  save_bpe_model(out_dir + "/bpe.model", data.bpe);
  data.vocab.save(out_dir + "/vocab.txt");

  // the fusion LM is shared across stages
  std::optional<DecoderLmF> lm;
  if (cfg.lm_enabled) {
    std::vector<std::vector<int>> mono_ids;
    mono_ids.reserve(data.mono.size());
    for (const auto& s : data.mono)
      mono_ids.push_back(data.vocab.encode(bpe_apply(data.bpe, s)));
    ModelConfig lm_cfg;
    lm_cfg.vocab_size = data.vocab.size();
    lm_cfg.emb_dim = cfg.emb_dim;
    lm_cfg.rnn_dim = cfg.rnn_dim;
    lm_cfg.p_dropout_rnn = cfg.p_dropout_rnn;
    lm_cfg.tied = true;
    lm_cfg.max_len = cfg.max_len;
    lm = pretrain_decoder_lm(mono_ids, lm_cfg, cfg.data.seed ^ 0x1Du, cfg.lm_epochs, 3e-4, 64,
                             cfg.deterministic ? 1 : cfg.threads);
    Checkpoint lc = checkpoint_of_lm(*lm);
    lc.config_hash = result.config_hash;
    save_checkpoint(out_dir + "/lm.gecf", lc);
  }

  for (const auto& stage_name : cfg.stages) {
    StagePlan plan = resolve_stage(stage_name, cfg);
    std::vector<Checkpoint> finals;
    StageMetrics metrics = multi_seed_experiment(plan, cfg, data, data.dev,
                                                 lm ? &*lm : nullptr, log, &finals);
    result.stages.push_back(metrics);

    std::string stage_dir = out_dir + "/stage-" + std::to_string(result.stages.size() - 1);
    fs::create_directories(stage_dir);
    for (size_t k = 0; k < finals.size(); ++k) {
      finals[k].config_hash = result.config_hash;
      save_checkpoint(stage_dir + "/run-" + std::to_string(k) + ".gecf", finals[k]);
    }
  }

  {
    std::ofstream report(out_dir + "/report.tsv");
    write_report_tsv(report, result, cfg.seeds.size());
    std::ofstream meta(out_dir + "/meta.json");
    meta << "{\n  \"config_hash\": \"" << result.config_hash << "\",\n  \"config\": "
         << cfg.to_json_text() << "\n}\n";
    std::ofstream results(out_dir + "/results.json");
    results << result_to_json(result, cfg.seeds.size()).dump(2) << '\n';
  }
  return result;
}

std::pair<ExperimentResult, size_t> load_results_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  json j = json::parse(in);
  ExperimentResult result;
  result.config_hash = j.value("config_hash", "");
  size_t n_runs = j.value("n_runs", size_t{0});
  for (const auto& s : j["stages"]) {
    StageMetrics m;
    m.stage = s.value("stage", "");
    for (const auto& r : s["per_run"]) m.per_run.push_back(m2_of_json(r));
    m.mean_f = s.value("mean_f", 0.0);
    m.ensemble = m2_of_json(s["ensemble"]);
    m.alpha_used = s.value("alpha_used", 0.0);
    if (s.contains("ensemble_lm")) m.ensemble_lm = m2_of_json(s["ensemble_lm"]);
    result.stages.push_back(std::move(m));
  }
  return {result, n_runs};
}

void write_report_tsv(std::ostream& out, const ExperimentResult& result, size_t n_runs) {
  out << "stage";
  for (size_t k = 1; k <= n_runs; ++k) out << "\trun" << k;
  out << "\tmean\tensemble\tensemble+LM\n";
  out << std::fixed << std::setprecision(4);
  for (const auto& s : result.stages) {
    out << s.stage;
    for (const auto& r : s.per_run) out << '\t' << r.f_half;
    out << '\t' << s.mean_f << '\t' << s.ensemble.f_half << '\t';
    if (s.ensemble_lm)
      out << s.ensemble_lm->f_half;
    else
      out << "-";
    out << '\n';
  }
}

}  // namespace gec
