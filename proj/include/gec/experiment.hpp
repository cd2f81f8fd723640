#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gec/bpe.hpp"
#include "gec/corpus.hpp"
#include "gec/decode.hpp"
#include "gec/metrics.hpp"
#include "gec/synth.hpp"
#include "gec/train.hpp"
#include "gec/vocab.hpp"
#include "gec/word2vec.hpp"

namespace gec {

struct SynthDataSpec {
  int vocab_size = 120;
  size_t general_sentences = 3000;
  size_t in_domain_sentences = 600;
  size_t dev_sentences = 300;
  size_t test_sentences = 300;
  size_t mono_sentences = 4000;
  double general_rate = 0.06;
  double in_domain_rate = 0.06;
  double dev_rate = 0.15;
  uint64_t seed = 1;
};

struct ExperimentConfig {
  SynthDataSpec data;

  int oversample_factor = 10;
  double target_error_rate = 0.15;

  int bpe_merges = 150;
  int emb_dim = 64;
  int rnn_dim = 64;
  double p_dropout_rnn = 0.2;
  double p_src = 0.2;  // used from the +dropout-src stage on
  int max_len = 60;

  TrainConfig train;
  double Lambda = 3.0;  // used from the +edit-mle stage on

  bool lm_enabled = true;
  int lm_epochs = 2;
  Word2VecConfig w2v;

  int beam = 24;
  std::string alpha_policy = "tune";  // "tune" or "fixed"
  double alpha = 0.5;
  size_t alpha_dev_subset = 80;

  int max_unchanged_words = 2;

  std::vector<uint64_t> seeds = {1, 2, 3, 4};
  std::vector<std::string> stages = default_stages();
  int threads = 1;
  bool deterministic = false;

  static const std::vector<std::string>& default_stages();
  static ExperimentConfig from_json_file(const std::string& path,
                                         const std::vector<std::string>& overrides = {});
  static ExperimentConfig from_json_text(const std::string& text,
                                         const std::vector<std::string>& overrides = {});
  std::string to_json_text() const;
  std::string hash() const;
};

// One ablation stage's cumulative switches.
struct StagePlan {
  std::string name;
  bool src_dropout = false;
  bool domain_adapt = false;
  bool error_adapt = false;
  bool tied = false;
  double Lambda = 1.0;
  bool pretrain_emb = false;
  bool pretrain_dec = false;
};
StagePlan resolve_stage(const std::string& name, const ExperimentConfig& cfg);

struct StageMetrics {
  std::string stage;
  std::vector<M2Result> per_run;
  double mean_f = 0.0;
  M2Result ensemble;
  std::optional<M2Result> ensemble_lm;
  double alpha_used = 0.0;
};

struct ExperimentResult {
  std::vector<StageMetrics> stages;
  std::string config_hash;
};

// Shared data pack: synthetic corpora, subword model and vocabulary.
struct ExperimentData {
  Corpus general, in_domain, dev, test;
  std::vector<TokenSeq> mono;  // clean in-domain text
  BpeModel bpe;
  Vocab vocab;
};
ExperimentData prepare_data(const ExperimentConfig& cfg);

// BPE-segment and id-encode pairs; Lambda > 1 attaches edit weights from the
// subword-level Levenshtein alignment.
std::vector<EncodedPair> encode_pairs(const Corpus& corpus, const BpeModel& bpe,
                                      const Vocab& vocab, double Lambda = 1.0);
std::vector<std::vector<int>> encode_sources(const Corpus& corpus, const BpeModel& bpe,
                                             const Vocab& vocab);

// Decode -> revert BPE -> M2 against the corpus' gold edits.
M2Result score_corpus(EnsembleSpec& spec, const Corpus& eval_corpus, const BpeModel& bpe,
                      const Vocab& vocab, int beam, int threads, int max_unchanged_words);

// Trains one model per seed on the stage's data, averages each run's best
// checkpoints, and reports per-run / mean / ensemble(+LM) dev metrics.
StageMetrics multi_seed_experiment(const StagePlan& plan, const ExperimentConfig& cfg,
                                   const ExperimentData& data, const Corpus& eval_corpus,
                                   DecoderLmF* lm, std::ostream* log,
                                   std::vector<Checkpoint>* run_checkpoints = nullptr);

// The full cumulative pipeline; artifacts land under out_dir.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir,
                                std::ostream* log = nullptr);

void write_report_tsv(std::ostream& out, const ExperimentResult& result, size_t n_runs);

// Reads back the results.json an experiment run wrote; returns the result
// and the run count.
std::pair<ExperimentResult, size_t> load_results_json(const std::string& path);

std::string fnv1a_hex(const std::string& text);

}  // namespace gec
