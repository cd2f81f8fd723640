#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gec/model.hpp"
#include "gec/tensor.hpp"

namespace gec {

// On disk: magic "GECF", format version u32, tensor count u32, then per
// tensor (u64 name length, name UTF-8, u64 rank, u64 dims, f32 payload),
// then a u64-length-prefixed UTF-8 JSON metadata blob. All integers and
// floats little-endian.
struct Checkpoint {
  std::map<std::string, TensorF> tensors;

  uint64_t step = 0;
  double dev_loss = 0.0;
  double dev_metric = 0.0;
  std::string config_hash;
  std::string kind = "seq2seq";  // "seq2seq" or "lm"
  ModelConfig model_config;
  std::vector<std::string> sources;  // inputs of an averaged checkpoint
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Element-wise arithmetic mean; throws unless all checkpoints carry the
// same name/shape set. Metadata records the sources.
Checkpoint average_checkpoints(const std::vector<Checkpoint>& ckpts);

Checkpoint checkpoint_of(const Seq2SeqModelF& model);
Checkpoint checkpoint_of_lm(const DecoderLmF& lm);
Seq2SeqModelF model_from_checkpoint(const Checkpoint& ckpt);
DecoderLmF lm_from_checkpoint(const Checkpoint& ckpt);

}  // namespace gec
