#pragma once

#include <cstdint>
#include <vector>

#include "gec/tensor.hpp"

namespace gec {

struct Word2VecConfig {
  int dim = 512;
  int epochs = 5;
  int window = 5;
  int negatives = 5;
  double lr = 0.025;
  uint64_t seed = 1;
};

// Skip-gram with negative sampling over id sequences. Returns the input
// embedding matrix {vocab_size, dim}; rows of ids that never occur keep
// their random initialization. Throws on an empty corpus.
TensorF pretrain_embeddings(const std::vector<std::vector<int>>& corpus, int vocab_size,
                            const Word2VecConfig& cfg);

}  // namespace gec
