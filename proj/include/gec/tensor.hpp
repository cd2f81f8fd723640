#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gec/rng.hpp"

namespace gec {

// Dense row-major 2-D tensor. Scalars are {1,1}, row vectors {1,n}.
template <typename F>
struct TensorT {
  std::vector<int64_t> shape;  // always rank 2
  std::vector<F> data;

  TensorT() : shape{0, 0} {}
  TensorT(int64_t r, int64_t c, F fill = F(0))
      : shape{r, c}, data(static_cast<size_t>(r * c), fill) {}

  int64_t rows() const { return shape[0]; }
  int64_t cols() const { return shape[1]; }
  size_t numel() const { return data.size(); }
  bool empty() const { return data.empty(); }

  F& at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * shape[1] + c)]; }
  F at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * shape[1] + c)]; }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }

  std::string shape_str() const {
    std::ostringstream os;
    os << '[' << rows() << ',' << cols() << ']';
    return os.str();
  }

  static TensorT zeros(int64_t r, int64_t c) { return TensorT(r, c, F(0)); }
  static TensorT full(int64_t r, int64_t c, F v) { return TensorT(r, c, v); }

  static TensorT glorot(int64_t r, int64_t c, SplitRng rng) {
    TensorT t(r, c);
    double limit = std::sqrt(6.0 / static_cast<double>(r + c));
    for (auto& v : t.data) v = static_cast<F>(rng.uniform(-limit, limit));
    return t;
  }

  static TensorT randn(int64_t r, int64_t c, SplitRng rng, double stddev = 1.0) {
    TensorT t(r, c);
    for (auto& v : t.data) v = static_cast<F>(rng.normal() * stddev);
    return t;
  }

  template <typename G>
  TensorT<G> cast() const {
    TensorT<G> t;
    t.shape = shape;
    t.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) t.data[i] = static_cast<G>(data[i]);
    return t;
  }
};

using TensorF = TensorT<float>;
using TensorD = TensorT<double>;

}  // namespace gec
