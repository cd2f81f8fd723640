#pragma once

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "gec/tensor.hpp"

namespace gec {

// Named parameter tensors; iteration order is the sorted name order.
template <typename F>
struct ParamStoreT {
  std::map<std::string, TensorT<F>> params;
  std::map<std::string, TensorT<F>> grads;
  uint64_t seed = 0;

  TensorT<F>& add(const std::string& name, TensorT<F> t) {
    auto [it, fresh] = params.emplace(name, std::move(t));
    if (!fresh) throw std::invalid_argument("ParamStore: duplicate parameter '" + name + "'");
    return it->second;
  }

  TensorT<F>& add_glorot(const std::string& name, int64_t r, int64_t c) {
    return add(name, TensorT<F>::glorot(r, c, SplitRng(seed, "init/" + name)));
  }
  TensorT<F>& add_zeros(const std::string& name, int64_t r, int64_t c) {
    return add(name, TensorT<F>::zeros(r, c));
  }

  const TensorT<F>& at(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) throw std::invalid_argument("ParamStore: unknown parameter '" + name + "'");
    return it->second;
  }
  TensorT<F>& at(const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) throw std::invalid_argument("ParamStore: unknown parameter '" + name + "'");
    return it->second;
  }
  bool has(const std::string& name) const { return params.count(name) != 0; }

  void zero_grads() {
    for (const auto& [name, t] : params) {
      auto it = grads.find(name);
      if (it == grads.end())
        grads.emplace(name, TensorT<F>::zeros(t.rows(), t.cols()));
      else
        std::fill(it->second.data.begin(), it->second.data.end(), F(0));
    }
  }

  size_t total_params() const {
    size_t n = 0;
    for (const auto& [_, t] : params) n += t.numel();
    return n;
  }

  template <typename G>
  ParamStoreT<G> cast() const {
    ParamStoreT<G> out;
    out.seed = seed;
    for (const auto& [name, t] : params) out.params.emplace(name, t.template cast<G>());
    return out;
  }
};

template <typename F>
class GraphT;

template <typename F>
struct NodeT {
  TensorT<F> owned;
  const TensorT<F>* value = nullptr;  // owned or external (parameters)
  TensorT<F> grad;                    // allocated on first contribution
  bool requires_grad = false;
  std::function<void()> backprop;

  const TensorT<F>& val() const { return *value; }
};

// Define-by-run tape. Ops evaluate eagerly and record a backward closure;
// creation order is a topological order, so backward() is one reverse sweep.
template <typename F>
class GraphT {
public:
  using Node = NodeT<F>;
  using Mat = Eigen::Matrix<F, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using CMap = Eigen::Map<const Mat>;
  using MMap = Eigen::Map<Mat>;

  bool grad_enabled = true;

  Node* input(TensorT<F> t) {
    Node* n = fresh();
    n->owned = std::move(t);
    n->value = &n->owned;
    return n;
  }

  Node* param(ParamStoreT<F>& store, const std::string& name) {
    auto it = param_nodes_.find(name);
    if (it != param_nodes_.end()) return it->second;
    Node* n = fresh();
    n->value = &store.at(name);
    n->requires_grad = grad_enabled;
    param_nodes_.emplace(name, n);
    return n;
  }

  // --- elementwise / broadcast ---

  Node* add(Node* a, Node* b) {
    const auto& A = a->val();
    const auto& B = b->val();
    bool bcast = B.rows() == 1 && A.rows() != 1 && B.cols() == A.cols();
    require(A.same_shape(B) || bcast, "add", A, B);
    Node* n = make(a, b);
    n->owned = A;
    if (bcast) {
      for (int64_t r = 0; r < A.rows(); ++r)
        for (int64_t c = 0; c < A.cols(); ++c) n->owned.at(r, c) += B.at(0, c);
    } else {
      for (size_t i = 0; i < A.data.size(); ++i) n->owned.data[i] += B.data[i];
    }
    set_backprop(n, [n, a, b, bcast] {
      if (a->requires_grad) {
        auto& ga = grad_of(a);
        for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += n->grad.data[i];
      }
      if (b->requires_grad) {
        auto& gb = grad_of(b);
        if (bcast) {
          for (int64_t r = 0; r < n->grad.rows(); ++r)
            for (int64_t c = 0; c < n->grad.cols(); ++c) gb.at(0, c) += n->grad.at(r, c);
        } else {
          for (size_t i = 0; i < gb.data.size(); ++i) gb.data[i] += n->grad.data[i];
        }
      }
    });
    return n;
  }

  Node* sub(Node* a, Node* b) {
    require(a->val().same_shape(b->val()), "sub", a->val(), b->val());
    Node* n = make(a, b);
    n->owned = a->val();
    for (size_t i = 0; i < n->owned.data.size(); ++i) n->owned.data[i] -= b->val().data[i];
    set_backprop(n, [n, a, b] {
      if (a->requires_grad) {
        auto& ga = grad_of(a);
        for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += n->grad.data[i];
      }
      if (b->requires_grad) {
        auto& gb = grad_of(b);
        for (size_t i = 0; i < gb.data.size(); ++i) gb.data[i] -= n->grad.data[i];
      }
    });
    return n;
  }

  Node* mul(Node* a, Node* b) {
    require(a->val().same_shape(b->val()), "mul", a->val(), b->val());
    Node* n = make(a, b);
    n->owned = a->val();
    for (size_t i = 0; i < n->owned.data.size(); ++i) n->owned.data[i] *= b->val().data[i];
    set_backprop(n, [n, a, b] {
      if (a->requires_grad) {
        auto& ga = grad_of(a);
        for (size_t i = 0; i < ga.data.size(); ++i)
          ga.data[i] += n->grad.data[i] * b->val().data[i];
      }
      if (b->requires_grad) {
        auto& gb = grad_of(b);
        for (size_t i = 0; i < gb.data.size(); ++i)
          gb.data[i] += n->grad.data[i] * a->val().data[i];
      }
    });
    return n;
  }

  // alpha * x + beta, elementwise constants
  Node* affine(Node* x, F alpha, F beta) {
    Node* n = make(x);
    n->owned = x->val();
    for (auto& v : n->owned.data) v = alpha * v + beta;
    set_backprop(n, [n, x, alpha] {
      if (!x->requires_grad) return;
      auto& gx = grad_of(x);
      for (size_t i = 0; i < gx.data.size(); ++i) gx.data[i] += alpha * n->grad.data[i];
    });
    return n;
  }

  Node* tanh(Node* x) {
    Node* n = make(x);
    n->owned = x->val();
    for (auto& v : n->owned.data) v = std::tanh(v);
    set_backprop(n, [n, x] {
      if (!x->requires_grad) return;
      auto& gx = grad_of(x);
      for (size_t i = 0; i < gx.data.size(); ++i) {
        F y = n->owned.data[i];
        gx.data[i] += n->grad.data[i] * (F(1) - y * y);
      }
    });
    return n;
  }

  Node* sigmoid(Node* x) {
    Node* n = make(x);
    n->owned = x->val();
    for (auto& v : n->owned.data) {
      if (v >= F(0))
        v = F(1) / (F(1) + std::exp(-v));
      else {
        F e = std::exp(v);
        v = e / (F(1) + e);
      }
    }
    set_backprop(n, [n, x] {
      if (!x->requires_grad) return;
      auto& gx = grad_of(x);
      for (size_t i = 0; i < gx.data.size(); ++i) {
        F y = n->owned.data[i];
        gx.data[i] += n->grad.data[i] * y * (F(1) - y);
      }
    });
    return n;
  }

  Node* relu(Node* x) {
    Node* n = make(x);
    n->owned = x->val();
    for (auto& v : n->owned.data) v = v > F(0) ? v : F(0);
    set_backprop(n, [n, x] {
      if (!x->requires_grad) return;
      auto& gx = grad_of(x);
      for (size_t i = 0; i < gx.data.size(); ++i)
        if (x->val().data[i] > F(0)) gx.data[i] += n->grad.data[i];
    });
    return n;
  }

  // --- linear algebra ---

  Node* matmul(Node* a, Node* b) {
    const auto& A = a->val();
    const auto& B = b->val();
    require(A.cols() == B.rows(), "matmul", A, B);
    Node* n = make(a, b);
    n->owned = TensorT<F>::zeros(A.rows(), B.cols());
    mmap(n->owned) = cmap(A) * cmap(B);
    set_backprop(n, [this, n, a, b] {
      if (a->requires_grad) mmap(grad_of(a)) += cmap(n->grad) * cmap(b->val()).transpose();
      if (b->requires_grad) mmap(grad_of(b)) += cmap(a->val()).transpose() * cmap(n->grad);
    });
    return n;
  }

  // A * B^T; B is {n,k} with k matching A's cols
  Node* matmul_nt(Node* a, Node* b) {
    const auto& A = a->val();
    const auto& B = b->val();
    require(A.cols() == B.cols(), "matmul_nt", A, B);
    Node* n = make(a, b);
    n->owned = TensorT<F>::zeros(A.rows(), B.rows());
    mmap(n->owned) = cmap(A) * cmap(B).transpose();
    set_backprop(n, [this, n, a, b] {
      if (a->requires_grad) mmap(grad_of(a)) += cmap(n->grad) * cmap(b->val());
      if (b->requires_grad) mmap(grad_of(b)) += cmap(n->grad).transpose() * cmap(a->val());
    });
    return n;
  }

  // --- softmax family (row-wise, max-subtracted) ---

  Node* softmax_rows(Node* x) {
    Node* n = make(x);
    n->owned = x->val();
    for (int64_t r = 0; r < n->owned.rows(); ++r) {
      F best = n->owned.at(r, 0);
      for (int64_t c = 1; c < n->owned.cols(); ++c) best = std::max(best, n->owned.at(r, c));
      F z = F(0);
      for (int64_t c = 0; c < n->owned.cols(); ++c) {
        F e = std::exp(n->owned.at(r, c) - best);
        n->owned.at(r, c) = e;
        z += e;
      }
      for (int64_t c = 0; c < n->owned.cols(); ++c) n->owned.at(r, c) /= z;
    }
    set_backprop(n, [n, x] {
      if (!x->requires_grad) return;
      auto& gx = grad_of(x);
      for (int64_t r = 0; r < n->owned.rows(); ++r) {
        F dot = F(0);
        for (int64_t c = 0; c < n->owned.cols(); ++c) dot += n->grad.at(r, c) * n->owned.at(r, c);
        for (int64_t c = 0; c < n->owned.cols(); ++c)
          gx.at(r, c) += n->owned.at(r, c) * (n->grad.at(r, c) - dot);
      }
    });
    return n;
  }

  Node* log_softmax_rows(Node* x) {
    Node* n = make(x);
    n->owned = x->val();
    for (int64_t r = 0; r < n->owned.rows(); ++r) {
      F best = n->owned.at(r, 0);
      for (int64_t c = 1; c < n->owned.cols(); ++c) best = std::max(best, n->owned.at(r, c));
      F z = F(0);
      for (int64_t c = 0; c < n->owned.cols(); ++c) z += std::exp(n->owned.at(r, c) - best);
      F lz = std::log(z) + best;
      for (int64_t c = 0; c < n->owned.cols(); ++c) n->owned.at(r, c) -= lz;
    }
    set_backprop(n, [n, x] {
      if (!x->requires_grad) return;
      auto& gx = grad_of(x);
      for (int64_t r = 0; r < n->owned.rows(); ++r) {
        F sum = F(0);
        for (int64_t c = 0; c < n->owned.cols(); ++c) sum += n->grad.at(r, c);
        for (int64_t c = 0; c < n->owned.cols(); ++c)
          gx.at(r, c) += n->grad.at(r, c) - std::exp(n->owned.at(r, c)) * sum;
      }
    });
    return n;
  }

  // --- indexing / shaping ---

  Node* gather_rows(Node* table, std::vector<int> ids) {
    const auto& T = table->val();
    for (int id : ids)
      if (id < 0 || id >= T.rows())
        throw std::invalid_argument("gather_rows: id out of range for table " + T.shape_str());
    Node* n = make(table);
    n->owned = TensorT<F>::zeros(static_cast<int64_t>(ids.size()), T.cols());
    for (size_t i = 0; i < ids.size(); ++i)
      for (int64_t c = 0; c < T.cols(); ++c)
        n->owned.at(static_cast<int64_t>(i), c) = T.at(ids[i], c);
    set_backprop(n, [n, table, ids = std::move(ids)] {
      if (!table->requires_grad) return;
      auto& gt = grad_of(table);
      for (size_t i = 0; i < ids.size(); ++i)
        for (int64_t c = 0; c < gt.cols(); ++c)
          gt.at(ids[i], c) += n->grad.at(static_cast<int64_t>(i), c);
    });
    return n;
  }

  Node* concat_cols(Node* a, Node* b) {
    const auto& A = a->val();
    const auto& B = b->val();
    require(A.rows() == B.rows(), "concat_cols", A, B);
    Node* n = make(a, b);
    n->owned = TensorT<F>::zeros(A.rows(), A.cols() + B.cols());
    for (int64_t r = 0; r < A.rows(); ++r) {
      for (int64_t c = 0; c < A.cols(); ++c) n->owned.at(r, c) = A.at(r, c);
      for (int64_t c = 0; c < B.cols(); ++c) n->owned.at(r, A.cols() + c) = B.at(r, c);
    }
    set_backprop(n, [n, a, b] {
      int64_t ca = a->val().cols();
      if (a->requires_grad) {
        auto& ga = grad_of(a);
        for (int64_t r = 0; r < ga.rows(); ++r)
          for (int64_t c = 0; c < ga.cols(); ++c) ga.at(r, c) += n->grad.at(r, c);
      }
      if (b->requires_grad) {
        auto& gb = grad_of(b);
        for (int64_t r = 0; r < gb.rows(); ++r)
          for (int64_t c = 0; c < gb.cols(); ++c) gb.at(r, c) += n->grad.at(r, ca + c);
      }
    });
    return n;
  }

  Node* slice_cols(Node* x, int64_t start, int64_t len) {
    const auto& X = x->val();
    if (start < 0 || len < 1 || start + len > X.cols())
      throw std::invalid_argument("slice_cols: range out of bounds for " + X.shape_str());
    Node* n = make(x);
    n->owned = TensorT<F>::zeros(X.rows(), len);
    for (int64_t r = 0; r < X.rows(); ++r)
      for (int64_t c = 0; c < len; ++c) n->owned.at(r, c) = X.at(r, start + c);
    set_backprop(n, [n, x, start, len] {
      if (!x->requires_grad) return;
      auto& gx = grad_of(x);
      for (int64_t r = 0; r < gx.rows(); ++r)
        for (int64_t c = 0; c < len; ++c) gx.at(r, start + c) += n->grad.at(r, c);
    });
    return n;
  }

  Node* stack_rows(const std::vector<Node*>& rows) {
    if (rows.empty()) throw std::invalid_argument("stack_rows: no rows");
    int64_t c = rows[0]->val().cols();
    for (Node* r : rows)
      require(r->val().rows() == 1 && r->val().cols() == c, "stack_rows", rows[0]->val(), r->val());
    Node* n = fresh();
    n->owned = TensorT<F>::zeros(static_cast<int64_t>(rows.size()), c);
    for (size_t i = 0; i < rows.size(); ++i)
      for (int64_t j = 0; j < c; ++j) n->owned.at(static_cast<int64_t>(i), j) = rows[i]->val().at(0, j);
    n->value = &n->owned;
    for (Node* r : rows) n->requires_grad = n->requires_grad || r->requires_grad;
    if (n->requires_grad)
      n->backprop = [n, rows] {
        for (size_t i = 0; i < rows.size(); ++i) {
          if (!rows[i]->requires_grad) continue;
          auto& gr = grad_of(rows[i]);
          for (int64_t j = 0; j < gr.cols(); ++j)
            gr.at(0, j) += n->grad.at(static_cast<int64_t>(i), j);
        }
      };
    return n;
  }

  Node* reshape(Node* x, int64_t r, int64_t c) {
    const auto& X = x->val();
    if (r * c != static_cast<int64_t>(X.numel()))
      throw std::invalid_argument("reshape: element count mismatch for " + X.shape_str());
    Node* n = make(x);
    n->owned = X;
    n->owned.shape = {r, c};
    set_backprop(n, [n, x] {
      if (!x->requires_grad) return;
      auto& gx = grad_of(x);
      for (size_t i = 0; i < gx.data.size(); ++i) gx.data[i] += n->grad.data[i];
    });
    return n;
  }

  // --- reductions / selection ---

  Node* sum(Node* x) {
    Node* n = make(x);
    F acc = F(0);
    for (F v : x->val().data) acc += v;
    n->owned = TensorT<F>::full(1, 1, acc);
    set_backprop(n, [n, x] {
      if (!x->requires_grad) return;
      auto& gx = grad_of(x);
      for (auto& g : gx.data) g += n->grad.data[0];
    });
    return n;
  }

  Node* mean(Node* x) {
    Node* n = make(x);
    F acc = F(0);
    for (F v : x->val().data) acc += v;
    F inv = F(1) / static_cast<F>(x->val().numel());
    n->owned = TensorT<F>::full(1, 1, acc * inv);
    set_backprop(n, [n, x, inv] {
      if (!x->requires_grad) return;
      auto& gx = grad_of(x);
      for (auto& g : gx.data) g += n->grad.data[0] * inv;
    });
    return n;
  }

  // column-wise mean over rows -> {1, c}
  Node* mean_rows(Node* x) {
    const auto& X = x->val();
    Node* n = make(x);
    n->owned = TensorT<F>::zeros(1, X.cols());
    F inv = F(1) / static_cast<F>(X.rows());
    for (int64_t r = 0; r < X.rows(); ++r)
      for (int64_t c = 0; c < X.cols(); ++c) n->owned.at(0, c) += X.at(r, c) * inv;
    set_backprop(n, [n, x, inv] {
      if (!x->requires_grad) return;
      auto& gx = grad_of(x);
      for (int64_t r = 0; r < gx.rows(); ++r)
        for (int64_t c = 0; c < gx.cols(); ++c) gx.at(r, c) += n->grad.at(0, c) * inv;
    });
    return n;
  }

  Node* pick(Node* x, int64_t r, int64_t c) {
    const auto& X = x->val();
    if (r < 0 || r >= X.rows() || c < 0 || c >= X.cols())
      throw std::invalid_argument("pick: index out of bounds for " + X.shape_str());
    Node* n = make(x);
    n->owned = TensorT<F>::full(1, 1, X.at(r, c));
    set_backprop(n, [n, x, r, c] {
      if (!x->requires_grad) return;
      grad_of(x).at(r, c) += n->grad.data[0];
    });
    return n;
  }

  // --- backward ---

  void backward(Node* root) {
    if (root->val().numel() != 1)
      throw std::invalid_argument("backward: root must be a scalar, got " + root->val().shape_str());
    root->grad = TensorT<F>::full(1, 1, F(1));
    for (size_t i = tape_.size(); i-- > 0;) {
      Node* n = tape_[i].get();
      if (n->grad.empty() || !n->backprop) continue;
      n->backprop();
    }
  }

  // Adds parameter-node gradients into a named grad buffer map.
  void accumulate_param_grads(std::map<std::string, TensorT<F>>& grads) {
    for (const auto& [name, node] : param_nodes_) {
      if (node->grad.empty()) continue;
      auto it = grads.find(name);
      if (it == grads.end())
        it = grads.emplace(name, TensorT<F>::zeros(node->grad.rows(), node->grad.cols())).first;
      for (size_t i = 0; i < it->second.data.size(); ++i)
        it->second.data[i] += node->grad.data[i];
    }
  }

  void accumulate_param_grads(ParamStoreT<F>& store) { accumulate_param_grads(store.grads); }

  static TensorT<F>& grad_of(Node* n) {
    if (n->grad.empty()) n->grad = TensorT<F>::zeros(n->val().rows(), n->val().cols());
    return n->grad;
  }

  size_t size() const { return tape_.size(); }

private:
  Node* fresh() {
    tape_.push_back(std::make_unique<Node>());
    return tape_.back().get();
  }

  Node* make(Node* a, Node* b = nullptr) {
    Node* n = fresh();
    n->value = &n->owned;
    n->requires_grad = a->requires_grad || (b && b->requires_grad);
    return n;
  }

  template <typename Fn>
  void set_backprop(Node* n, Fn&& fn) {
    if (n->requires_grad) n->backprop = std::forward<Fn>(fn);
  }

  static void require(bool ok, const char* op, const TensorT<F>& a, const TensorT<F>& b) {
    if (!ok)
      throw std::invalid_argument(std::string(op) + ": incompatible shapes " + a.shape_str() +
                                  " vs " + b.shape_str());
  }

  CMap cmap(const TensorT<F>& t) const { return CMap(t.data.data(), t.rows(), t.cols()); }
  MMap mmap(TensorT<F>& t) const { return MMap(t.data.data(), t.rows(), t.cols()); }

  std::vector<std::unique_ptr<Node>> tape_;
  std::map<std::string, Node*> param_nodes_;
};

// One dropout mask per sequence, reused at every timestep; survivors are
// scaled by 1/(1-p). Identity when p == 0 or not training.
template <typename F>
std::vector<NodeT<F>*> variational_dropout(GraphT<F>& g, const std::vector<NodeT<F>*>& seq,
                                           double p, SplitRng rng, bool training) {
  if (p < 0.0 || p >= 1.0)
    throw std::invalid_argument("variational_dropout: p must lie in [0,1)");
  if (p == 0.0 || !training || seq.empty()) return seq;
  const auto& first = seq.front()->val();
  TensorT<F> mask(first.rows(), first.cols());
  F keep_scale = static_cast<F>(1.0 / (1.0 - p));
  for (auto& v : mask.data) v = rng.bernoulli(p) ? F(0) : keep_scale;
  auto* mask_node = g.input(std::move(mask));
  std::vector<NodeT<F>*> out;
  out.reserve(seq.size());
  for (auto* x : seq) out.push_back(g.mul(x, mask_node));
  return out;
}

}  // namespace gec
