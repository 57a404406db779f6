#pragma once

// Dense row-major tensors with reverse-mode automatic differentiation.
//
// A TensorT is a value-semantic handle onto a graph node. Ops build new nodes
// whose backprop closures accumulate gradients into their parents. backward()
// on a scalar walks the graph in reverse topological order. Gradients of leaf
// tensors (parameters, inputs created with requires_grad) accumulate across
// backward() calls until cleared; interior gradients are scratch per call.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "qv/common.hpp"

namespace qv {

namespace detail {

inline int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

inline std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

// C[M,N] += A[M,K] * B[K,N], all row-major. Register-blocked over 4 rows of
// A with k panels sized for cache residency of B. Per output cell the
// accumulation order is ascending k regardless of blocking or worker count,
// so results are bitwise reproducible.
template <class T>
void gemm_acc(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
  const int64_t flops_per_row = 2 * k * n;
  const int64_t grain = std::max<int64_t>(4, (1 << 22) / std::max<int64_t>(1, flops_per_row));
  parallel_for(m, grain, [&](int64_t lo, int64_t hi) {
    constexpr int64_t kPanel = 128;
    for (int64_t p0 = 0; p0 < k; p0 += kPanel) {
      const int64_t pmax = std::min(k, p0 + kPanel);
      int64_t i = lo;
      for (; i + 4 <= hi; i += 4) {
        const T* a0 = a + i * k;
        const T* a1 = a0 + k;
        const T* a2 = a1 + k;
        const T* a3 = a2 + k;
        T* c0 = c + i * n;
        T* c1 = c0 + n;
        T* c2 = c1 + n;
        T* c3 = c2 + n;
        for (int64_t p = p0; p < pmax; ++p) {
          const T v0 = a0[p], v1 = a1[p], v2 = a2[p], v3 = a3[p];
          const T* brow = b + p * n;
          for (int64_t j = 0; j < n; ++j) {
            const T bv = brow[j];
            c0[j] += v0 * bv;
            c1[j] += v1 * bv;
            c2[j] += v2 * bv;
            c3[j] += v3 * bv;
          }
        }
      }
      for (; i < hi; ++i) {
        const T* arow = a + i * k;
        T* crow = c + i * n;
        for (int64_t p = p0; p < pmax; ++p) {
          const T av = arow[p];
          const T* brow = b + p * n;
          for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
      }
    }
  });
}

template <class T>
void transpose_mat(const T* src, T* dst, int64_t rows, int64_t cols) {
  constexpr int64_t kBlock = 32;
  for (int64_t i0 = 0; i0 < rows; i0 += kBlock)
    for (int64_t j0 = 0; j0 < cols; j0 += kBlock) {
      const int64_t imax = std::min(rows, i0 + kBlock);
      const int64_t jmax = std::min(cols, j0 + kBlock);
      for (int64_t i = i0; i < imax; ++i)
        for (int64_t j = j0; j < jmax; ++j) dst[j * rows + i] = src[i * cols + j];
    }
}

}  // namespace detail

template <class T>
class TensorT {
 public:
  struct Node {
    std::vector<int> shape;
    std::vector<T> val;
    std::vector<T> grad;  // allocated lazily; persistent only for leaves
    bool needs_grad = false;
    bool leaf = true;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;
  };

  TensorT() = default;

  TensorT(std::vector<int> shape, std::vector<T> values, bool requires_grad = false) {
    if (detail::shape_numel(shape) != static_cast<int64_t>(values.size()))
      throw ContractError("tensor: shape " + detail::shape_str(shape) + " does not match " +
                          std::to_string(values.size()) + " values");
    for (int d : shape)
      if (d <= 0) throw ContractError("tensor: non-positive dimension in " + detail::shape_str(shape));
    n_ = std::make_shared<Node>();
    n_->shape = std::move(shape);
    n_->val = std::move(values);
    n_->needs_grad = requires_grad;
  }

  static TensorT zeros(std::vector<int> shape, bool requires_grad = false) {
    std::vector<T> v(detail::shape_numel(shape), T(0));
    return TensorT(std::move(shape), std::move(v), requires_grad);
  }

  static TensorT full(std::vector<int> shape, T value, bool requires_grad = false) {
    std::vector<T> v(detail::shape_numel(shape), value);
    return TensorT(std::move(shape), std::move(v), requires_grad);
  }

  static TensorT scalar(T value, bool requires_grad = false) {
    return TensorT({1}, {value}, requires_grad);
  }

  bool defined() const { return static_cast<bool>(n_); }
  const std::vector<int>& shape() const { return n_->shape; }
  int dim(int i) const { return n_->shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(n_->shape.size()); }
  int64_t size() const { return static_cast<int64_t>(n_->val.size()); }

  std::vector<T>& values() { return n_->val; }
  const std::vector<T>& values() const { return n_->val; }

  // Leaf gradient slot; empty until a backward pass has touched this tensor.
  const std::vector<T>& grad() const { return n_->grad; }

  bool requires_grad() const { return n_->needs_grad; }
  TensorT& set_requires_grad(bool on = true) {
    if (!n_->leaf && on) throw ContractError("requires_grad can only be set on leaf tensors");
    n_->needs_grad = on;
    return *this;
  }

  void zero_grad() {
    if (!n_->grad.empty()) std::fill(n_->grad.begin(), n_->grad.end(), T(0));
  }

  void clear_grad() { n_->grad.clear(); }

  T item() const {
    if (size() != 1) throw ContractError("item() requires a scalar tensor");
    return n_->val[0];
  }

  // Reverse-mode sweep from a scalar. Leaf gradients accumulate across calls;
  // calling twice without clearing doubles them.
  void backward() const {
    if (size() != 1)
      throw ContractError("backward() requires a scalar loss, got shape " +
                          detail::shape_str(n_->shape));
    if (!n_->needs_grad) return;

    // Iterative post-order DFS for the topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(n_.get(), 0);
    seen.insert(n_.get());
    while (!stack.empty()) {
      auto& [node, idx] = stack.back();
      if (idx < node->parents.size()) {
        Node* p = node->parents[idx].get();
        ++idx;
        if (p->needs_grad && !seen.count(p)) {
          seen.insert(p);
          stack.emplace_back(p, 0);
        }
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }

    for (Node* node : order) {
      if (node->leaf) {
        if (node->grad.empty()) node->grad.assign(node->val.size(), T(0));
      } else {
        node->grad.assign(node->val.size(), T(0));
      }
    }
    n_->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* node = *it;
      if (node->backprop) node->backprop(*node);
    }
  }

  std::shared_ptr<Node> node() const { return n_; }

  static TensorT wrap(std::shared_ptr<Node> n) {
    TensorT t;
    t.n_ = std::move(n);
    return t;
  }

 private:
  std::shared_ptr<Node> n_;
};

namespace detail {

template <class T>
TensorT<T> make_op(std::vector<int> shape, std::vector<T> val,
                   std::vector<TensorT<T>> parents,
                   std::function<void(typename TensorT<T>::Node&)> backprop) {
  using Node = typename TensorT<T>::Node;
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->val = std::move(val);
  n->leaf = false;
  for (auto& p : parents) {
    n->parents.push_back(p.node());
    if (p.requires_grad() || p.node()->needs_grad) n->needs_grad = true;
  }
  if (n->needs_grad) n->backprop = std::move(backprop);
  return TensorT<T>::wrap(std::move(n));
}

template <class T>
void axpy(std::vector<T>& dst, const std::vector<T>& src, T s = T(1)) {
  for (size_t i = 0; i < dst.size(); ++i) dst[i] += s * src[i];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and structural ops
// ---------------------------------------------------------------------------

template <class T>
void check_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw ContractError(std::string(op) + ": shape mismatch " + detail::shape_str(a.shape()) +
                        " vs " + detail::shape_str(b.shape()));
}

template <class T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  check_same_shape(a, b, "add");
  std::vector<T> out(a.values());
  detail::axpy(out, b.values());
  auto an = a.node(), bn = b.node();
  return detail::make_op<T>(
      a.shape(), std::move(out), {a, b}, [an, bn](typename TensorT<T>::Node& self) {
        if (an->needs_grad) detail::axpy(an->grad, self.grad);
        if (bn->needs_grad) detail::axpy(bn->grad, self.grad);
      });
}

template <class T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
  check_same_shape(a, b, "sub");
  std::vector<T> out(a.values());
  detail::axpy(out, b.values(), T(-1));
  auto an = a.node(), bn = b.node();
  return detail::make_op<T>(
      a.shape(), std::move(out), {a, b}, [an, bn](typename TensorT<T>::Node& self) {
        if (an->needs_grad) detail::axpy(an->grad, self.grad);
        if (bn->needs_grad) detail::axpy(bn->grad, self.grad, T(-1));
      });
}

template <class T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
  check_same_shape(a, b, "mul");
  std::vector<T> out(a.size());
  for (int64_t i = 0; i < a.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  auto an = a.node(), bn = b.node();
  return detail::make_op<T>(
      a.shape(), std::move(out), {a, b}, [an, bn](typename TensorT<T>::Node& self) {
        if (an->needs_grad)
          for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * bn->val[i];
        if (bn->needs_grad)
          for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i] * an->val[i];
      });
}

template <class T>
TensorT<T> scale(const TensorT<T>& a, T s) {
  std::vector<T> out(a.size());
  for (int64_t i = 0; i < a.size(); ++i) out[i] = a.values()[i] * s;
  auto an = a.node();
  return detail::make_op<T>(a.shape(), std::move(out), {a},
                            [an, s](typename TensorT<T>::Node& self) {
                              if (an->needs_grad) detail::axpy(an->grad, self.grad, s);
                            });
}

template <class T>
TensorT<T> neg(const TensorT<T>& a) {
  return scale(a, T(-1));
}

template <class T>
TensorT<T> square(const TensorT<T>& a) {
  return mul(a, a);
}

template <class T>
TensorT<T> sum_all(const TensorT<T>& a) {
  T s = T(0);
  for (T v : a.values()) s += v;
  auto an = a.node();
  return detail::make_op<T>({1}, {s}, {a}, [an](typename TensorT<T>::Node& self) {
    if (!an->needs_grad) return;
    const T g = self.grad[0];
    for (auto& v : an->grad) v += g;
  });
}

// b's shape must equal a trailing suffix of a's shape; b is broadcast across
// the leading dimensions.
template <class T>
TensorT<T> broadcast_add(const TensorT<T>& a, const TensorT<T>& b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  if (bs.size() > as.size() ||
      !std::equal(bs.begin(), bs.end(), as.end() - static_cast<int64_t>(bs.size())))
    throw ContractError("broadcast_add: " + detail::shape_str(bs) + " is not a suffix of " +
                        detail::shape_str(as));
  const int64_t inner = b.size();
  const int64_t outer = a.size() / inner;
  std::vector<T> out(a.values());
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t i = 0; i < inner; ++i) out[o * inner + i] += b.values()[i];
  auto an = a.node(), bn = b.node();
  return detail::make_op<T>(
      a.shape(), std::move(out), {a, b}, [an, bn, outer, inner](typename TensorT<T>::Node& self) {
        if (an->needs_grad) detail::axpy(an->grad, self.grad);
        if (bn->needs_grad)
          for (int64_t o = 0; o < outer; ++o)
            for (int64_t i = 0; i < inner; ++i) bn->grad[i] += self.grad[o * inner + i];
      });
}

template <class T>
TensorT<T> reshape(const TensorT<T>& a, std::vector<int> shape) {
  if (detail::shape_numel(shape) != a.size())
    throw ContractError("reshape: cannot view " + detail::shape_str(a.shape()) + " as " +
                        detail::shape_str(shape));
  auto an = a.node();
  return detail::make_op<T>(std::move(shape), std::vector<T>(a.values()), {a},
                            [an](typename TensorT<T>::Node& self) {
                              if (an->needs_grad) detail::axpy(an->grad, self.grad);
                            });
}

template <class T>
TensorT<T> permute(const TensorT<T>& a, const std::vector<int>& perm) {
  const int r = a.rank();
  if (static_cast<int>(perm.size()) != r) throw ContractError("permute: rank mismatch");
  std::vector<int> out_shape(r);
  for (int i = 0; i < r; ++i) out_shape[i] = a.shape()[perm[i]];

  std::vector<int64_t> in_strides(r, 1), out_strides(r, 1);
  for (int i = r - 2; i >= 0; --i) in_strides[i] = in_strides[i + 1] * a.shape()[i + 1];
  for (int i = r - 2; i >= 0; --i) out_strides[i] = out_strides[i + 1] * out_shape[i + 1];

  auto apply = [r, &perm](const std::vector<T>& src, std::vector<T>& dst,
                          const std::vector<int>& dst_shape,
                          const std::vector<int64_t>& src_strides) {
    const int64_t n = static_cast<int64_t>(src.size());
    std::vector<int64_t> idx(r, 0);
    for (int64_t o = 0; o < n; ++o) {
      int64_t src_off = 0;
      for (int i = 0; i < r; ++i) src_off += idx[i] * src_strides[perm[i]];
      dst[o] = src[src_off];
      for (int i = r - 1; i >= 0; --i) {
        if (++idx[i] < dst_shape[i]) break;
        idx[i] = 0;
      }
    }
  };

  std::vector<T> out(a.size());
  apply(a.values(), out, out_shape, in_strides);

  std::vector<int> inv(r);
  for (int i = 0; i < r; ++i) inv[perm[i]] = i;
  auto an = a.node();
  auto in_shape = a.shape();
  return detail::make_op<T>(
      out_shape, std::move(out), {a},
      [an, inv, in_shape, out_strides, in_strides, r](typename TensorT<T>::Node& self) {
        if (!an->needs_grad) return;
        // grad wrt input = inverse permutation of the output grad
        std::vector<int64_t> idx(r, 0);
        const int64_t n = static_cast<int64_t>(self.grad.size());
        for (int64_t o = 0; o < n; ++o) {
          int64_t dst_off = 0;
          for (int i = 0; i < r; ++i) dst_off += idx[i] * out_strides[inv[i]];
          an->grad[o] += self.grad[dst_off];
          for (int i = r - 1; i >= 0; --i) {
            if (++idx[i] < in_shape[i]) break;
            idx[i] = 0;
          }
        }
      });
}

template <class T>
TensorT<T> concat(const TensorT<T>& a, const TensorT<T>& b, int axis) {
  if (a.rank() != b.rank()) throw ContractError("concat: rank mismatch");
  const int r = a.rank();
  if (axis < 0 || axis >= r) throw ContractError("concat: bad axis");
  for (int i = 0; i < r; ++i)
    if (i != axis && a.shape()[i] != b.shape()[i])
      throw ContractError("concat: shape mismatch " + detail::shape_str(a.shape()) + " vs " +
                          detail::shape_str(b.shape()));
  std::vector<int> out_shape = a.shape();
  out_shape[axis] += b.shape()[axis];

  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= a.shape()[i];
  for (int i = axis + 1; i < r; ++i) inner *= a.shape()[i];
  const int64_t arow = a.shape()[axis] * inner;
  const int64_t brow = b.shape()[axis] * inner;

  std::vector<T> out(a.size() + b.size());
  for (int64_t o = 0; o < outer; ++o) {
    std::copy_n(a.values().data() + o * arow, arow, out.data() + o * (arow + brow));
    std::copy_n(b.values().data() + o * brow, brow, out.data() + o * (arow + brow) + arow);
  }
  auto an = a.node(), bn = b.node();
  return detail::make_op<T>(
      out_shape, std::move(out), {a, b},
      [an, bn, outer, arow, brow](typename TensorT<T>::Node& self) {
        for (int64_t o = 0; o < outer; ++o) {
          const T* g = self.grad.data() + o * (arow + brow);
          if (an->needs_grad)
            for (int64_t i = 0; i < arow; ++i) an->grad[o * arow + i] += g[i];
          if (bn->needs_grad)
            for (int64_t i = 0; i < brow; ++i) bn->grad[o * brow + i] += g[arow + i];
        }
      });
}

// Selects channels (axis 1 of an [N,C,...] tensor) in the given order.
template <class T>
TensorT<T> select_channels(const TensorT<T>& x, const std::vector<int>& indices) {
  if (x.rank() < 2) throw ContractError("select_channels: rank must be >= 2");
  const int n = x.shape()[0];
  const int c = x.shape()[1];
  int64_t inner = 1;
  for (int i = 2; i < x.rank(); ++i) inner *= x.shape()[i];
  for (int idx : indices)
    if (idx < 0 || idx >= c) throw ContractError("select_channels: index out of range");

  std::vector<int> out_shape = x.shape();
  out_shape[1] = static_cast<int>(indices.size());
  const int64_t k = static_cast<int64_t>(indices.size());
  std::vector<T> out(n * k * inner);
  for (int64_t b = 0; b < n; ++b)
    for (int64_t j = 0; j < k; ++j)
      std::copy_n(x.values().data() + (b * c + indices[j]) * inner, inner,
                  out.data() + (b * k + j) * inner);
  auto xn = x.node();
  return detail::make_op<T>(
      out_shape, std::move(out), {x},
      [xn, indices, n, c, k, inner](typename TensorT<T>::Node& self) {
        if (!xn->needs_grad) return;
        for (int64_t b = 0; b < n; ++b)
          for (int64_t j = 0; j < k; ++j) {
            T* dst = xn->grad.data() + (b * c + indices[j]) * inner;
            const T* src = self.grad.data() + (b * k + j) * inner;
            for (int64_t i = 0; i < inner; ++i) dst[i] += src[i];
          }
      });
}

// ---------------------------------------------------------------------------
// Matrix products
// ---------------------------------------------------------------------------

template <class T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0])
    throw ContractError("matmul: incompatible shapes " + detail::shape_str(a.shape()) + " x " +
                        detail::shape_str(b.shape()));
  const int64_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<T> out(m * n, T(0));
  detail::gemm_acc(a.values().data(), b.values().data(), out.data(), m, k, n);
  auto an = a.node(), bn = b.node();
  return detail::make_op<T>(
      {static_cast<int>(m), static_cast<int>(n)}, std::move(out), {a, b},
      [an, bn, m, k, n](typename TensorT<T>::Node& self) {
        if (an->needs_grad) {
          // dA += g * B^T
          std::vector<T> bt(k * n);
          detail::transpose_mat(bn->val.data(), bt.data(), k, n);
          detail::gemm_acc(self.grad.data(), bt.data(), an->grad.data(), m, n, k);
        }
        if (bn->needs_grad) {
          // dB += A^T * g
          std::vector<T> at(m * k);
          detail::transpose_mat(an->val.data(), at.data(), m, k);
          detail::gemm_acc(at.data(), self.grad.data(), bn->grad.data(), k, m, n);
        }
      });
}

template <class T>
TensorT<T> bmm(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.shape()[0] != b.shape()[0] ||
      a.shape()[2] != b.shape()[1])
    throw ContractError("bmm: incompatible shapes " + detail::shape_str(a.shape()) + " x " +
                        detail::shape_str(b.shape()));
  const int64_t bs = a.shape()[0], m = a.shape()[1], k = a.shape()[2], n = b.shape()[2];
  std::vector<T> out(bs * m * n, T(0));
  for (int64_t i = 0; i < bs; ++i)
    detail::gemm_acc(a.values().data() + i * m * k, b.values().data() + i * k * n,
                     out.data() + i * m * n, m, k, n);
  auto an = a.node(), bn = b.node();
  return detail::make_op<T>(
      {static_cast<int>(bs), static_cast<int>(m), static_cast<int>(n)}, std::move(out), {a, b},
      [an, bn, bs, m, k, n](typename TensorT<T>::Node& self) {
        std::vector<T> scratch;
        for (int64_t i = 0; i < bs; ++i) {
          const T* g = self.grad.data() + i * m * n;
          if (an->needs_grad) {
            scratch.resize(k * n);
            detail::transpose_mat(bn->val.data() + i * k * n, scratch.data(), k, n);
            detail::gemm_acc(g, scratch.data(), an->grad.data() + i * m * k, m, n, k);
          }
          if (bn->needs_grad) {
            scratch.resize(m * k);
            detail::transpose_mat(an->val.data() + i * m * k, scratch.data(), m, k);
            detail::gemm_acc(scratch.data(), g, bn->grad.data() + i * k * n, k, m, n);
          }
        }
      });
}

using Tensor = TensorT<float>;
using DTensor = TensorT<double>;

}  // namespace qv
