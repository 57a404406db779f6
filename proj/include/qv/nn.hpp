#pragma once

// Layer set on top of the autodiff tensor: convolution, batch/layer norm,
// max pooling, linear, softmax, multi-head self-attention, cross-entropy,
// and an Adam optimizer. Functional ops first, thin parameter-owning layer
// classes below.

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "qv/tensor.hpp"

namespace qv::nn {

template <class T>
struct ParameterT {
  std::string name;
  TensorT<T> value;

  ParameterT() = default;
  ParameterT(std::string n, TensorT<T> v) : name(std::move(n)), value(std::move(v)) {
    value.set_requires_grad(true);
  }
};

// ---------------------------------------------------------------------------
// Activations and normalizations
// ---------------------------------------------------------------------------

template <class T>
TensorT<T> relu(const TensorT<T>& x) {
  std::vector<T> out(x.size());
  for (int64_t i = 0; i < x.size(); ++i) out[i] = x.values()[i] > T(0) ? x.values()[i] : T(0);
  auto xn = x.node();
  return detail::make_op<T>(x.shape(), std::move(out), {x},
                            [xn](typename TensorT<T>::Node& self) {
                              if (!xn->needs_grad) return;
                              for (size_t i = 0; i < self.grad.size(); ++i)
                                if (xn->val[i] > T(0)) xn->grad[i] += self.grad[i];
                            });
}

// Numerically stable softmax along `axis` (max subtraction per slice).
template <class T>
TensorT<T> softmax(const TensorT<T>& x, int axis) {
  const int r = x.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ContractError("softmax: bad axis");
  int64_t outer = 1, inner = 1;
  const int64_t n = x.shape()[axis];
  for (int i = 0; i < axis; ++i) outer *= x.shape()[i];
  for (int i = axis + 1; i < r; ++i) inner *= x.shape()[i];

  std::vector<T> out(x.size());
  const T* in = x.values().data();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t c = 0; c < inner; ++c) {
      const int64_t base = o * n * inner + c;
      T mx = in[base];
      for (int64_t i = 1; i < n; ++i) mx = std::max(mx, in[base + i * inner]);
      T denom = T(0);
      for (int64_t i = 0; i < n; ++i) {
        const T e = std::exp(in[base + i * inner] - mx);
        out[base + i * inner] = e;
        denom += e;
      }
      for (int64_t i = 0; i < n; ++i) out[base + i * inner] /= denom;
    }
  auto xn = x.node();
  return detail::make_op<T>(
      x.shape(), std::move(out), {x}, [xn, outer, n, inner](typename TensorT<T>::Node& self) {
        if (!xn->needs_grad) return;
        for (int64_t o = 0; o < outer; ++o)
          for (int64_t c = 0; c < inner; ++c) {
            const int64_t base = o * n * inner + c;
            T dot = T(0);
            for (int64_t i = 0; i < n; ++i)
              dot += self.grad[base + i * inner] * self.val[base + i * inner];
            for (int64_t i = 0; i < n; ++i) {
              const int64_t k = base + i * inner;
              xn->grad[k] += self.val[k] * (self.grad[k] - dot);
            }
          }
      });
}

// Layer normalization over the last dimension (biased variance, eps inside
// the square root).
template <class T>
TensorT<T> layer_norm(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                      T eps = T(1e-5)) {
  const int d = x.shape().back();
  if (gamma.size() != d || beta.size() != d)
    throw ContractError("layer_norm: gamma/beta must have size equal to the last dim");
  const int64_t slices = x.size() / d;

  std::vector<T> out(x.size());
  std::vector<T> inv_std(slices), mean(slices);
  const T* in = x.values().data();
  const T* g = gamma.values().data();
  const T* b = beta.values().data();
  for (int64_t s = 0; s < slices; ++s) {
    const T* row = in + s * d;
    T m = T(0);
    for (int i = 0; i < d; ++i) m += row[i];
    m /= T(d);
    T var = T(0);
    for (int i = 0; i < d; ++i) {
      const T c = row[i] - m;
      var += c * c;
    }
    var /= T(d);
    const T is = T(1) / std::sqrt(var + eps);
    mean[s] = m;
    inv_std[s] = is;
    T* orow = out.data() + s * d;
    for (int i = 0; i < d; ++i) orow[i] = (row[i] - m) * is * g[i] + b[i];
  }
  auto xn = x.node(), gn = gamma.node(), bn = beta.node();
  return detail::make_op<T>(
      x.shape(), std::move(out), {x, gamma, beta},
      [xn, gn, bn, mean, inv_std, slices, d](typename TensorT<T>::Node& self) {
        for (int64_t s = 0; s < slices; ++s) {
          const T* xrow = xn->val.data() + s * d;
          const T* grow = self.grad.data() + s * d;
          const T m = mean[s], is = inv_std[s];
          if (gn->needs_grad || bn->needs_grad) {
            for (int i = 0; i < d; ++i) {
              const T xhat = (xrow[i] - m) * is;
              if (gn->needs_grad) gn->grad[i] += grow[i] * xhat;
              if (bn->needs_grad) bn->grad[i] += grow[i];
            }
          }
          if (xn->needs_grad) {
            T sum_dxhat = T(0), sum_dxhat_xhat = T(0);
            for (int i = 0; i < d; ++i) {
              const T xhat = (xrow[i] - m) * is;
              const T dxhat = grow[i] * gn->val[i];
              sum_dxhat += dxhat;
              sum_dxhat_xhat += dxhat * xhat;
            }
            const T inv_d = T(1) / T(d);
            for (int i = 0; i < d; ++i) {
              const T xhat = (xrow[i] - m) * is;
              const T dxhat = grow[i] * gn->val[i];
              xn->grad[s * d + i] +=
                  is * (dxhat - inv_d * sum_dxhat - xhat * inv_d * sum_dxhat_xhat);
            }
          }
        }
      });
}

// Batch normalization over (N, H, W) per channel of an [N,C,H,W] tensor.
// Training mode uses batch statistics (biased variance) and updates the
// running stats in place with `momentum` (unbiased variance estimate, as is
// conventional). Eval mode normalizes with the running stats.
template <class T>
TensorT<T> batch_norm2d(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                        std::vector<T>& running_mean, std::vector<T>& running_var, bool training,
                        T momentum = T(0.1), T eps = T(1e-5)) {
  if (x.rank() != 4) throw ContractError("batch_norm2d: expected [N,C,H,W]");
  const int64_t n = x.shape()[0], c = x.shape()[1];
  const int64_t hw = static_cast<int64_t>(x.shape()[2]) * x.shape()[3];
  if (gamma.size() != c || beta.size() != c ||
      running_mean.size() != static_cast<size_t>(c) ||
      running_var.size() != static_cast<size_t>(c))
    throw ContractError("batch_norm2d: per-channel parameter size mismatch");
  const int64_t m = n * hw;
  if (training && m < 2)
    throw ContractError("batch_norm2d: degenerate batch (need at least 2 values per channel "
                        "in training mode)");

  std::vector<T> mean(c), inv_std(c);
  const T* in = x.values().data();
  if (training) {
    for (int64_t ch = 0; ch < c; ++ch) {
      T s = T(0);
      for (int64_t b = 0; b < n; ++b) {
        const T* p = in + (b * c + ch) * hw;
        for (int64_t i = 0; i < hw; ++i) s += p[i];
      }
      const T mu = s / T(m);
      T var = T(0);
      for (int64_t b = 0; b < n; ++b) {
        const T* p = in + (b * c + ch) * hw;
        for (int64_t i = 0; i < hw; ++i) {
          const T d = p[i] - mu;
          var += d * d;
        }
      }
      var /= T(m);
      mean[ch] = mu;
      inv_std[ch] = T(1) / std::sqrt(var + eps);
      const T unbiased = var * T(m) / T(m - 1);
      running_mean[ch] = (T(1) - momentum) * running_mean[ch] + momentum * mu;
      running_var[ch] = (T(1) - momentum) * running_var[ch] + momentum * unbiased;
    }
  } else {
    for (int64_t ch = 0; ch < c; ++ch) {
      mean[ch] = running_mean[ch];
      inv_std[ch] = T(1) / std::sqrt(running_var[ch] + eps);
    }
  }

  std::vector<T> out(x.size());
  const T* g = gamma.values().data();
  const T* be = beta.values().data();
  for (int64_t b = 0; b < n; ++b)
    for (int64_t ch = 0; ch < c; ++ch) {
      const T* p = in + (b * c + ch) * hw;
      T* o = out.data() + (b * c + ch) * hw;
      const T mu = mean[ch], is = inv_std[ch], gc = g[ch], bc = be[ch];
      for (int64_t i = 0; i < hw; ++i) o[i] = (p[i] - mu) * is * gc + bc;
    }

  auto xn = x.node(), gn = gamma.node(), bn = beta.node();
  return detail::make_op<T>(
      x.shape(), std::move(out), {x, gamma, beta},
      [xn, gn, bn, mean, inv_std, n, c, hw, training](typename TensorT<T>::Node& self) {
        const int64_t m = n * hw;
        for (int64_t ch = 0; ch < c; ++ch) {
          const T mu = mean[ch], is = inv_std[ch], gc = gn->val[ch];
          T sum_g = T(0), sum_g_xhat = T(0);
          for (int64_t b = 0; b < n; ++b) {
            const T* xp = xn->val.data() + (b * c + ch) * hw;
            const T* gp = self.grad.data() + (b * c + ch) * hw;
            for (int64_t i = 0; i < hw; ++i) {
              sum_g += gp[i];
              sum_g_xhat += gp[i] * (xp[i] - mu) * is;
            }
          }
          if (gn->needs_grad) gn->grad[ch] += sum_g_xhat;
          if (bn->needs_grad) bn->grad[ch] += sum_g;
          if (!xn->needs_grad) continue;
          if (training) {
            const T inv_m = T(1) / T(m);
            for (int64_t b = 0; b < n; ++b) {
              const T* xp = xn->val.data() + (b * c + ch) * hw;
              const T* gp = self.grad.data() + (b * c + ch) * hw;
              T* dp = xn->grad.data() + (b * c + ch) * hw;
              for (int64_t i = 0; i < hw; ++i) {
                const T xhat = (xp[i] - mu) * is;
                dp[i] += gc * is * (gp[i] - inv_m * sum_g - xhat * inv_m * sum_g_xhat);
              }
            }
          } else {
            for (int64_t b = 0; b < n; ++b) {
              const T* gp = self.grad.data() + (b * c + ch) * hw;
              T* dp = xn->grad.data() + (b * c + ch) * hw;
              for (int64_t i = 0; i < hw; ++i) dp[i] += gc * is * gp[i];
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Convolution (stride 1, odd kernel, zero-padded to the same spatial size)
// ---------------------------------------------------------------------------

namespace conv_detail {

// Gathers the [Cin*kh*kw, H*W] patch matrix for one sample, zero padding
// outside the image.
template <class T>
void im2col(const T* x, int cin, int h, int w, int kh, int kw, T* col) {
  const int ph = kh / 2, pw = kw / 2;
  int64_t row = 0;
  for (int ci = 0; ci < cin; ++ci)
    for (int dy = -ph; dy <= ph; ++dy)
      for (int dx = -pw; dx <= pw; ++dx, ++row) {
        T* out = col + row * (static_cast<int64_t>(h) * w);
        const T* img = x + static_cast<int64_t>(ci) * h * w;
        for (int y = 0; y < h; ++y) {
          const int sy = y + dy;
          T* orow = out + static_cast<int64_t>(y) * w;
          if (sy < 0 || sy >= h) {
            std::fill(orow, orow + w, T(0));
            continue;
          }
          const T* irow = img + static_cast<int64_t>(sy) * w;
          for (int x2 = 0; x2 < w; ++x2) {
            const int sx = x2 + dx;
            orow[x2] = (sx < 0 || sx >= w) ? T(0) : irow[sx];
          }
        }
      }
}

// Scatter-add of a patch matrix back into an image (adjoint of im2col).
template <class T>
void col2im_acc(const T* col, int cin, int h, int w, int kh, int kw, T* x) {
  const int ph = kh / 2, pw = kw / 2;
  int64_t row = 0;
  for (int ci = 0; ci < cin; ++ci)
    for (int dy = -ph; dy <= ph; ++dy)
      for (int dx = -pw; dx <= pw; ++dx, ++row) {
        const T* in = col + row * (static_cast<int64_t>(h) * w);
        T* img = x + static_cast<int64_t>(ci) * h * w;
        for (int y = 0; y < h; ++y) {
          const int sy = y + dy;
          if (sy < 0 || sy >= h) continue;
          const T* irow = in + static_cast<int64_t>(y) * w;
          T* orow = img + static_cast<int64_t>(sy) * w;
          for (int x2 = 0; x2 < w; ++x2) {
            const int sx = x2 + dx;
            if (sx >= 0 && sx < w) orow[sx] += irow[x2];
          }
        }
      }
}

}  // namespace conv_detail

// Cross-correlation of x[N,Cin,H,W] with w[Cout,Cin,kh,kw] plus bias[Cout].
template <class T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
  if (x.rank() != 4 || w.rank() != 4)
    throw ContractError("conv2d: expected x[N,Cin,H,W] and w[Cout,Cin,kh,kw]");
  const int n = x.shape()[0], cin = x.shape()[1], h = x.shape()[2], wd = x.shape()[3];
  const int cout = w.shape()[0], kh = w.shape()[2], kw = w.shape()[3];
  if (w.shape()[1] != cin)
    throw ContractError("conv2d: input has " + std::to_string(cin) + " channels but kernel expects " +
                        std::to_string(w.shape()[1]));
  if (kh % 2 == 0 || kw % 2 == 0)
    throw ContractError("conv2d: kernel dims must be odd for same padding, got " +
                        std::to_string(kh) + "x" + std::to_string(kw));
  if (b.size() != cout) throw ContractError("conv2d: bias size must equal Cout");

  const int64_t ckk = static_cast<int64_t>(cin) * kh * kw;
  const int64_t hw = static_cast<int64_t>(h) * wd;
  std::vector<T> out(static_cast<int64_t>(n) * cout * hw);
  std::vector<T> col(ckk * hw);
  for (int i = 0; i < n; ++i) {
    conv_detail::im2col(x.values().data() + static_cast<int64_t>(i) * cin * hw, cin, h, wd, kh, kw,
                        col.data());
    T* y = out.data() + static_cast<int64_t>(i) * cout * hw;
    for (int co = 0; co < cout; ++co)
      std::fill(y + static_cast<int64_t>(co) * hw, y + static_cast<int64_t>(co + 1) * hw,
                b.values()[co]);
    detail::gemm_acc(w.values().data(), col.data(), y, cout, ckk, hw);
  }

  auto xn = x.node(), wn = w.node(), bn = b.node();
  return detail::make_op<T>(
      {n, cout, h, wd}, std::move(out), {x, w, b},
      [xn, wn, bn, n, cin, h, wd, cout, kh, kw](typename TensorT<T>::Node& self) {
        const int64_t ckk = static_cast<int64_t>(cin) * kh * kw;
        const int64_t hw = static_cast<int64_t>(h) * wd;
        std::vector<T> col, colt, wt, dcol;
        if (xn->needs_grad || wn->needs_grad) col.resize(ckk * hw);
        if (wn->needs_grad) colt.resize(ckk * hw);
        if (xn->needs_grad) {
          wt.resize(ckk * cout);
          detail::transpose_mat(wn->val.data(), wt.data(), cout, ckk);
          dcol.resize(ckk * hw);
        }
        for (int i = 0; i < n; ++i) {
          const T* g = self.grad.data() + static_cast<int64_t>(i) * cout * hw;
          if (bn->needs_grad) {
            for (int co = 0; co < cout; ++co) {
              T s = T(0);
              const T* gp = g + static_cast<int64_t>(co) * hw;
              for (int64_t j = 0; j < hw; ++j) s += gp[j];
              bn->grad[co] += s;
            }
          }
          if (xn->needs_grad || wn->needs_grad)
            conv_detail::im2col(xn->val.data() + static_cast<int64_t>(i) * cin * hw, cin, h, wd,
                                kh, kw, col.data());
          if (wn->needs_grad) {
            // dW += g * col^T
            detail::transpose_mat(col.data(), colt.data(), ckk, hw);
            detail::gemm_acc(g, colt.data(), wn->grad.data(), cout, hw, ckk);
          }
          if (xn->needs_grad) {
            // dX += col2im(W^T * g)
            std::fill(dcol.begin(), dcol.end(), T(0));
            detail::gemm_acc(wt.data(), g, dcol.data(), ckk, cout, hw);
            conv_detail::col2im_acc(dcol.data(), cin, h, wd, kh, kw,
                                    xn->grad.data() + static_cast<int64_t>(i) * cin * hw);
          }
        }
      });
}

// 2x2 max pooling with stride 2 and ceil-mode output size; out-of-range
// positions act as -inf. Gradient routes to the first occurrence of the max
// in row-major window order.
template <class T>
TensorT<T> max_pool2d(const TensorT<T>& x) {
  if (x.rank() != 4) throw ContractError("max_pool2d: expected [N,C,H,W]");
  const int n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  const int oh = (h + 1) / 2, ow = (w + 1) / 2;
  std::vector<T> out(static_cast<int64_t>(n) * c * oh * ow);
  std::vector<int64_t> argmax(out.size());
  const T* in = x.values().data();
  int64_t oi = 0;
  for (int64_t img = 0; img < static_cast<int64_t>(n) * c; ++img) {
    const T* p = in + img * h * w;
    for (int y = 0; y < oh; ++y)
      for (int xx = 0; xx < ow; ++xx, ++oi) {
        T best = -std::numeric_limits<T>::infinity();
        int64_t best_idx = -1;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const int sy = 2 * y + dy, sx = 2 * xx + dx;
            if (sy >= h || sx >= w) continue;
            const int64_t idx = static_cast<int64_t>(sy) * w + sx;
            if (p[idx] > best) {
              best = p[idx];
              best_idx = idx;
            }
          }
        out[oi] = best;
        argmax[oi] = img * h * w + best_idx;
      }
  }
  auto xn = x.node();
  return detail::make_op<T>({n, c, oh, ow}, std::move(out), {x},
                            [xn, argmax](typename TensorT<T>::Node& self) {
                              if (!xn->needs_grad) return;
                              for (size_t i = 0; i < self.grad.size(); ++i)
                                xn->grad[argmax[i]] += self.grad[i];
                            });
}

// y = x @ W + b for x[..., d], W[d, e], b[e]; leading dims are preserved.
template <class T>
TensorT<T> linear(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
  if (w.rank() != 2) throw ContractError("linear: weight must be [d,e]");
  const int d = w.shape()[0], e = w.shape()[1];
  if (x.shape().back() != d)
    throw ContractError("linear: input last dim " + std::to_string(x.shape().back()) +
                        " != weight rows " + std::to_string(d));
  if (b.size() != e) throw ContractError("linear: bias size must equal output dim");
  const int64_t rows = x.size() / d;

  std::vector<T> out(rows * e);
  for (int64_t r = 0; r < rows; ++r)
    for (int j = 0; j < e; ++j) out[r * e + j] = b.values()[j];
  detail::gemm_acc(x.values().data(), w.values().data(), out.data(), rows, d, e);

  std::vector<int> out_shape = x.shape();
  out_shape.back() = e;
  auto xn = x.node(), wn = w.node(), bn = b.node();
  return detail::make_op<T>(
      out_shape, std::move(out), {x, w, b},
      [xn, wn, bn, rows, d, e](typename TensorT<T>::Node& self) {
        if (bn->needs_grad)
          for (int64_t r = 0; r < rows; ++r)
            for (int j = 0; j < e; ++j) bn->grad[j] += self.grad[r * e + j];
        if (xn->needs_grad) {
          std::vector<T> wt(static_cast<int64_t>(d) * e);
          detail::transpose_mat(wn->val.data(), wt.data(), d, e);
          detail::gemm_acc(self.grad.data(), wt.data(), xn->grad.data(), rows, e, d);
        }
        if (wn->needs_grad) {
          std::vector<T> xt(rows * d);
          detail::transpose_mat(xn->val.data(), xt.data(), rows, d);
          detail::gemm_acc(xt.data(), self.grad.data(), wn->grad.data(), d, rows, e);
        }
      });
}

// ---------------------------------------------------------------------------
// Attention
// ---------------------------------------------------------------------------

// Scaled dot-product multi-head self-attention over x[N,T,d]. Composed from
// gradient-checked primitives, so the whole op is exactly differentiable.
template <class T>
TensorT<T> multi_head_attention(const TensorT<T>& x, int heads, const TensorT<T>& wq,
                                const TensorT<T>& bq, const TensorT<T>& wk, const TensorT<T>& bk,
                                const TensorT<T>& wv, const TensorT<T>& bv, const TensorT<T>& wo,
                                const TensorT<T>& bo) {
  if (x.rank() != 3) throw ContractError("attention: expected [N,T,d]");
  const int n = x.shape()[0], t = x.shape()[1], d = x.shape()[2];
  if (d % heads != 0)
    throw ContractError("attention: embed dim " + std::to_string(d) + " not divisible by " +
                        std::to_string(heads) + " heads");
  const int dh = d / heads;

  auto split_heads = [&](TensorT<T> y) {
    y = reshape(y, {n, t, heads, dh});
    y = permute(y, {0, 2, 1, 3});
    return reshape(y, {n * heads, t, dh});
  };
  auto q = split_heads(linear(x, wq, bq));
  auto k = split_heads(linear(x, wk, bk));
  auto v = split_heads(linear(x, wv, bv));

  auto scores = scale(bmm(q, permute(k, {0, 2, 1})), T(1) / std::sqrt(static_cast<T>(dh)));
  auto attn = softmax(scores, 2);
  auto ctx = bmm(attn, v);
  ctx = reshape(ctx, {n, heads, t, dh});
  ctx = permute(ctx, {0, 2, 1, 3});
  ctx = reshape(ctx, {n, t, d});
  return linear(ctx, wo, bo);
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

// Mean (optionally class-weighted) negative log-likelihood of the labels
// under softmax(logits). logits: [N, C]; labels in [0, C).
template <class T>
TensorT<T> cross_entropy(const TensorT<T>& logits, const std::vector<int>& labels,
                         const std::vector<T>& class_weights = {}) {
  if (logits.rank() != 2) throw ContractError("cross_entropy: expected logits [N,C]");
  const int n = logits.shape()[0], c = logits.shape()[1];
  if (static_cast<int>(labels.size()) != n)
    throw ContractError("cross_entropy: got " + std::to_string(labels.size()) + " labels for " +
                        std::to_string(n) + " rows");
  if (!class_weights.empty() && static_cast<int>(class_weights.size()) != c)
    throw ContractError("cross_entropy: class weight count must equal class count");
  for (int y : labels)
    if (y < 0 || y >= c)
      throw ContractError("cross_entropy: label " + std::to_string(y) + " out of range [0," +
                          std::to_string(c) + ")");

  std::vector<T> probs(static_cast<int64_t>(n) * c);
  std::vector<T> wts(n, T(1));
  T wsum = T(0), loss = T(0);
  const T* in = logits.values().data();
  for (int i = 0; i < n; ++i) {
    const T* row = in + static_cast<int64_t>(i) * c;
    T mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    T denom = T(0);
    for (int j = 0; j < c; ++j) denom += std::exp(row[j] - mx);
    const T lse = mx + std::log(denom);
    for (int j = 0; j < c; ++j) probs[static_cast<int64_t>(i) * c + j] = std::exp(row[j] - lse);
    const T w = class_weights.empty() ? T(1) : class_weights[labels[i]];
    wts[i] = w;
    wsum += w;
    loss += w * (lse - row[labels[i]]);
  }
  loss /= wsum;

  auto ln = logits.node();
  return detail::make_op<T>(
      {1}, {loss}, {logits}, [ln, probs, labels, wts, wsum, n, c](typename TensorT<T>::Node& self) {
        if (!ln->needs_grad) return;
        const T g = self.grad[0] / wsum;
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < c; ++j) {
            const int64_t k = static_cast<int64_t>(i) * c + j;
            const T onehot = (j == labels[i]) ? T(1) : T(0);
            ln->grad[k] += g * wts[i] * (probs[k] - onehot);
          }
      });
}

// ---------------------------------------------------------------------------
// Parameter initialization and layers
// ---------------------------------------------------------------------------

template <class T>
TensorT<T> kaiming_uniform(std::vector<int> shape, int64_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<T> v(detail::shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(rng.uniform(-bound, bound));
  return TensorT<T>(std::move(shape), std::move(v));
}

template <class T>
class Conv2dT {
 public:
  Conv2dT(const std::string& name, int cin, int cout, int k, Rng& rng)
      : weight(name + ".weight",
               kaiming_uniform<T>({cout, cin, k, k}, static_cast<int64_t>(cin) * k * k, rng)),
        bias(name + ".bias", TensorT<T>::zeros({cout})) {}

  TensorT<T> forward(const TensorT<T>& x) const { return conv2d(x, weight.value, bias.value); }

  void collect(std::vector<ParameterT<T>*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }

  ParameterT<T> weight, bias;
};

template <class T>
class LinearT {
 public:
  LinearT(const std::string& name, int d, int e, Rng& rng)
      : weight(name + ".weight", kaiming_uniform<T>({d, e}, d, rng)),
        bias(name + ".bias", TensorT<T>::zeros({e})) {}

  TensorT<T> forward(const TensorT<T>& x) const { return linear(x, weight.value, bias.value); }

  void collect(std::vector<ParameterT<T>*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }

  ParameterT<T> weight, bias;
};

template <class T>
class BatchNorm2dT {
 public:
  BatchNorm2dT(const std::string& name, int channels)
      : gamma(name + ".gamma", TensorT<T>::full({channels}, T(1))),
        beta(name + ".beta", TensorT<T>::zeros({channels})),
        running_mean(channels, T(0)),
        running_var(channels, T(1)),
        name_(name) {}

  TensorT<T> forward(const TensorT<T>& x, bool training) {
    return batch_norm2d(x, gamma.value, beta.value, running_mean, running_var, training);
  }

  void collect(std::vector<ParameterT<T>*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }

  const std::string& name() const { return name_; }

  ParameterT<T> gamma, beta;
  std::vector<T> running_mean, running_var;

 private:
  std::string name_;
};

template <class T>
class LayerNormT {
 public:
  LayerNormT(const std::string& name, int d)
      : gamma(name + ".gamma", TensorT<T>::full({d}, T(1))),
        beta(name + ".beta", TensorT<T>::zeros({d})) {}

  TensorT<T> forward(const TensorT<T>& x) const { return layer_norm(x, gamma.value, beta.value); }

  void collect(std::vector<ParameterT<T>*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }

  ParameterT<T> gamma, beta;
};

template <class T>
class MultiHeadAttentionT {
 public:
  MultiHeadAttentionT(const std::string& name, int d, int heads, Rng& rng)
      : heads_(heads),
        wq(name + ".wq", d, d, rng),
        wk(name + ".wk", d, d, rng),
        wv(name + ".wv", d, d, rng),
        wo(name + ".wo", d, d, rng) {}

  TensorT<T> forward(const TensorT<T>& x) const {
    return multi_head_attention(x, heads_, wq.weight.value, wq.bias.value, wk.weight.value,
                                wk.bias.value, wv.weight.value, wv.bias.value, wo.weight.value,
                                wo.bias.value);
  }

  void collect(std::vector<ParameterT<T>*>& out) {
    wq.collect(out);
    wk.collect(out);
    wv.collect(out);
    wo.collect(out);
  }

  int heads() const { return heads_; }

 private:
  int heads_;

 public:
  LinearT<T> wq, wk, wv, wo;
};

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

template <class T>
class AdamT {
 public:
  explicit AdamT(std::vector<ParameterT<T>*> params, T lr = T(1e-4), T beta1 = T(0.9),
                 T beta2 = T(0.999), T eps = T(1e-8))
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(params_[i]->value.size(), T(0));
      v_[i].assign(params_[i]->value.size(), T(0));
    }
  }

  // Bias-corrected Adam update from the accumulated gradients, then clears
  // them. A missing gradient counts as zero.
  void step() {
    ++t_;
    const T bc1 = T(1) - std::pow(beta1_, static_cast<T>(t_));
    const T bc2 = T(1) - std::pow(beta2_, static_cast<T>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i]->value;
      auto& val = p.values();
      const auto& g = p.grad();
      auto& m = m_[i];
      auto& v = v_[i];
      for (size_t j = 0; j < val.size(); ++j) {
        const T gj = g.empty() ? T(0) : g[j];
        m[j] = beta1_ * m[j] + (T(1) - beta1_) * gj;
        v[j] = beta2_ * v[j] + (T(1) - beta2_) * gj * gj;
        const T mhat = m[j] / bc1;
        const T vhat = v[j] / bc2;
        val[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
      p.zero_grad();
    }
  }

  int64_t step_count() const { return t_; }
  T lr() const { return lr_; }

 private:
  std::vector<ParameterT<T>*> params_;
  std::vector<std::vector<T>> m_, v_;
  T lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

using Parameter = ParameterT<float>;
using Conv2d = Conv2dT<float>;
using Linear = LinearT<float>;
using BatchNorm2d = BatchNorm2dT<float>;
using LayerNorm = LayerNormT<float>;
using MultiHeadAttention = MultiHeadAttentionT<float>;
using Adam = AdamT<float>;

}  // namespace qv::nn
