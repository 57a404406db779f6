#pragma once

// The QV transform: shifted-difference basis wave maps, their linear
// superposition, the trainable conv+ReLU branch superposition (depth 1 or 3),
// and grayscale rendering of wave maps.
//
// Conventions: images are [N,C,H,W] with x = column (W axis) and y = row
// (H axis). A basis map for shift m along x holds I(x-m, y) - I(x, y);
// out-of-range reads clamp to the border pixel, so border differences are 0.
// Basis maps are ordered channel-major: for each input channel, x-axis maps
// in shift order, then y-axis maps in shift order.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "qv/nn.hpp"
#include "qv/tensor.hpp"

namespace qv {

struct QVConfig {
  std::vector<int> shifts{-1, 1, -2, 2};  // basis map order within each axis
  int filters = 128;
  int depth = 1;  // conv+ReLU stages per branch, 1 or 3
  int kernel = 3;
  int in_channels = 1;

  int max_shift() const {
    int m = 0;
    for (int s : shifts) m = std::max(m, std::abs(s));
    return m;
  }

  void validate() const {
    if (shifts.empty()) throw ContractError("qv: shift set must be non-empty");
    for (int s : shifts) {
      if (s == 0) throw ContractError("qv: shift 0 is excluded (it produces no wave)");
      bool has_neg = false;
      for (int t : shifts) has_neg |= (t == -s);
      if (!has_neg) throw ContractError("qv: shift set must be symmetric about 0");
    }
    if (depth != 1 && depth != 3) throw ContractError("qv: depth must be 1 or 3");
    if (kernel < 1 || kernel % 2 == 0) throw ContractError("qv: kernel size must be odd");
    if (filters < 1) throw ContractError("qv: filters must be >= 1");
    if (in_channels < 1) throw ContractError("qv: in_channels must be >= 1");
  }
};

struct WaveTag {
  int axis = 0;  // 0 = x, 1 = y
  int m = 0;
  int channel = 0;
};

template <class T>
struct WaveStackT {
  enum class Provenance { basis, superposed };

  TensorT<T> maps;  // [N, K, H, W]
  Provenance provenance = Provenance::basis;
  std::vector<WaveTag> tags;  // one per map when provenance == basis
};

using WaveStack = WaveStackT<float>;

// ---------------------------------------------------------------------------
// Basis construction
// ---------------------------------------------------------------------------

inline int clamp_index(int i, int n) { return i < 0 ? 0 : (i >= n ? n - 1 : i); }

// Builds the 2*|shifts| shifted-difference maps per input channel as a single
// differentiable op.
template <class T>
WaveStackT<T> basis_waves(const TensorT<T>& img, const QVConfig& cfg) {
  cfg.validate();
  if (img.rank() != 4) throw ContractError("basis_waves: expected [N,C,H,W]");
  const int n = img.shape()[0], c = img.shape()[1], h = img.shape()[2], w = img.shape()[3];
  if (c != cfg.in_channels)
    throw ContractError("basis_waves: image has " + std::to_string(c) +
                        " channels, config expects " + std::to_string(cfg.in_channels));
  const int reach = 2 * cfg.max_shift();
  if (h <= reach || w <= reach)
    throw ContractError("basis_waves: image " + std::to_string(h) + "x" + std::to_string(w) +
                        " is smaller than the shift reach (needs > " + std::to_string(reach) +
                        " per side)");

  const int s = static_cast<int>(cfg.shifts.size());
  const int k = 2 * s * c;
  const int64_t hw = static_cast<int64_t>(h) * w;
  std::vector<T> out(static_cast<int64_t>(n) * k * hw);
  std::vector<WaveTag> tags(k);

  const T* in = img.values().data();
  for (int b = 0; b < n; ++b)
    for (int ci = 0; ci < c; ++ci) {
      const T* src = in + (static_cast<int64_t>(b) * c + ci) * hw;
      for (int axis = 0; axis < 2; ++axis)
        for (int si = 0; si < s; ++si) {
          const int m = cfg.shifts[si];
          const int map = (ci * 2 + axis) * s + si;
          tags[map] = {axis, m, ci};
          T* dst = out.data() + (static_cast<int64_t>(b) * k + map) * hw;
          for (int y = 0; y < h; ++y) {
            const int sy = axis == 1 ? clamp_index(y - m, h) : y;
            for (int x = 0; x < w; ++x) {
              const int sx = axis == 0 ? clamp_index(x - m, w) : x;
              dst[static_cast<int64_t>(y) * w + x] =
                  src[static_cast<int64_t>(sy) * w + sx] - src[static_cast<int64_t>(y) * w + x];
            }
          }
        }
    }

  auto in_node = img.node();
  auto shifts = cfg.shifts;
  auto maps = detail::make_op<T>(
      {n, k, h, w}, std::move(out), {img},
      [in_node, shifts, n, c, h, w, s, k](typename TensorT<T>::Node& self) {
        if (!in_node->needs_grad) return;
        const int64_t hw = static_cast<int64_t>(h) * w;
        for (int b = 0; b < n; ++b)
          for (int ci = 0; ci < c; ++ci) {
            T* dimg = in_node->grad.data() + (static_cast<int64_t>(b) * c + ci) * hw;
            for (int axis = 0; axis < 2; ++axis)
              for (int si = 0; si < s; ++si) {
                const int m = shifts[si];
                const int map = (ci * 2 + axis) * s + si;
                const T* g = self.grad.data() + (static_cast<int64_t>(b) * k + map) * hw;
                for (int y = 0; y < h; ++y) {
                  const int sy = axis == 1 ? clamp_index(y - m, h) : y;
                  for (int x = 0; x < w; ++x) {
                    const int sx = axis == 0 ? clamp_index(x - m, w) : x;
                    const T gv = g[static_cast<int64_t>(y) * w + x];
                    dimg[static_cast<int64_t>(sy) * w + sx] += gv;
                    dimg[static_cast<int64_t>(y) * w + x] -= gv;
                  }
                }
              }
          }
      });

  WaveStackT<T> stack;
  stack.maps = std::move(maps);
  stack.provenance = WaveStackT<T>::Provenance::basis;
  stack.tags = std::move(tags);
  return stack;
}

// ---------------------------------------------------------------------------
// Superpositions
// ---------------------------------------------------------------------------

// psi = sum_m a[m]*psi_x_m + b[m]*psi_y_m, per input channel. Coefficients
// are indexed by position in the config's shift order.
template <class T>
TensorT<T> superpose_linear(const WaveStackT<T>& stack, const std::vector<T>& a,
                            const std::vector<T>& b) {
  if (stack.provenance != WaveStackT<T>::Provenance::basis)
    throw ContractError("superpose_linear: stack must hold basis waves");
  const int k = stack.maps.shape()[1];
  if (static_cast<int>(stack.tags.size()) != k)
    throw ContractError("superpose_linear: tag/map count mismatch");
  const int s = static_cast<int>(a.size());
  if (b.size() != a.size() || k % (2 * s) != 0)
    throw ContractError("superpose_linear: coefficient count does not match the stack");
  const int c = k / (2 * s);
  const int n = stack.maps.shape()[0], h = stack.maps.shape()[2], w = stack.maps.shape()[3];
  const int64_t hw = static_cast<int64_t>(h) * w;

  std::vector<T> out(static_cast<int64_t>(n) * c * hw, T(0));
  const T* in = stack.maps.values().data();
  for (int bi = 0; bi < n; ++bi)
    for (int ci = 0; ci < c; ++ci) {
      T* dst = out.data() + (static_cast<int64_t>(bi) * c + ci) * hw;
      for (int axis = 0; axis < 2; ++axis)
        for (int si = 0; si < s; ++si) {
          const T coef = axis == 0 ? a[si] : b[si];
          const int map = (ci * 2 + axis) * s + si;
          const T* src = in + (static_cast<int64_t>(bi) * k + map) * hw;
          for (int64_t i = 0; i < hw; ++i) dst[i] += coef * src[i];
        }
    }

  auto mn = stack.maps.node();
  return detail::make_op<T>(
      {n, c, h, w}, std::move(out), {stack.maps},
      [mn, a, b, n, c, s, k, hw](typename TensorT<T>::Node& self) {
        if (!mn->needs_grad) return;
        for (int bi = 0; bi < n; ++bi)
          for (int ci = 0; ci < c; ++ci) {
            const T* g = self.grad.data() + (static_cast<int64_t>(bi) * c + ci) * hw;
            for (int axis = 0; axis < 2; ++axis)
              for (int si = 0; si < s; ++si) {
                const T coef = axis == 0 ? a[si] : b[si];
                const int map = (ci * 2 + axis) * s + si;
                T* dst = mn->grad.data() + (static_cast<int64_t>(bi) * k + map) * hw;
                for (int64_t i = 0; i < hw; ++i) dst[i] += coef * g[i];
              }
          }
      });
}

// Elementwise |psi|^2; visualization aid, not part of the trained path.
template <class T>
WaveStackT<T> magnitude_square(const WaveStackT<T>& stack) {
  if (stack.provenance != WaveStackT<T>::Provenance::basis)
    throw ContractError("magnitude_square: stack must hold basis waves");
  WaveStackT<T> out;
  out.maps = square(stack.maps);
  out.provenance = stack.provenance;
  out.tags = stack.tags;
  return out;
}

// ---------------------------------------------------------------------------
// Trainable branch superposition
// ---------------------------------------------------------------------------

// One conv stack (depth 1 or 3) per (axis, shift) branch; all layers have
// cfg.filters output channels.
template <class T>
struct QVParamsT {
  QVConfig cfg;
  std::vector<nn::Conv2dT<T>> convs;  // index: (axis*|shifts| + si)*depth + layer

  QVParamsT(const QVConfig& config, Rng& rng, const std::string& prefix = "qv") : cfg(config) {
    cfg.validate();
    const int s = static_cast<int>(cfg.shifts.size());
    convs.reserve(static_cast<size_t>(2) * s * cfg.depth);
    for (int axis = 0; axis < 2; ++axis)
      for (int si = 0; si < s; ++si)
        for (int layer = 0; layer < cfg.depth; ++layer) {
          const int m = cfg.shifts[si];
          const std::string name = prefix + "." + (axis == 0 ? "x" : "y") + ".m" +
                                   (m > 0 ? "+" : "-") + std::to_string(std::abs(m)) + ".conv" +
                                   std::to_string(layer + 1);
          const int cin = layer == 0 ? cfg.in_channels : cfg.filters;
          convs.emplace_back(name, cin, cfg.filters, cfg.kernel, rng);
        }
  }

  const nn::Conv2dT<T>& conv(int axis, int si, int layer) const {
    const int s = static_cast<int>(cfg.shifts.size());
    return convs[static_cast<size_t>((axis * s + si) * cfg.depth + layer)];
  }

  void collect(std::vector<nn::ParameterT<T>*>& out) {
    for (auto& c : convs) c.collect(out);
  }
};

using QVParams = QVParamsT<float>;

// Feeds each (axis, shift) basis group through its conv+ReLU branch and sums
// the branch outputs into cfg.filters wave maps.
template <class T>
TensorT<T> qv_branches(const WaveStackT<T>& stack, const QVParamsT<T>& params) {
  if (stack.provenance != WaveStackT<T>::Provenance::basis)
    throw ContractError("qv_branches: stack must hold basis waves");
  const QVConfig& cfg = params.cfg;
  const int s = static_cast<int>(cfg.shifts.size());
  const int c = cfg.in_channels;
  if (stack.maps.shape()[1] != 2 * s * c)
    throw ContractError("qv_branches: stack has " + std::to_string(stack.maps.shape()[1]) +
                        " maps, config expects " + std::to_string(2 * s * c));

  TensorT<T> acc;
  for (int axis = 0; axis < 2; ++axis)
    for (int si = 0; si < s; ++si) {
      std::vector<int> idx(c);
      for (int ci = 0; ci < c; ++ci) idx[ci] = (ci * 2 + axis) * s + si;
      TensorT<T> branch = select_channels(stack.maps, idx);
      for (int layer = 0; layer < cfg.depth; ++layer)
        branch = nn::relu(params.conv(axis, si, layer).forward(branch));
      acc = acc.defined() ? add(acc, branch) : branch;
    }
  return acc;
}

// Full transform: image -> basis waves -> branch superposition.
template <class T>
TensorT<T> qv_forward(const TensorT<T>& img, const QVParamsT<T>& params) {
  return qv_branches(basis_waves(img, params.cfg), params);
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

// Min-max normalizes each map to 8-bit grayscale and writes one binary PGM
// per map. Constant maps render mid-gray (128). Returns the written paths.
template <class T>
std::vector<std::string> render_waves(const WaveStackT<T>& stack, const std::string& out_dir) {
  if (!stack.maps.defined() || stack.maps.size() == 0)
    throw ContractError("render_waves: empty stack");
  const int n = stack.maps.shape()[0], k = stack.maps.shape()[1];
  const int h = stack.maps.shape()[2], w = stack.maps.shape()[3];
  const int64_t hw = static_cast<int64_t>(h) * w;

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw DataError("render_waves: cannot create directory " + out_dir + ": " + ec.message());

  const bool basis = stack.provenance == WaveStackT<T>::Provenance::basis;
  const bool multi_channel =
      basis && !stack.tags.empty() && stack.tags.back().channel > 0;

  std::vector<std::string> written;
  for (int b = 0; b < n; ++b)
    for (int map = 0; map < k; ++map) {
      std::string name;
      if (basis) {
        const WaveTag& t = stack.tags[map];
        name = std::string("wave_") + (t.axis == 0 ? "x" : "y") + "_" + (t.m > 0 ? "+" : "-") +
               std::to_string(std::abs(t.m));
        if (multi_channel) name += "_c" + std::to_string(t.channel);
      } else {
        name = "wave_out_" + std::to_string(map);
      }
      if (n > 1) name += "_n" + std::to_string(b);
      name += ".pgm";

      const T* src = stack.maps.values().data() + (static_cast<int64_t>(b) * k + map) * hw;
      T lo = src[0], hi = src[0];
      for (int64_t i = 1; i < hw; ++i) {
        lo = std::min(lo, src[i]);
        hi = std::max(hi, src[i]);
      }
      std::vector<unsigned char> pixels(hw);
      if (hi > lo) {
        const double span = static_cast<double>(hi) - static_cast<double>(lo);
        for (int64_t i = 0; i < hw; ++i) {
          const double v = (static_cast<double>(src[i]) - static_cast<double>(lo)) / span;
          pixels[i] = static_cast<unsigned char>(v * 255.0 + 0.5);
        }
      } else {
        std::fill(pixels.begin(), pixels.end(), static_cast<unsigned char>(128));
      }

      const std::string path = (std::filesystem::path(out_dir) / name).string();
      std::ofstream f(path, std::ios::binary);
      if (!f) throw DataError("render_waves: cannot open " + path + " for writing");
      f << "P5\n" << w << " " << h << "\n255\n";
      f.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(hw));
      if (!f) throw DataError("render_waves: write failed for " + path);
      written.push_back(path);
    }
  return written;
}

// Minimal binary PGM reader (P5, maxval 255); used by tests and tools.
struct PgmImage {
  int width = 0;
  int height = 0;
  std::vector<unsigned char> pixels;
};

inline PgmImage read_pgm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("read_pgm: cannot open " + path);
  std::string magic;
  f >> magic;
  if (magic != "P5") throw DataError("read_pgm: not a binary PGM: " + path);
  int w = 0, h = 0, maxval = 0;
  f >> w >> h >> maxval;
  f.get();
  if (w <= 0 || h <= 0 || maxval != 255) throw DataError("read_pgm: bad header in " + path);
  PgmImage img;
  img.width = w;
  img.height = h;
  img.pixels.resize(static_cast<size_t>(w) * h);
  f.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!f) throw DataError("read_pgm: truncated file " + path);
  return img;
}

}  // namespace qv
