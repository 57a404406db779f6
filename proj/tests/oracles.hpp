#pragma once

// Independent reference implementations used as test oracles. These stay
// deliberately naive (nested loops, explicit index arithmetic) and must not
// share code with the library paths they check.

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include "qv/common.hpp"
#include "qv/dataset.hpp"
#include "qv/metrics.hpp"

namespace oracle {

// Brute-force shift-and-subtract basis maps with clamp-to-edge reads.
// img: [h][w] single channel. Returns the map for one (axis, m).
inline std::vector<std::vector<double>> shift_subtract(const std::vector<std::vector<double>>& img,
                                                       int axis, int m) {
  const int h = static_cast<int>(img.size());
  const int w = static_cast<int>(img[0].size());
  auto clamp = [](int i, int n) { return std::min(std::max(i, 0), n - 1); };
  std::vector<std::vector<double>> out(h, std::vector<double>(w, 0.0));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int sy = axis == 1 ? clamp(y - m, h) : y;
      const int sx = axis == 0 ? clamp(x - m, w) : x;
      out[y][x] = img[sy][sx] - img[y][x];
    }
  return out;
}

// Six-nested-loop cross-correlation with zero padding, stride 1.
inline std::vector<double> naive_conv2d(const std::vector<double>& x, int n, int cin, int h, int w,
                                        const std::vector<double>& k, int cout, int kh, int kw,
                                        const std::vector<double>& bias) {
  const int ph = kh / 2, pw = kw / 2;
  std::vector<double> out(static_cast<size_t>(n) * cout * h * w, 0.0);
  for (int b = 0; b < n; ++b)
    for (int co = 0; co < cout; ++co)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) {
          double acc = bias.empty() ? 0.0 : bias[co];
          for (int ci = 0; ci < cin; ++ci)
            for (int dy = 0; dy < kh; ++dy)
              for (int dx = 0; dx < kw; ++dx) {
                const int sy = y + dy - ph, sx = xx + dx - pw;
                if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
                acc += x[((static_cast<size_t>(b) * cin + ci) * h + sy) * w + sx] *
                       k[((static_cast<size_t>(co) * cin + ci) * kh + dy) * kw + dx];
              }
          out[((static_cast<size_t>(b) * cout + co) * h + y) * w + xx] = acc;
        }
  return out;
}

// O(n^2) DFT of a real frame.
inline std::vector<std::complex<double>> naive_dft(const std::vector<double>& x) {
  const size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (size_t k = 0; k < n; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (size_t t = 0; t < n; ++t) {
      const double ang = -2.0 * 3.14159265358979323846 * static_cast<double>(k) *
                         static_cast<double>(t) / static_cast<double>(n);
      acc += x[t] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

// Exhaustive-sweep EER: every distinct score is a candidate threshold
// (accept iff score >= t, bonafide positive). Takes the exact FAR == FRR
// tie when one exists, and the linear interpolation between the last
// FAR > FRR candidate and the first FAR < FRR candidate; reports the
// smaller of the two estimates, falling back to a virtual threshold above
// the maximum when FAR never drops below FRR.
inline std::pair<double, double> eer_sweep(const std::vector<double>& scores,
                                           const std::vector<qv::Label>& labels) {
  std::vector<double> ts(scores);
  std::sort(ts.begin(), ts.end());
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());

  auto rates = [&](double t) {
    double fa = 0, fr = 0, nb = 0, ns = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
      if (labels[i] == qv::Label::bonafide) {
        nb += 1;
        if (scores[i] < t) fr += 1;
      } else {
        ns += 1;
        if (scores[i] >= t) fa += 1;
      }
    }
    return std::pair<double, double>{fa / ns, fr / nb};
  };

  bool have_tie = false;
  double tie_v = 0.0, tie_t = 0.0;
  ptrdiff_t lo = -1, hi = -1;
  for (size_t i = 0; i < ts.size(); ++i) {
    const auto [fa, fr] = rates(ts[i]);
    if (fa == fr && !have_tie) {
      have_tie = true;
      tie_v = fa;
      tie_t = ts[i];
    }
    if (fa > fr) lo = static_cast<ptrdiff_t>(i);
    if (fa < fr && hi < 0) hi = static_cast<ptrdiff_t>(i);
  }

  bool have_interp = false;
  double iv = 0.0, it = 0.0;
  if (lo >= 0 && hi >= 0) {
    const auto [fa0, fr0] = rates(ts[lo]);
    const auto [fa1, fr1] = rates(ts[hi]);
    const double d0 = fa0 - fr0, d1 = fa1 - fr1;
    const double s = d0 / (d0 - d1);
    iv = fa0 + s * (fa1 - fa0);
    it = ts[lo] + s * (ts[hi] - ts[lo]);
    have_interp = true;
  } else if (!have_tie) {
    const auto [fa0, fr0] = rates(ts.back());
    const double d0 = fa0 - fr0;
    const double s = d0 / (d0 + 1.0);
    iv = fa0 * (1.0 - s);
    it = ts.back();
    have_interp = true;
  }

  if (have_tie && (!have_interp || tie_v <= iv)) return {tie_v, tie_t};
  return {iv, it};
}

// Mean spectral flatness over frames (geometric mean / arithmetic mean of
// the power spectrum), computed with the naive DFT on short frames.
inline double spectral_flatness(const std::vector<float>& samples, int frame = 256,
                                int step = 1024) {
  double total = 0.0;
  int count = 0;
  std::vector<double> x(frame);
  for (size_t start = 0; start + frame <= samples.size(); start += step) {
    for (int i = 0; i < frame; ++i) x[i] = samples[start + i];
    const auto spec = naive_dft(x);
    double log_sum = 0.0, lin_sum = 0.0;
    const int bins = frame / 2;
    for (int b = 1; b <= bins; ++b) {
      const double p = std::norm(spec[b]) + 1e-12;
      log_sum += std::log(p);
      lin_sum += p;
    }
    total += std::exp(log_sum / bins) / (lin_sum / bins);
    ++count;
  }
  return count ? total / count : 0.0;
}

}  // namespace oracle
