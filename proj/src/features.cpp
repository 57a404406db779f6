#include "qv/features.hpp"

#include <algorithm>
#include <cmath>

#include "qv/fft.hpp"

namespace qv {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDbEps = 1e-10;
constexpr double kDbFloor = -80.0;

// Reflect indexing without repeating the edge sample: -1 -> 1, len -> len-2.
int reflect_index(int i, int len) {
  if (len == 1) return 0;
  while (i < 0 || i >= len) {
    if (i < 0) i = -i;
    if (i >= len) i = 2 * len - 2 - i;
  }
  return i;
}

}  // namespace

const char* to_string(FeatureKind k) {
  switch (k) {
    case FeatureKind::stft: return "stft";
    case FeatureKind::mel: return "mel";
    case FeatureKind::mfcc: return "mfcc";
    default: return "generic";
  }
}

FeatureKind feature_kind_from_string(const std::string& s) {
  if (s == "stft") return FeatureKind::stft;
  if (s == "mel") return FeatureKind::mel;
  if (s == "mfcc") return FeatureKind::mfcc;
  if (s == "generic") return FeatureKind::generic;
  throw ContractError("unknown feature kind '" + s + "' (expected stft, mel, or mfcc)");
}

FeatureImage FeatureImage::make(int h, int w, int c, FeatureKind kind) {
  if (h < 1 || w < 1 || c < 1) throw ContractError("feature image dims must be >= 1");
  FeatureImage img;
  img.height = h;
  img.width = w;
  img.channels = c;
  img.kind = kind;
  img.data.assign(static_cast<size_t>(h) * w * c, 0.0f);
  return img;
}

void FeatureConfig::validate() const {
  if (sample_rate <= 0) throw ContractError("feature config: sample_rate must be positive");
  if (win_length <= 0 || hop_length <= 0) throw ContractError("feature config: window/hop must be positive");
  if (win_length > n_fft) throw ContractError("feature config: win_length must be <= n_fft");
  if (!is_power_of_two(static_cast<size_t>(n_fft)))
    throw ContractError("feature config: n_fft must be a power of two");
  if (fmax > sample_rate / 2.0) throw ContractError("feature config: fmax must be <= Nyquist");
  if (fmin < 0 || fmin >= fmax) throw ContractError("feature config: need 0 <= fmin < fmax");
  if (n_mfcc > n_mels) throw ContractError("feature config: n_mfcc must be <= n_mels");
  if (n_mels < 1 || n_mfcc < 1) throw ContractError("feature config: mel/mfcc counts must be >= 1");
  if (out_height < 1 || out_width < 1) throw ContractError("feature config: output dims must be >= 1");
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

FeatureImage stft_magnitude(const AudioClip& clip, const FeatureConfig& cfg) {
  cfg.validate();
  if (clip.samples.empty()) throw ContractError("stft: clip is empty");
  if (clip.sample_rate != cfg.sample_rate)
    throw ContractError("stft: clip is at " + std::to_string(clip.sample_rate) +
                        " Hz but the config expects " + std::to_string(cfg.sample_rate) +
                        " Hz; resample first");

  // Zero-pad clips shorter than one window.
  std::vector<float> padded;
  const std::vector<float>* samples = &clip.samples;
  if (static_cast<int>(clip.samples.size()) < cfg.win_length) {
    padded = clip.samples;
    padded.resize(static_cast<size_t>(cfg.win_length), 0.0f);
    samples = &padded;
  }
  const int len = static_cast<int>(samples->size());
  const int frames = 1 + len / cfg.hop_length;
  const int bins = cfg.n_fft / 2 + 1;

  // periodic Hann
  std::vector<double> window(cfg.win_length);
  for (int i = 0; i < cfg.win_length; ++i)
    window[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / cfg.win_length);

  FeatureImage out = FeatureImage::make(bins, frames, 1, FeatureKind::stft);
  std::vector<double> re(cfg.n_fft), im(cfg.n_fft);
  const int half = cfg.n_fft / 2;
  for (int t = 0; t < frames; ++t) {
    const int start = t * cfg.hop_length - half;
    for (int i = 0; i < cfg.n_fft; ++i) {
      const int src = reflect_index(start + i, len);
      re[i] = static_cast<double>((*samples)[src]) * window[i];
      im[i] = 0.0;
    }
    fft_radix2(re, im, false);
    for (int b = 0; b < bins; ++b)
      out.at(b, t) = static_cast<float>(std::hypot(re[b], im[b]));
  }
  return out;
}

FeatureImage to_db(const FeatureImage& img) {
  double ref = 0.0;
  for (float v : img.data) {
    if (v < 0.0f) throw ContractError("to_db: input values must be non-negative");
    ref = std::max(ref, static_cast<double>(v));
  }
  const double ref_db = 20.0 * std::log10(std::max(ref, kDbEps));
  FeatureImage out = img;
  for (auto& v : out.data) {
    // the reference is the grid max, so the exact value is <= 0; clamp away
    // rounding noise at the top as well as the floor
    const double db = 20.0 * std::log10(std::max(static_cast<double>(v), kDbEps)) - ref_db;
    v = static_cast<float>(std::clamp(db, kDbFloor, 0.0));
  }
  return out;
}

std::vector<std::vector<double>> mel_filterbank(const FeatureConfig& cfg) {
  cfg.validate();
  const int bins = cfg.n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(cfg.fmin);
  const double mel_hi = hz_to_mel(cfg.fmax);
  // n_mels + 2 breakpoints equally spaced in mel
  std::vector<double> edges(cfg.n_mels + 2);
  for (int i = 0; i < cfg.n_mels + 2; ++i)
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (cfg.n_mels + 1));

  std::vector<std::vector<double>> fb(cfg.n_mels, std::vector<double>(bins, 0.0));
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    double peak = 0.0;
    for (int b = 0; b < bins; ++b) {
      const double f = static_cast<double>(b) * cfg.sample_rate / cfg.n_fft;
      double w = 0.0;
      if (f > left && f < right)
        w = f <= center ? (f - left) / (center - left) : (right - f) / (right - center);
      fb[m][b] = w;
      peak = std::max(peak, w);
    }
    if (peak > 0.0)
      for (auto& w : fb[m]) w /= peak;  // each filter peaks at exactly 1.0
  }
  return fb;
}

std::vector<double> mel_center_frequencies(const FeatureConfig& cfg) {
  const double mel_lo = hz_to_mel(cfg.fmin);
  const double mel_hi = hz_to_mel(cfg.fmax);
  std::vector<double> centers(cfg.n_mels);
  for (int m = 0; m < cfg.n_mels; ++m)
    centers[m] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * (m + 1) / (cfg.n_mels + 1));
  return centers;
}

FeatureImage mel_spectrogram(const AudioClip& clip, const FeatureConfig& cfg) {
  const FeatureImage mag = stft_magnitude(clip, cfg);
  const auto fb = mel_filterbank(cfg);
  const int bins = mag.height, frames = mag.width;

  FeatureImage energies = FeatureImage::make(cfg.n_mels, frames, 1, FeatureKind::mel);
  for (int m = 0; m < cfg.n_mels; ++m)
    for (int t = 0; t < frames; ++t) {
      double acc = 0.0;
      for (int b = 0; b < bins; ++b) {
        const double v = mag.at(b, t);
        acc += fb[m][b] * v * v;  // power spectrum
      }
      energies.at(m, t) = static_cast<float>(acc);
    }
  return to_db(energies);
}

std::vector<std::vector<double>> dct_matrix(int n_out, int n_in) {
  std::vector<std::vector<double>> m(n_out, std::vector<double>(n_in));
  const double norm0 = std::sqrt(1.0 / n_in);
  const double norm = std::sqrt(2.0 / n_in);
  for (int k = 0; k < n_out; ++k)
    for (int n = 0; n < n_in; ++n)
      m[k][n] = (k == 0 ? norm0 : norm) * std::cos(kPi * (n + 0.5) * k / n_in);
  return m;
}

FeatureImage mfcc(const AudioClip& clip, const FeatureConfig& cfg) {
  const FeatureImage logmel = mel_spectrogram(clip, cfg);
  const auto dct = dct_matrix(cfg.n_mfcc, cfg.n_mels);
  const int frames = logmel.width;

  FeatureImage out = FeatureImage::make(cfg.n_mfcc, frames, 1, FeatureKind::mfcc);
  for (int k = 0; k < cfg.n_mfcc; ++k)
    for (int t = 0; t < frames; ++t) {
      double acc = 0.0;
      for (int m = 0; m < cfg.n_mels; ++m) acc += dct[k][m] * logmel.at(m, t);
      out.at(k, t) = static_cast<float>(acc);
    }

  // z-score each coefficient row across time, sigma floored at 1e-8
  for (int k = 0; k < cfg.n_mfcc; ++k) {
    double mean = 0.0;
    for (int t = 0; t < frames; ++t) mean += out.at(k, t);
    mean /= frames;
    double var = 0.0;
    for (int t = 0; t < frames; ++t) {
      const double d = out.at(k, t) - mean;
      var += d * d;
    }
    var /= frames;
    const double sigma = std::max(std::sqrt(var), 1e-8);
    for (int t = 0; t < frames; ++t)
      out.at(k, t) = static_cast<float>((out.at(k, t) - mean) / sigma);
  }
  return out;
}

FeatureImage resize_bilinear(const FeatureImage& img, int out_h, int out_w) {
  if (img.height < 1 || img.width < 1) throw ContractError("resize: empty image");
  if (out_h < 1 || out_w < 1) throw ContractError("resize: output dims must be >= 1");
  FeatureImage out = FeatureImage::make(out_h, out_w, img.channels, img.kind);
  const double sy = out_h > 1 ? static_cast<double>(img.height - 1) / (out_h - 1) : 0.0;
  const double sx = out_w > 1 ? static_cast<double>(img.width - 1) / (out_w - 1) : 0.0;
  for (int y = 0; y < out_h; ++y) {
    const double fy = y * sy;
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = x * sx;
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < img.channels; ++c) {
        const double top = img.at(y0, x0, c) * (1.0 - wx) + img.at(y0, x1, c) * wx;
        const double bot = img.at(y1, x0, c) * (1.0 - wx) + img.at(y1, x1, c) * wx;
        out.at(y, x, c) = static_cast<float>(top * (1.0 - wy) + bot * wy);
      }
    }
  }
  return out;
}

FeatureImage extract(const AudioClip& clip, FeatureKind kind, const FeatureConfig& cfg) {
  FeatureImage feat;
  switch (kind) {
    case FeatureKind::stft: feat = to_db(stft_magnitude(clip, cfg)); break;
    case FeatureKind::mel: feat = mel_spectrogram(clip, cfg); break;
    case FeatureKind::mfcc: feat = mfcc(clip, cfg); break;
    default: throw ContractError("extract: kind must be stft, mel, or mfcc");
  }
  FeatureImage out = resize_bilinear(feat, cfg.out_height, cfg.out_width);
  out.kind = kind;
  for (float v : out.data)
    if (!std::isfinite(v)) throw NumericError("extract: non-finite feature value");
  return out;
}

}  // namespace qv
