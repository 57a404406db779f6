#pragma once

#include <string>
#include <vector>

#include "qv/audio.hpp"
#include "qv/common.hpp"

namespace qv {

enum class FeatureKind : uint8_t { stft = 0, mel = 1, mfcc = 2, generic = 3 };

const char* to_string(FeatureKind k);
FeatureKind feature_kind_from_string(const std::string& s);

// A 2-D (optionally multi-channel) grid of reals, stored row-major as
// (row y, column x, channel).
struct FeatureImage {
  int height = 0;
  int width = 0;
  int channels = 1;
  FeatureKind kind = FeatureKind::generic;
  std::vector<float> data;

  float at(int y, int x, int c = 0) const {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  float& at(int y, int x, int c = 0) {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }

  static FeatureImage make(int h, int w, int c, FeatureKind kind);
};

struct FeatureConfig {
  int sample_rate = 16000;
  int win_length = 1024;
  int hop_length = 256;
  int n_fft = 1024;
  int n_mels = 128;
  double fmin = 0.0;
  double fmax = 8000.0;
  int n_mfcc = 40;
  int out_height = 32;
  int out_width = 32;

  void validate() const;
};

// HTK mel scale.
double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Magnitude STFT: periodic Hann window, centered frames with reflect
// padding. Output rows = n_fft/2 + 1 bins, columns = 1 + floor(len/hop)
// frames (clips shorter than one window are zero-padded to one window).
FeatureImage stft_magnitude(const AudioClip& clip, const FeatureConfig& cfg);

// 20*log10 relative to the grid maximum, floored at -80 dB.
FeatureImage to_db(const FeatureImage& img);

// Triangular filters on the HTK mel scale, breakpoints equally spaced in mel
// between fmin and fmax; each row is peak-normalized to 1.0.
// Shape: [n_mels][n_fft/2 + 1].
std::vector<std::vector<double>> mel_filterbank(const FeatureConfig& cfg);

// Center frequencies (Hz) of the mel filters.
std::vector<double> mel_center_frequencies(const FeatureConfig& cfg);

// Mel filterbank over the power spectrum, then to_db.
FeatureImage mel_spectrogram(const AudioClip& clip, const FeatureConfig& cfg);

// Orthonormal DCT-II matrix [n_out][n_in].
std::vector<std::vector<double>> dct_matrix(int n_out, int n_in);

// DCT-II of the log-mel grid along the mel axis, first n_mfcc coefficients,
// each coefficient row z-scored across time (sigma floor 1e-8).
FeatureImage mfcc(const AudioClip& clip, const FeatureConfig& cfg);

// Corner-aligned bilinear resize, per channel.
FeatureImage resize_bilinear(const FeatureImage& img, int out_h, int out_w);

// Full front-end for one clip: feature of the given kind resized to
// out_height x out_width x 1.
FeatureImage extract(const AudioClip& clip, FeatureKind kind, const FeatureConfig& cfg);

}  // namespace qv
