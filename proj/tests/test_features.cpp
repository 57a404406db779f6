#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "qv/features.hpp"

#include "oracles.hpp"

using namespace qv;

namespace {

AudioClip tone(double freq, double amp = 1.0, int len = 16000, int rate = 16000) {
  AudioClip clip;
  clip.sample_rate = rate;
  clip.samples.resize(len);
  for (int i = 0; i < len; ++i)
    clip.samples[i] = static_cast<float>(amp * std::sin(2.0 * M_PI * freq * i / rate));
  return clip;
}

AudioClip zeros(int len = 16000) {
  AudioClip clip;
  clip.sample_rate = 16000;
  clip.samples.assign(len, 0.0f);
  return clip;
}

}  // namespace

TEST_CASE("stft of a zero clip: all-zero 513x63 grid") {
  const FeatureConfig cfg;
  const FeatureImage img = stft_magnitude(zeros(), cfg);
  CHECK(img.height == 513);
  CHECK(img.width == 63);
  for (float v : img.data) CHECK(v == 0.0f);
}

TEST_CASE("stft rejects a sample-rate mismatch with advice to resample") {
  const FeatureConfig cfg;
  AudioClip clip = zeros();
  clip.sample_rate = 44100;
  CHECK_THROWS_WITH_AS(stft_magnitude(clip, cfg), doctest::Contains("resample"), ContractError);
}

TEST_CASE("1 kHz tone: per-frame argmax lands on bin 64") {
  const FeatureConfig cfg;
  const FeatureImage img = stft_magnitude(tone(1000.0), cfg);
  // reflect padding distorts the two frames at each boundary, so the
  // per-frame claim is checked on frames whose window lies inside the clip
  for (int t = 0; t < img.width; ++t) {
    const bool interior =
        t * cfg.hop_length - cfg.n_fft / 2 >= 0 && t * cfg.hop_length + cfg.n_fft / 2 <= 16000;
    if (!interior) continue;
    int best = 0;
    float best_v = -1.0f;
    for (int b = 0; b < img.height; ++b)
      if (img.at(b, t) > best_v) {
        best_v = img.at(b, t);
        best = b;
      }
    CHECK(best == 64);
  }
  // the grid-wide argmax row is bin 64 regardless
  int best_row = 0;
  double best_energy = -1.0;
  for (int b = 0; b < img.height; ++b) {
    double e = 0.0;
    for (int t = 0; t < img.width; ++t) e += img.at(b, t);
    if (e > best_energy) {
      best_energy = e;
      best_row = b;
    }
  }
  CHECK(best_row == 64);
}

TEST_CASE("a middle frame matches the direct DFT of the same windowed slice") {
  const FeatureConfig cfg;
  Rng rng(3);
  AudioClip clip = zeros();
  for (auto& v : clip.samples) v = static_cast<float>(rng.uniform(-0.8, 0.8));
  const FeatureImage img = stft_magnitude(clip, cfg);

  const int t = 30;  // interior frame: no padding involved
  const int start = t * cfg.hop_length - cfg.n_fft / 2;
  std::vector<double> frame(cfg.n_fft);
  for (int i = 0; i < cfg.n_fft; ++i)
    frame[i] = clip.samples[start + i] * (0.5 - 0.5 * std::cos(2.0 * M_PI * i / cfg.n_fft));
  const auto spec = oracle::naive_dft(frame);
  for (int b = 0; b <= cfg.n_fft / 2; ++b)
    CHECK(img.at(b, t) == doctest::Approx(std::abs(spec[b])).epsilon(1e-6));
}

TEST_CASE("Parseval: spectrum power equals windowed frame energy times n_fft") {
  const FeatureConfig cfg;
  Rng rng(11);
  AudioClip clip = zeros();
  for (auto& v : clip.samples) v = static_cast<float>(rng.uniform(-0.8, 0.8));
  const FeatureImage img = stft_magnitude(clip, cfg);

  const int t = 25;
  const int start = t * cfg.hop_length - cfg.n_fft / 2;
  double frame_energy = 0.0;
  for (int i = 0; i < cfg.n_fft; ++i) {
    const double w = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / cfg.n_fft);
    const double s = clip.samples[start + i] * w;
    frame_energy += s * s;
  }
  // one-sided sum: bins 1..N/2-1 appear twice in the full spectrum
  double spec_power = img.at(0, t) * static_cast<double>(img.at(0, t)) +
                      img.at(512, t) * static_cast<double>(img.at(512, t));
  for (int b = 1; b < 512; ++b)
    spec_power += 2.0 * img.at(b, t) * static_cast<double>(img.at(b, t));
  CHECK(spec_power == doctest::Approx(cfg.n_fft * frame_energy).epsilon(1e-6));
}

TEST_CASE("stft frames whose windows lie inside the clip are invariant to appended zeros") {
  const FeatureConfig cfg;
  Rng rng(5);
  AudioClip clip = zeros(8000);
  for (auto& v : clip.samples) v = static_cast<float>(rng.uniform(-0.5, 0.5));
  const FeatureImage base = stft_magnitude(clip, cfg);

  AudioClip padded = clip;
  padded.samples.resize(8000 + 255, 0.0f);  // hop - 1 zeros
  const FeatureImage grown = stft_magnitude(padded, cfg);
  CHECK(grown.width - base.width <= 1);

  const int len = 8000;
  for (int t = 0; t < base.width; ++t) {
    if (t * cfg.hop_length + cfg.n_fft / 2 > len) continue;  // window touches the tail
    for (int b = 0; b < base.height; ++b) CHECK(base.at(b, t) == grown.at(b, t));
  }
}

TEST_CASE("stft with a silent tail is invariant over all common frames") {
  const FeatureConfig cfg;
  Rng rng(6);
  AudioClip clip = zeros(8192);
  for (int i = 0; i < 7500; ++i) clip.samples[i] = static_cast<float>(rng.uniform(-0.5, 0.5));
  const FeatureImage base = stft_magnitude(clip, cfg);
  AudioClip padded = clip;
  padded.samples.resize(8192 + 200, 0.0f);
  const FeatureImage grown = stft_magnitude(padded, cfg);
  CHECK(grown.width - base.width <= 1);
  for (int t = 0; t < base.width; ++t)
    for (int b = 0; b < base.height; ++b) CHECK(base.at(b, t) == grown.at(b, t));
}

TEST_CASE("short clips are zero-padded to one window") {
  const FeatureConfig cfg;
  const FeatureImage img = stft_magnitude(zeros(100), cfg);
  CHECK(img.width == 1 + 1024 / 256);
  CHECK(img.height == 513);
}

TEST_CASE("to_db: ref-max maps to 0, a decade below to -20, floor at -80") {
  FeatureImage img = FeatureImage::make(1, 3, 1, FeatureKind::generic);
  img.at(0, 0) = 1.0f;
  img.at(0, 1) = 0.1f;
  img.at(0, 2) = 0.0f;
  const FeatureImage db = to_db(img);
  CHECK(db.at(0, 0) == doctest::Approx(0.0));
  CHECK(db.at(0, 1) == doctest::Approx(-20.0));
  CHECK(db.at(0, 2) == doctest::Approx(-80.0));
}

TEST_CASE("to_db is monotone and bounded in [-80, 0]") {
  Rng rng(21);
  FeatureImage img = FeatureImage::make(16, 16, 1, FeatureKind::generic);
  for (auto& v : img.data) v = static_cast<float>(std::pow(10.0, rng.uniform(-12.0, 2.0)));
  const FeatureImage db = to_db(img);
  for (float v : db.data) {
    CHECK(v >= -80.0f);
    CHECK(v <= 0.0f);
  }
  for (size_t i = 0; i + 1 < img.data.size(); ++i) {
    if (img.data[i] <= img.data[i + 1])
      CHECK(db.data[i] <= db.data[i + 1]);
    else
      CHECK(db.data[i] >= db.data[i + 1]);
  }
  FeatureImage neg = FeatureImage::make(1, 1, 1, FeatureKind::generic);
  neg.at(0, 0) = -0.5f;
  CHECK_THROWS_AS(to_db(neg), ContractError);
}

TEST_CASE("mel scale closed form: mel(0) = 0, mel(700) = 2595*log10(2)") {
  CHECK(hz_to_mel(0.0) == doctest::Approx(0.0));
  CHECK(hz_to_mel(700.0) == doctest::Approx(2595.0 * std::log10(2.0)));
  CHECK(hz_to_mel(700.0) == doctest::Approx(781.17).epsilon(1e-4));
  CHECK(mel_to_hz(hz_to_mel(1234.5)) == doctest::Approx(1234.5).epsilon(1e-9));
}

TEST_CASE("mel filterbank: shape, non-negativity, unit peaks, contiguous support") {
  const FeatureConfig cfg;
  const auto fb = mel_filterbank(cfg);
  REQUIRE(fb.size() == 128);
  REQUIRE(fb[0].size() == 513);
  for (const auto& row : fb) {
    double peak = 0.0;
    int first = -1, last = -1;
    for (size_t b = 0; b < row.size(); ++b) {
      CHECK(row[b] >= 0.0);
      peak = std::max(peak, row[b]);
      if (row[b] > 0.0) {
        if (first < 0) first = static_cast<int>(b);
        last = static_cast<int>(b);
      }
    }
    CHECK(peak == doctest::Approx(1.0));
    REQUIRE(first >= 0);
    for (int b = first; b <= last; ++b) CHECK(row[b] > 0.0);  // no holes in the support
  }
}

TEST_CASE("mel spectrogram: zero clip is constant, tone peaks at the right band") {
  const FeatureConfig cfg;
  const FeatureImage z = mel_spectrogram(zeros(), cfg);
  CHECK(z.height == 128);
  CHECK(z.width == 63);
  for (float v : z.data) {
    CHECK(v == z.data[0]);  // constant grid
    CHECK(v >= -80.0f);
    CHECK(v <= 0.0f);
  }

  const FeatureImage m = mel_spectrogram(tone(1000.0), cfg);
  const auto centers = mel_center_frequencies(cfg);
  int expect = 0;
  for (size_t i = 1; i < centers.size(); ++i)
    if (std::abs(centers[i] - 1000.0) < std::abs(centers[expect] - 1000.0))
      expect = static_cast<int>(i);
  const int t = m.width / 2;
  int best = 0;
  for (int r = 1; r < m.height; ++r)
    if (m.at(r, t) > m.at(best, t)) best = r;
  CHECK(std::abs(best - expect) <= 1);
}

TEST_CASE("dct matrix is orthonormal within 1e-6") {
  const auto m = dct_matrix(128, 128);
  for (int i = 0; i < 128; ++i)
    for (int j = 0; j < 128; ++j) {
      double dot = 0.0;
      for (int k = 0; k < 128; ++k) dot += m[i][k] * m[j][k];
      CHECK(std::abs(dot - (i == j ? 1.0 : 0.0)) < 1e-6);
    }
}

TEST_CASE("dct of a constant: coefficient 0 constant, the rest zero") {
  const auto m = dct_matrix(40, 128);
  double c0 = 0.0;
  for (int k = 0; k < 128; ++k) c0 += m[0][k] * 5.0;
  CHECK(c0 == doctest::Approx(5.0 * std::sqrt(128.0)));  // sqrt(1/N) * N * 5
  for (int r = 1; r < 40; ++r) {
    double cr = 0.0;
    for (int k = 0; k < 128; ++k) cr += m[r][k] * 5.0;
    CHECK(std::abs(cr) < 1e-9);
  }
}

TEST_CASE("mfcc rows are z-scored across time") {
  const FeatureConfig cfg;
  Rng rng(8);
  AudioClip clip = zeros();
  for (auto& v : clip.samples) v = static_cast<float>(rng.uniform(-0.7, 0.7));
  const FeatureImage img = mfcc(clip, cfg);
  CHECK(img.height == 40);
  CHECK(img.width == 63);
  for (int r = 0; r < img.height; ++r) {
    double mean = 0.0, var = 0.0;
    for (int t = 0; t < img.width; ++t) mean += img.at(r, t);
    mean /= img.width;
    for (int t = 0; t < img.width; ++t) {
      const double d = img.at(r, t) - mean;
      var += d * d;
    }
    var /= img.width;
    CHECK(std::abs(mean) <= 1e-6);
    CHECK(std::abs(std::sqrt(var) - 1.0) <= 1e-5);
  }
}

TEST_CASE("resize: identity, constants, and the hand-evaluated 2x2 -> 2x3 case") {
  Rng rng(13);
  FeatureImage img = FeatureImage::make(7, 9, 1, FeatureKind::generic);
  for (auto& v : img.data) v = static_cast<float>(rng.uniform(-4, 4));
  const FeatureImage same = resize_bilinear(img, 7, 9);
  for (size_t i = 0; i < img.data.size(); ++i)
    CHECK(same.data[i] == doctest::Approx(img.data[i]).epsilon(1e-6));

  FeatureImage c = FeatureImage::make(5, 4, 1, FeatureKind::generic);
  for (auto& v : c.data) v = 2.25f;
  const FeatureImage cr = resize_bilinear(c, 3, 7);
  for (float v : cr.data) CHECK(v == doctest::Approx(2.25));

  FeatureImage g = FeatureImage::make(2, 2, 1, FeatureKind::generic);
  g.at(0, 0) = 0.0f;
  g.at(0, 1) = 1.0f;
  g.at(1, 0) = 0.0f;
  g.at(1, 1) = 1.0f;
  const FeatureImage r = resize_bilinear(g, 2, 3);
  CHECK(r.at(0, 0) == doctest::Approx(0.0));
  CHECK(r.at(0, 1) == doctest::Approx(0.5));
  CHECK(r.at(0, 2) == doctest::Approx(1.0));
  CHECK(r.at(1, 1) == doctest::Approx(0.5));
}

TEST_CASE("extract: 32x32x1 for every kind, pure, finite on zero clips") {
  const FeatureConfig cfg;
  for (FeatureKind kind : {FeatureKind::stft, FeatureKind::mel, FeatureKind::mfcc}) {
    const FeatureImage a = extract(tone(440.0, 0.5), kind, cfg);
    CHECK(a.height == 32);
    CHECK(a.width == 32);
    CHECK(a.channels == 1);
    const FeatureImage b = extract(tone(440.0, 0.5), kind, cfg);
    CHECK(a.data == b.data);  // purity, bitwise

    const FeatureImage z = extract(zeros(), kind, cfg);
    for (float v : z.data) CHECK(std::isfinite(v));
  }
}
