#include "qv/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>

namespace qv {

namespace {

uint32_t read_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t read_u16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0]) | (static_cast<uint16_t>(p[1]) << 8);
}

void write_u32(std::ofstream& f, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  f.write(reinterpret_cast<char*>(b), 4);
}

void write_u16(std::ofstream& f, uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  f.write(reinterpret_cast<char*>(b), 2);
}

// Modified Bessel function of the first kind, order 0 (series expansion).
double bessel_i0(double x) {
  double sum = 1.0, term = 1.0;
  const double half_x = x / 2.0;
  for (int k = 1; k < 64; ++k) {
    term *= (half_x / k) * (half_x / k);
    sum += term;
    if (term < 1e-16 * sum) break;
  }
  return sum;
}

}  // namespace

AudioClip read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("read_wav: cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0)
    throw DataError("read_wav: " + path + ": missing RIFF header");
  if (std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw DataError("read_wav: " + path + ": RIFF form type is not WAVE");

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  size_t data_len = 0;

  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
    const uint32_t chunk_len = read_u32(bytes.data() + pos + 4);
    const size_t body = pos + 8;
    if (body + chunk_len > bytes.size())
      throw DataError("read_wav: " + path + ": chunk '" + std::string(id, 4) +
                      "' overruns the file");
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (chunk_len < 16) throw DataError("read_wav: " + path + ": 'fmt ' chunk too short");
      format = read_u16(bytes.data() + body);
      channels = read_u16(bytes.data() + body + 2);
      rate = read_u32(bytes.data() + body + 4);
      bits = read_u16(bytes.data() + body + 14);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = bytes.data() + body;
      data_len = chunk_len;
    }
    pos = body + chunk_len + (chunk_len & 1);  // chunks are word-aligned
  }
  if (!have_fmt) throw DataError("read_wav: " + path + ": missing 'fmt ' chunk");
  if (!data) throw DataError("read_wav: " + path + ": missing 'data' chunk");
  if (rate == 0) throw DataError("read_wav: " + path + ": sample rate is zero");

  const bool pcm16 = format == 1 && bits == 16;
  const bool float32 = format == 3 && bits == 32;
  if (!pcm16 && !float32)
    throw DataError("read_wav: " + path + ": unsupported encoding (format tag " +
                    std::to_string(format) + ", " + std::to_string(bits) +
                    " bits); supported: PCM 16-bit, IEEE float 32-bit");
  if (channels != 1 && channels != 2)
    throw DataError("read_wav: " + path + ": unsupported channel count " +
                    std::to_string(channels) + "; supported: mono, stereo");

  const size_t bytes_per_sample = bits / 8;
  const size_t frame_bytes = bytes_per_sample * channels;
  const size_t frames = data_len / frame_bytes;
  if (frames == 0) throw DataError("read_wav: " + path + ": empty 'data' chunk");

  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.source_id = path;
  clip.samples.resize(frames);
  for (size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (int ch = 0; ch < channels; ++ch) {
      const unsigned char* p = data + i * frame_bytes + ch * bytes_per_sample;
      if (pcm16) {
        int16_t v;
        std::memcpy(&v, p, 2);
        acc += static_cast<double>(v) / 32768.0;
      } else {
        float v;
        std::memcpy(&v, p, 4);
        if (!std::isfinite(v))
          throw DataError("read_wav: " + path + ": non-finite sample at frame " +
                          std::to_string(i));
        acc += std::clamp(static_cast<double>(v), -1.0, 1.0);
      }
    }
    clip.samples[i] = static_cast<float>(acc / channels);
  }
  return clip;
}

void write_wav(const std::string& path, const AudioClip& clip) {
  if (clip.samples.empty() || clip.sample_rate <= 0)
    throw ContractError("write_wav: clip must be non-empty with a positive sample rate");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("write_wav: cannot open " + path + " for writing");
  const uint32_t data_len = static_cast<uint32_t>(clip.samples.size() * 2);
  f.write("RIFF", 4);
  write_u32(f, 36 + data_len);
  f.write("WAVE", 4);
  f.write("fmt ", 4);
  write_u32(f, 16);
  write_u16(f, 1);  // PCM
  write_u16(f, 1);  // mono
  write_u32(f, static_cast<uint32_t>(clip.sample_rate));
  write_u32(f, static_cast<uint32_t>(clip.sample_rate) * 2);
  write_u16(f, 2);
  write_u16(f, 16);
  f.write("data", 4);
  write_u32(f, data_len);
  for (float s : clip.samples) {
    const int v = static_cast<int>(std::lround(std::clamp(s, -1.0f, 1.0f) * 32767.0f));
    write_u16(f, static_cast<uint16_t>(static_cast<int16_t>(v)));
  }
  if (!f) throw DataError("write_wav: write failed for " + path);
}

AudioClip resample(const AudioClip& clip, int target_rate) {
  if (target_rate <= 0) throw ContractError("resample: target rate must be positive");
  if (clip.sample_rate <= 0) throw ContractError("resample: clip has no sample rate");
  if (clip.sample_rate == target_rate) return clip;

  const int64_t g = std::gcd(clip.sample_rate, target_rate);
  const int64_t up = target_rate / g;    // L: zero-stuffing factor
  const int64_t down = clip.sample_rate / g;  // M: decimation factor

  // Lowpass prototype at the upsampled rate: cutoff Nyquist/max(L,M),
  // Kaiser window (beta 8.6, ~80 dB stopband), 64 taps per phase.
  constexpr int kTapsPerPhase = 64;
  constexpr double kBeta = 8.6;
  const int64_t filt_len = kTapsPerPhase * up;
  const double center = static_cast<double>(filt_len - 1) / 2.0;
  const double cutoff = 1.0 / static_cast<double>(std::max(up, down));
  const double i0_beta = bessel_i0(kBeta);

  std::vector<double> h(filt_len);
  for (int64_t i = 0; i < filt_len; ++i) {
    const double t = static_cast<double>(i) - center;
    const double sinc =
        t == 0.0 ? 1.0 : std::sin(3.14159265358979323846 * cutoff * t) /
                             (3.14159265358979323846 * cutoff * t);
    const double frac = t / center;  // in [-1, 1]
    const double win = bessel_i0(kBeta * std::sqrt(std::max(0.0, 1.0 - frac * frac))) / i0_beta;
    h[i] = cutoff * sinc * win;
  }
  // Per-phase DC normalization: a constant input stays constant.
  for (int64_t p = 0; p < up; ++p) {
    double s = 0.0;
    for (int64_t q = p; q < filt_len; q += up) s += h[q];
    if (s != 0.0)
      for (int64_t q = p; q < filt_len; q += up) h[q] /= s;
  }

  const int64_t in_len = static_cast<int64_t>(clip.samples.size());
  const int64_t out_len = (in_len * up + down - 1) / down;
  AudioClip out;
  out.sample_rate = target_rate;
  out.source_id = clip.source_id;
  out.samples.resize(out_len);

  const int64_t c = filt_len / 2;  // delay compensation
  for (int64_t j = 0; j < out_len; ++j) {
    const int64_t u = j * down + c;  // position on the upsampled grid
    const int64_t phase = u % up;
    const int64_t i0 = u / up;
    double acc = 0.0;
    for (int64_t q = 0; q < kTapsPerPhase; ++q) {
      const int64_t i = i0 - q;
      if (i < 0 || i >= in_len) continue;
      acc += h[q * up + phase] * clip.samples[i];
    }
    out.samples[j] = static_cast<float>(std::clamp(acc, -1.0, 1.0));
  }
  return out;
}

}  // namespace qv
