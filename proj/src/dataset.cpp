#include "qv/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "qv/fft.hpp"

namespace qv {

std::vector<TrialEntry> parse_protocol_text(const std::string& text, Split split) {
  std::vector<TrialEntry> entries;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::vector<std::string> fields;
    std::string tok;
    while (ls >> tok) fields.push_back(tok);
    if (fields.empty()) continue;
    if (fields.size() < 5)
      throw DataError("protocol line " + std::to_string(line_no) + ": expected 5 fields, got " +
                      std::to_string(fields.size()));
    TrialEntry e;
    e.utterance_id = fields[1];
    e.attack_id = fields[3] == "-" ? std::string() : fields[3];
    e.split = split;
    if (fields[4] == "bonafide")
      e.label = Label::bonafide;
    else if (fields[4] == "spoof")
      e.label = Label::spoof;
    else
      throw DataError("protocol line " + std::to_string(line_no) + ": unknown label '" +
                      fields[4] + "' (expected bonafide or spoof)");
    entries.push_back(std::move(e));
  }
  return entries;
}

std::vector<TrialEntry> parse_protocol(const std::string& path, Split split) {
  std::ifstream f(path);
  if (!f) throw DataError("parse_protocol: cannot open " + path);
  std::stringstream buf;
  buf << f.rdbuf();
  return parse_protocol_text(buf.str(), split);
}

std::string format_protocol(const std::vector<TrialEntry>& entries) {
  std::string out;
  for (const auto& e : entries) {
    out += "- ";
    out += e.utterance_id;
    out += " - ";
    out += e.attack_id.empty() ? "-" : e.attack_id;
    out += " ";
    out += to_string(e.label);
    out += "\n";
  }
  return out;
}

namespace {

constexpr int kSynthRate = 16000;
constexpr int kSynthLen = 16000;  // 1 s clips

void normalize_peak(std::vector<float>& x, double peak) {
  double mx = 0.0;
  for (float v : x) mx = std::max(mx, std::abs(static_cast<double>(v)));
  if (mx <= 0.0) return;
  const double s = peak / mx;
  for (auto& v : x) v = static_cast<float>(v * s);
}

struct Voice {
  double f0;
  int harmonics;
  std::vector<double> amp, vib_rate, vib_depth, vib_phase, phase;
  double noise_sigma;
  double peak;
};

Voice draw_voice(Rng& rng) {
  Voice v;
  v.f0 = rng.uniform(110.0, 320.0);
  v.harmonics = 3 + static_cast<int>(rng.uniform_int(0, 2));
  for (int k = 0; k < v.harmonics; ++k) {
    v.amp.push_back(1.0 / std::pow(k + 1, rng.uniform(0.6, 1.1)));
    v.vib_rate.push_back(rng.uniform(2.0, 6.0));
    v.vib_depth.push_back(rng.uniform(0.2, 0.45));
    v.vib_phase.push_back(rng.uniform(0.0, 2.0 * 3.14159265358979323846));
    v.phase.push_back(rng.uniform(0.0, 2.0 * 3.14159265358979323846));
  }
  v.noise_sigma = rng.uniform(0.002, 0.006);
  v.peak = rng.uniform(0.55, 0.8);
  return v;
}

// Harmonic stack with per-harmonic amplitude vibrato plus low noise. When
// jump_period > 0, every oscillator phase jumps by a random amount at that
// period (the spoof discontinuity artifact).
std::vector<float> render_voice(const Voice& voice, Rng& rng, int jump_period) {
  constexpr double kTwoPi = 2.0 * 3.14159265358979323846;
  std::vector<double> phase = voice.phase;
  std::vector<float> x(kSynthLen);
  for (int t = 0; t < kSynthLen; ++t) {
    if (jump_period > 0 && t > 0 && t % jump_period == 0)
      for (auto& p : phase) p += rng.uniform(0.5 * 3.14159265358979323846,
                                             1.5 * 3.14159265358979323846);
    double s = 0.0;
    const double tt = static_cast<double>(t) / kSynthRate;
    for (int k = 0; k < voice.harmonics; ++k) {
      const double lfo =
          1.0 + voice.vib_depth[k] * std::sin(kTwoPi * voice.vib_rate[k] * tt + voice.vib_phase[k]);
      s += voice.amp[k] * lfo * std::sin(phase[k]);
      phase[k] += kTwoPi * voice.f0 * (k + 1) / kSynthRate;
    }
    x[t] = static_cast<float>(s + voice.noise_sigma * rng.normal());
  }
  return x;
}

// Quantizes per-frame spectral magnitudes to a coarse grid (phase kept),
// frame-by-frame without overlap.
void spectral_quantize(std::vector<float>& x, int frame, int levels) {
  std::vector<double> re(frame), im(frame);
  for (size_t start = 0; start + frame <= x.size(); start += frame) {
    for (int i = 0; i < frame; ++i) {
      re[i] = x[start + i];
      im[i] = 0.0;
    }
    fft_radix2(re, im, false);
    double max_mag = 0.0;
    for (int i = 0; i < frame; ++i)
      max_mag = std::max(max_mag, std::hypot(re[i], im[i]));
    if (max_mag <= 0.0) continue;
    const double delta = max_mag / levels;
    for (int i = 0; i < frame; ++i) {
      const double mag = std::hypot(re[i], im[i]);
      if (mag <= 0.0) continue;
      const double q = std::round(mag / delta) * delta;
      const double s = q / mag;
      re[i] *= s;
      im[i] *= s;
    }
    fft_radix2(re, im, true);
    for (int i = 0; i < frame; ++i) x[start + i] = static_cast<float>(re[i]);
  }
}

}  // namespace

Dataset synth_dataset(int n_per_class, uint64_t seed) {
  if (n_per_class < 1) throw ContractError("synth_dataset: n_per_class must be >= 1");
  Dataset ds;
  const int n_eval = n_per_class / 5;  // last 20% of each class
  char id[32];

  for (int cls = 0; cls < 2; ++cls) {
    const Label label = cls == 0 ? Label::bonafide : Label::spoof;
    for (int i = 0; i < n_per_class; ++i) {
      Rng rng(Rng::mix(seed, (static_cast<uint64_t>(cls) << 32) | static_cast<uint64_t>(i)));
      const Voice voice = draw_voice(rng);

      AudioClip clip;
      clip.sample_rate = kSynthRate;
      if (label == Label::bonafide) {
        clip.samples = render_voice(voice, rng, /*jump_period=*/0);
      } else {
        const int jump_period = static_cast<int>(rng.uniform_int(640, 1280));
        const int levels = static_cast<int>(rng.uniform_int(5, 8));
        clip.samples = render_voice(voice, rng, jump_period);
        spectral_quantize(clip.samples, /*frame=*/256, levels);
      }
      normalize_peak(clip.samples, voice.peak);

      std::snprintf(id, sizeof(id), "SYN_%c_%05d", label == Label::bonafide ? 'B' : 'S', i);
      clip.source_id = id;

      TrialEntry e;
      e.utterance_id = id;
      e.label = label;
      if (label == Label::spoof) e.attack_id = "SQ01";
      e.split = (i >= n_per_class - n_eval) ? Split::eval : Split::train;
      ds.entries.push_back(e);
      ds.clips.emplace(e.utterance_id, std::move(clip));
    }
  }
  return ds;
}

}  // namespace qv
