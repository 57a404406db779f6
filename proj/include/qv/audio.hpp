#pragma once

#include <string>
#include <vector>

#include "qv/common.hpp"

namespace qv {

// Mono audio in [-1, 1] at a known sample rate.
struct AudioClip {
  std::vector<float> samples;
  int sample_rate = 0;
  std::string source_id;

  double duration_seconds() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

// Reads a RIFF/WAVE file. Supported encodings: PCM 16-bit and IEEE float
// 32-bit, mono or stereo (stereo is downmixed by channel mean). Integer
// samples are scaled by 1/32768.
AudioClip read_wav(const std::string& path);

// Writes a mono PCM 16-bit WAV file.
void write_wav(const std::string& path, const AudioClip& clip);

// Windowed-sinc polyphase resampling (Kaiser window, 64 taps per phase).
// Returns the clip unchanged when the rates already match.
AudioClip resample(const AudioClip& clip, int target_rate);

}  // namespace qv
