#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "qv/audio.hpp"
#include "qv/common.hpp"

namespace qv {

enum class Label : uint8_t { spoof = 0, bonafide = 1 };
enum class Split : uint8_t { train = 0, eval = 1 };

inline const char* to_string(Label l) { return l == Label::bonafide ? "bonafide" : "spoof"; }
inline const char* to_string(Split s) { return s == Split::train ? "train" : "eval"; }

struct TrialEntry {
  std::string utterance_id;
  Label label = Label::spoof;
  std::string attack_id;  // empty = none
  Split split = Split::train;

  bool operator==(const TrialEntry&) const = default;
};

struct Dataset {
  std::vector<TrialEntry> entries;
  std::unordered_map<std::string, AudioClip> clips;  // utterance id -> clip

  const AudioClip& clip(const std::string& utterance_id) const {
    auto it = clips.find(utterance_id);
    if (it == clips.end()) throw DataError("dataset: no clip for utterance " + utterance_id);
    return it->second;
  }

  // (bonafide, spoof) counts within a split.
  std::pair<int, int> counts(Split split) const {
    int b = 0, s = 0;
    for (const auto& e : entries)
      if (e.split == split) (e.label == Label::bonafide ? b : s)++;
    return {b, s};
  }
};

// Parses an ASVspoof-style protocol: one trial per whitespace-separated line,
// field 2 = utterance id, field 4 = attack id ("-" = none), field 5 = label.
std::vector<TrialEntry> parse_protocol_text(const std::string& text, Split split);
std::vector<TrialEntry> parse_protocol(const std::string& path, Split split);

// Renders entries back to protocol lines (speaker and field 3 as "-").
// parse_protocol_text(format_protocol(e), split) reproduces e.
std::string format_protocol(const std::vector<TrialEntry>& entries);

// Deterministic synthetic two-class dataset: 1 s clips at 16 kHz,
// n_per_class of each label, last 20% of each class assigned to the eval
// split. Bonafide clips are harmonic stacks with slow amplitude vibrato and
// low noise; spoof clips additionally carry per-frame spectral magnitude
// quantization and periodic oscillator phase jumps.
Dataset synth_dataset(int n_per_class, uint64_t seed);

}  // namespace qv
