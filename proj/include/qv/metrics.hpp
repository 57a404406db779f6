#pragma once

#include <array>
#include <string>
#include <vector>

#include "qv/common.hpp"
#include "qv/dataset.hpp"

namespace qv {

// Per-trial detection scores; higher means more bonafide.
struct ScoreSet {
  std::vector<double> scores;
  std::vector<Label> labels;
  std::vector<std::string> ids;  // optional, parallel to scores when present

  void validate() const;
  bool has_both_classes() const;
};

// Confusion counts are [actual][predicted] with index 0 = bonafide,
// 1 = spoof.
using Confusion = std::array<std::array<int64_t, 2>, 2>;

struct EvalReport {
  double accuracy_argmax = 0.0;   // predicted bonafide iff score > 0
  double accuracy_at_eer = 0.0;   // accuracy at the EER threshold
  double eer = 0.0;
  double eer_threshold = 0.0;
  Confusion confusion{};          // at the EER threshold
  int64_t n_bonafide = 0;
  int64_t n_spoof = 0;
};

// Equal error rate with the accept-iff-score>=threshold convention
// (bonafide positive). Thresholds sweep the distinct scores; when FAR-FRR
// changes sign between adjacent thresholds without an exact tie, the EER is
// linearly interpolated and the lower bracketing threshold is returned.
std::pair<double, double> eer(const ScoreSet& set);

Confusion confusion(const ScoreSet& set, double threshold);

// (TP+TN)/N with predicted-bonafide iff score >= threshold.
double accuracy(const ScoreSet& set, double threshold);

// Argmax-style accuracy for logit-difference scores: bonafide iff score > 0.
double accuracy_argmax(const ScoreSet& set);

EvalReport report(const ScoreSet& set);

// Stable-ordered JSON with exact double round-tripping.
std::string report_to_json(const EvalReport& r);
EvalReport report_from_json(const std::string& json_text);

// "actual,predicted,count" rows.
std::string confusion_csv(const Confusion& c);

}  // namespace qv
