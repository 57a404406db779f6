#include "qv/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace qv {

void ScoreSet::validate() const {
  if (scores.size() != labels.size())
    throw ContractError("score set: scores and labels must have equal length");
  if (!ids.empty() && ids.size() != scores.size())
    throw ContractError("score set: ids, when present, must match the trial count");
  if (scores.empty()) throw ContractError("score set: empty");
  for (double s : scores)
    if (!std::isfinite(s)) throw NumericError("score set: non-finite score");
}

bool ScoreSet::has_both_classes() const {
  bool b = false, s = false;
  for (Label l : labels) (l == Label::bonafide ? b : s) = true;
  return b && s;
}

std::pair<double, double> eer(const ScoreSet& set) {
  set.validate();
  if (!set.has_both_classes())
    throw ContractError("eer: need at least one trial of each class");

  std::vector<double> bona, spoof;
  for (size_t i = 0; i < set.scores.size(); ++i)
    (set.labels[i] == Label::bonafide ? bona : spoof).push_back(set.scores[i]);
  std::sort(bona.begin(), bona.end());
  std::sort(spoof.begin(), spoof.end());
  const double nb = static_cast<double>(bona.size());
  const double ns = static_cast<double>(spoof.size());

  std::vector<double> thresholds(set.scores);
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  const size_t n = thresholds.size();

  // At threshold t (accept iff score >= t):
  //   FAR(t) = #spoof >= t / ns,  FRR(t) = #bona < t / nb.
  // FAR - FRR is non-increasing in t and starts at +1 at the lowest score.
  std::vector<double> far(n), frr(n);
  for (size_t i = 0; i < n; ++i) {
    far[i] = static_cast<double>(spoof.end() -
                                 std::lower_bound(spoof.begin(), spoof.end(), thresholds[i])) /
             ns;
    frr[i] = static_cast<double>(std::lower_bound(bona.begin(), bona.end(), thresholds[i]) -
                                 bona.begin()) /
             nb;
  }

  // Two crossing estimates:
  //  - an exact tie FAR == FRR at a candidate (all tie candidates share one
  //    value because both rates are monotone), and
  //  - the linear interpolation between the last candidate with FAR > FRR
  //    and the first with FAR < FRR (the transversal crossing).
  // The tie can sit on a step-plateau corner above the interpolated crossing,
  // so the reported EER is the smaller of the two.
  bool have_tie = false;
  double tie_value = 0.0, tie_threshold = 0.0;
  for (size_t i = 0; i < n; ++i)
    if (far[i] == frr[i]) {
      have_tie = true;
      tie_value = far[i];
      tie_threshold = thresholds[i];
      break;
    }

  ptrdiff_t lo = -1, hi = -1;
  for (size_t i = 0; i < n; ++i) {
    if (far[i] > frr[i]) lo = static_cast<ptrdiff_t>(i);
    if (far[i] < frr[i] && hi < 0) hi = static_cast<ptrdiff_t>(i);
  }

  bool have_interp = false;
  double interp_value = 0.0, interp_threshold = 0.0;
  if (lo >= 0 && hi >= 0) {
    const double d_lo = far[lo] - frr[lo];
    const double d_hi = far[hi] - frr[hi];
    const double s = d_lo / (d_lo - d_hi);
    interp_value = far[lo] + s * (far[hi] - far[lo]);
    interp_threshold = thresholds[lo] + s * (thresholds[hi] - thresholds[lo]);
    have_interp = true;
  } else if (!have_tie) {
    // FAR stays above FRR through every candidate; close the sweep with a
    // virtual threshold above the maximum where FAR = 0 and FRR = 1.
    const double d_lo = far[n - 1] - frr[n - 1];
    const double s = d_lo / (d_lo + 1.0);
    interp_value = far[n - 1] + s * (0.0 - far[n - 1]);
    interp_threshold = thresholds[n - 1];
    have_interp = true;
  }

  if (have_tie && (!have_interp || tie_value <= interp_value))
    return {tie_value, tie_threshold};
  return {interp_value, interp_threshold};
}

Confusion confusion(const ScoreSet& set, double threshold) {
  set.validate();
  Confusion c{};
  for (size_t i = 0; i < set.scores.size(); ++i) {
    const int actual = set.labels[i] == Label::bonafide ? 0 : 1;
    const int predicted = set.scores[i] >= threshold ? 0 : 1;
    c[actual][predicted]++;
  }
  return c;
}

double accuracy(const ScoreSet& set, double threshold) {
  const Confusion c = confusion(set, threshold);
  const int64_t correct = c[0][0] + c[1][1];
  return static_cast<double>(correct) / static_cast<double>(set.scores.size());
}

double accuracy_argmax(const ScoreSet& set) {
  set.validate();
  int64_t correct = 0;
  for (size_t i = 0; i < set.scores.size(); ++i) {
    const bool predicted_bona = set.scores[i] > 0.0;
    if (predicted_bona == (set.labels[i] == Label::bonafide)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(set.scores.size());
}

EvalReport report(const ScoreSet& set) {
  const auto [e, thr] = eer(set);
  EvalReport r;
  r.eer = e;
  r.eer_threshold = thr;
  r.confusion = confusion(set, thr);
  r.accuracy_at_eer = accuracy(set, thr);
  r.accuracy_argmax = accuracy_argmax(set);
  for (Label l : set.labels) (l == Label::bonafide ? r.n_bonafide : r.n_spoof)++;
  return r;
}

std::string report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["accuracy_argmax"] = r.accuracy_argmax;
  j["accuracy_at_eer"] = r.accuracy_at_eer;
  j["eer"] = r.eer;
  j["eer_threshold"] = r.eer_threshold;
  j["confusion"] = {{r.confusion[0][0], r.confusion[0][1]},
                    {r.confusion[1][0], r.confusion[1][1]}};
  j["n_bonafide"] = r.n_bonafide;
  j["n_spoof"] = r.n_spoof;
  return j.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("report json: ") + e.what());
  }
  EvalReport r;
  r.accuracy_argmax = j.at("accuracy_argmax").get<double>();
  r.accuracy_at_eer = j.at("accuracy_at_eer").get<double>();
  r.eer = j.at("eer").get<double>();
  r.eer_threshold = j.at("eer_threshold").get<double>();
  for (int a = 0; a < 2; ++a)
    for (int p = 0; p < 2; ++p) r.confusion[a][p] = j.at("confusion").at(a).at(p).get<int64_t>();
  r.n_bonafide = j.at("n_bonafide").get<int64_t>();
  r.n_spoof = j.at("n_spoof").get<int64_t>();
  return r;
}

std::string confusion_csv(const Confusion& c) {
  std::string out = "actual,predicted,count\n";
  const char* names[2] = {"bonafide", "spoof"};
  for (int a = 0; a < 2; ++a)
    for (int p = 0; p < 2; ++p)
      out += std::string(names[a]) + "," + names[p] + "," + std::to_string(c[a][p]) + "\n";
  return out;
}

}  // namespace qv
