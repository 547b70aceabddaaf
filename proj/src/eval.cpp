#include "metra/eval.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace metra {

std::vector<bool> peak_pick_downbeats(const DistributionSequence& p,
                                      const std::vector<int>& beat_positions,
                                      double threshold) {
  const int beats = static_cast<int>(beat_positions.size());
  std::vector<double> v(beats);
  for (int b = 0; b < beats; ++b) {
    const int pos = beat_positions[b];
    if (pos < 0 || pos >= static_cast<int>(p.size())) {
      throw RangeError("beat position " + std::to_string(pos) +
                       " outside the sequence");
    }
    v[b] = cumulative_prob(p[pos], kMeasureLevel);
  }
  std::vector<bool> flags(beats, false);
  for (int b = 0; b < beats; ++b) {
    if (!(v[b] > threshold)) continue;
    const int lo = std::max(0, b - 2);
    const int hi = std::min(beats - 1, b + 1);
    flags[b] = *std::max_element(v.begin() + lo, v.begin() + hi + 1) <= v[b];
  }
  return flags;
}

namespace {

PrecisionRecall from_counts(int tp, int fp, int fn) {
  PrecisionRecall r;
  const int pred = tp + fp;
  const int truth = tp + fn;
  if (pred == 0 && truth == 0) return {1.0, 1.0, 1.0};
  if (pred == 0 || truth == 0) return {pred == 0 ? 1.0 : 0.0,
                                       truth == 0 ? 1.0 : 0.0, 0.0};
  r.precision = static_cast<double>(tp) / pred;
  r.recall = static_cast<double>(tp) / truth;
  r.f1 = 2.0 * tp / (2.0 * tp + fp + fn);
  return r;
}

}  // namespace

PrecisionRecall boundary_f1(const LevelSequence& pred,
                            const LevelSequence& truth, int level, int begin,
                            int end) {
  if (pred.size() != truth.size()) {
    throw ShapeError("boundary_f1: lengths differ (" +
                     std::to_string(pred.size()) + " vs " +
                     std::to_string(truth.size()) + ")");
  }
  begin = std::max(begin, 0);
  end = std::min(end, truth.size());
  int tp = 0, fp = 0, fn = 0;
  for (int i = begin; i < end; ++i) {
    const bool a = pred.levels[i] >= level;
    const bool b = truth.levels[i] >= level;
    tp += a && b;
    fp += a && !b;
    fn += !a && b;
  }
  return from_counts(tp, fp, fn);
}

PrecisionRecall boundary_f1(const LevelSequence& pred,
                            const LevelSequence& truth, int level) {
  return boundary_f1(pred, truth, level, 0, truth.size());
}

double downbeat_f1(const std::vector<bool>& pred,
                   const std::vector<bool>& truth) {
  if (pred.size() != truth.size()) {
    throw ShapeError("downbeat_f1: lengths differ");
  }
  int tp = 0, fp = 0, fn = 0;
  for (std::size_t b = 0; b < pred.size(); ++b) {
    tp += pred[b] && truth[b];
    fp += pred[b] && !truth[b];
    fn += !pred[b] && truth[b];
  }
  return from_counts(tp, fp, fn).f1;
}

MeanStd mean_std(const std::vector<double>& values) {
  if (values.empty()) return {};
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  return {mean, std::sqrt(var)};
}

// ---------------------------------------------------------------------------
// Corpus evaluation
// ---------------------------------------------------------------------------

SongScores score_song(const DistributionSequence& pred,
                      const LevelSequence& truth_in, int offset,
                      const CrfParams& params, double peak_threshold) {
  const int L = params.num_layers;
  if (L < kMeasureLevel) {
    throw RangeError("evaluation needs at least 4 layers");
  }
  if (static_cast<int>(pred.size()) != truth_in.size()) {
    throw ShapeError("prediction and ground truth differ in length");
  }
  LevelSequence truth = truth_in;
  truth.num_layers = L;
  for (int& l : truth.levels) l = std::min(l, L);
  // Boundary sets nest by construction of a level sequence (level >= l'
  // implies level >= l), so only the range needs checking.
  if (!truth.valid()) throw FormatError("levels", "negative ground-truth level");

  SongScores out;
  const LevelSequence aligned = apply_offset(viterbi_decode(params, pred), offset);
  for (int l = 1; l <= kMeasureLevel; ++l) {
    out.level_f1[l] = boundary_f1(aligned, truth, l).f1;
  }

  const DistributionSequence shifted = apply_offset(pred, offset);
  std::vector<int> downbeats, beats;
  for (int i = 0; i < truth.size(); ++i) {
    if (truth.levels[i] >= kMeasureLevel) downbeats.push_back(i);
    if (truth.levels[i] >= kBeatLevel) beats.push_back(i);
  }

  if (L > kMeasureLevel && !downbeats.empty()) {
    const CrfParams upper = params.upper_levels(kMeasureLevel);
    const LevelSequence sub_pred =
        viterbi_decode(upper, subsample_to_measure_level(shifted, downbeats));
    LevelSequence sub_truth{{}, upper.num_layers};
    for (int d : downbeats) sub_truth.levels.push_back(truth.levels[d] - kMeasureLevel);
    for (int k = 1; k <= upper.num_layers; ++k) {
      out.level_f1[kMeasureLevel + k] = boundary_f1(sub_pred, sub_truth, k).f1;
    }
  }

  std::vector<bool> truth_flags;
  for (int b : beats) truth_flags.push_back(truth.levels[b] >= kMeasureLevel);
  out.downbeat_f1 =
      downbeat_f1(peak_pick_downbeats(shifted, beats, peak_threshold), truth_flags);
  return out;
}

EvalReport aggregate(const std::vector<SongScores>& songs, int skipped) {
  EvalReport report;
  report.num_songs = static_cast<int>(songs.size());
  report.skipped = skipped;
  std::map<int, std::vector<double>> per_level;
  std::vector<double> downbeat;
  for (const SongScores& s : songs) {
    for (const auto& [level, f1] : s.level_f1) per_level[level].push_back(f1);
    downbeat.push_back(s.downbeat_f1);
  }
  for (const auto& [level, values] : per_level) {
    report.per_level_f1[level] = mean_std(values);
  }
  report.downbeat_f1 = mean_std(downbeat);
  return report;
}

EvalReport evaluate_corpus(const EmissionModel& model,
                           const Calibration& calibration,
                           const std::vector<EvalSong>& corpus,
                           const CrfParams& params,
                           const EvalOptions& options) {
  if (corpus.empty()) throw ShapeError("evaluation corpus is empty");
  std::vector<const EvalSong*> annotated;
  for (const EvalSong& s : corpus) {
    if (s.truth) annotated.push_back(&s);
  }
  std::vector<SongScores> scores(annotated.size());
  auto work = [&](std::size_t k) {
    const EvalSong& s = *annotated[k];
    scores[k] = score_song(predict(model, s.roll), *s.truth, calibration.offset,
                           params, options.peak_threshold);
  };
  const int workers =
      std::min<int>(std::max(1, options.threads), static_cast<int>(annotated.size()));
  if (workers <= 1) {
    for (std::size_t k = 0; k < annotated.size(); ++k) work(k);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t k = w; k < annotated.size(); k += workers) work(k);
      });
    }
    for (auto& t : pool) t.join();
  }
  return aggregate(scores, static_cast<int>(corpus.size() - annotated.size()));
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json doc;
  nlohmann::ordered_json levels = nlohmann::ordered_json::object();
  for (const auto& [level, ms] : per_level_f1) {
    levels[std::to_string(level)] = {{"mean", ms.mean}, {"std", ms.std}};
  }
  doc["per_level"] = std::move(levels);
  doc["downbeat"] = {{"mean", downbeat_f1.mean}, {"std", downbeat_f1.std}};
  doc["num_songs"] = num_songs;
  doc["skipped"] = skipped;
  return doc.dump(2);
}

std::string EvalReport::to_text() const {
  std::ostringstream os;
  char line[96];
  std::snprintf(line, sizeof line, "%-10s %8s %8s\n", "level", "mean", "std");
  os << line;
  for (const auto& [level, ms] : per_level_f1) {
    std::snprintf(line, sizeof line, "%-10d %8.4f %8.4f\n", level, ms.mean, ms.std);
    os << line;
  }
  std::snprintf(line, sizeof line, "%-10s %8.4f %8.4f\n", "downbeat",
                downbeat_f1.mean, downbeat_f1.std);
  os << line;
  os << "songs " << num_songs << " (skipped " << skipped << ")\n";
  return os.str();
}

}  // namespace metra
