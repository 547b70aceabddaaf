// Downbeat peak picking, boundary F1 and corpus-level reports.

#ifndef METRA_EVAL_H
#define METRA_EVAL_H

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "metra/calibrate.h"
#include "metra/core.h"
#include "metra/crf.h"
#include "metra/model.h"

namespace metra {

inline constexpr double kDefaultPeakThreshold = 0.25;
inline constexpr int kBeatLevel = 2;

/// Beat b is a downbeat when p(>=4) at its tatum is the maximum over beats
/// b-2..b+1 (ties allowed) and exceeds `threshold`.
std::vector<bool> peak_pick_downbeats(const DistributionSequence& p,
                                      const std::vector<int>& beat_positions,
                                      double threshold = kDefaultPeakThreshold);

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Exact-position F1 of the level >= `level` boundary sets. Two empty sets
/// score 1; one empty set scores 0.
PrecisionRecall boundary_f1(const LevelSequence& pred,
                            const LevelSequence& truth, int level);

PrecisionRecall boundary_f1(const LevelSequence& pred,
                            const LevelSequence& truth, int level, int begin,
                            int end);

double downbeat_f1(const std::vector<bool>& pred, const std::vector<bool>& truth);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population
};

MeanStd mean_std(const std::vector<double>& values);

struct EvalReport {
  std::map<int, MeanStd> per_level_f1;
  MeanStd downbeat_f1;
  int num_songs = 0;
  int skipped = 0;

  std::string to_json() const;
  std::string to_text() const;
};

struct EvalSong {
  PianoRoll roll;
  std::optional<LevelSequence> truth;
  std::string id;
};

struct EvalOptions {
  double peak_threshold = kDefaultPeakThreshold;
  int threads = 1;
};

/// Per song: predict, decode, shift by the calibration offset and score.
/// Levels 1..4 come from the full decode; hypermetrical levels 5..L are
/// decoded from the predictions at ground-truth downbeats only.
EvalReport evaluate_corpus(const EmissionModel& model,
                           const Calibration& calibration,
                           const std::vector<EvalSong>& corpus,
                           const CrfParams& params,
                           const EvalOptions& options = {});

/// Scoring half of evaluate_corpus for precomputed predictions.
struct SongScores {
  std::map<int, double> level_f1;
  double downbeat_f1 = 0.0;
};
SongScores score_song(const DistributionSequence& pred,
                      const LevelSequence& truth, int offset,
                      const CrfParams& params,
                      double peak_threshold = kDefaultPeakThreshold);

EvalReport aggregate(const std::vector<SongScores>& songs, int skipped);

}  // namespace metra

#endif  // METRA_EVAL_H
