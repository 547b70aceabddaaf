// Global-offset calibration of decoded predictions against one annotated
// song.

#ifndef METRA_CALIBRATE_H
#define METRA_CALIBRATE_H

#include <string>

#include "metra/core.h"
#include "metra/crf.h"

namespace metra {

inline constexpr int kMaxCalibrationOffset = 32;
inline constexpr int kMinCalibrationSteps = 2 * kMaxCalibrationOffset + 1;

struct Calibration {
  int offset = 0;      // added to prediction indices; |offset| <= 32
  double score = 0.0;  // best boundary F1
  std::string song_id;

  bool operator==(const Calibration&) const = default;
};

/// Shifts entries by `offset` (out[i + offset] = in[i]); vacated slots get
/// level 0.
LevelSequence apply_offset(const LevelSequence& levels, int offset);

/// Same shift on distributions; vacated slots get the uniform distribution.
DistributionSequence apply_offset(const DistributionSequence& p, int offset);

/// Scores every offset in [-32, 32] by level-`max_level` boundary F1 on the
/// region where shifted prediction and truth overlap. Ties go to the smaller
/// |offset|, then to the negative one.
Calibration calibrate_offset(const LevelSequence& decoded,
                             const LevelSequence& truth, int max_level);

/// Decodes `pred` with viterbi_decode first.
Calibration calibrate_offset(const DistributionSequence& pred,
                             const LevelSequence& truth, int max_level,
                             const CrfParams& params);

}  // namespace metra

#endif  // METRA_CALIBRATE_H
