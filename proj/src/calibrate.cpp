#include "metra/calibrate.h"

#include <cstdlib>

#include "metra/eval.h"

namespace metra {

LevelSequence apply_offset(const LevelSequence& levels, int offset) {
  const int n = levels.size();
  if (std::abs(offset) > n) throw RangeError("offset larger than sequence");
  LevelSequence out{std::vector<int>(n, 0), levels.num_layers};
  for (int i = 0; i < n; ++i) {
    const int j = i + offset;
    if (j >= 0 && j < n) out.levels[j] = levels.levels[i];
  }
  return out;
}

DistributionSequence apply_offset(const DistributionSequence& p, int offset) {
  const int n = static_cast<int>(p.size());
  if (std::abs(offset) > n) throw RangeError("offset larger than sequence");
  if (n == 0) return {};
  DistributionSequence out(n,
                           LevelDistribution::uniform(p.front().num_layers()));
  for (int i = 0; i < n; ++i) {
    const int j = i + offset;
    if (j >= 0 && j < n) out[j] = p[i];
  }
  return out;
}

Calibration calibrate_offset(const LevelSequence& decoded,
                             const LevelSequence& truth, int max_level) {
  const int n = truth.size();
  if (decoded.size() != n) {
    throw ShapeError("prediction and truth differ in length");
  }
  if (n < kMinCalibrationSteps) {
    throw InsufficientDataError(
        "calibration needs at least " + std::to_string(kMinCalibrationSteps) +
        " tatums, song has " + std::to_string(n));
  }
  if (max_level < 0 || max_level > decoded.num_layers) {
    throw RangeError("calibration level out of range");
  }
  Calibration best;
  best.score = -1.0;
  // Visit 0, -1, +1, -2, +2, ... so that strict improvement encodes the
  // tie order.
  for (int mag = 0; mag <= kMaxCalibrationOffset; ++mag) {
    for (int s : {-mag, mag}) {
      if (mag == 0 && s > 0) continue;
      const LevelSequence shifted = apply_offset(decoded, s);
      const int begin = std::max(0, s);
      const int end = std::min(n, n + s);
      const double f1 = boundary_f1(shifted, truth, max_level, begin, end).f1;
      if (f1 > best.score) {
        best.score = f1;
        best.offset = s;
      }
    }
  }
  return best;
}

Calibration calibrate_offset(const DistributionSequence& pred,
                             const LevelSequence& truth, int max_level,
                             const CrfParams& params) {
  if (static_cast<int>(pred.size()) != truth.size()) {
    throw ShapeError("prediction and truth differ in length");
  }
  if (truth.size() < kMinCalibrationSteps) {
    throw InsufficientDataError(
        "calibration needs at least " + std::to_string(kMinCalibrationSteps) +
        " tatums, song has " + std::to_string(truth.size()));
  }
  return calibrate_offset(viterbi_decode(params, pred), truth, max_level);
}

}  // namespace metra
