#include "metra/core.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <string>

namespace metra {

// ---------------------------------------------------------------------------
// TrackRoll / PianoRoll
// ---------------------------------------------------------------------------

TrackRoll::TrackRoll(std::string name, int num_steps)
    : name_(std::move(name)),
      num_steps_(num_steps),
      cells_(static_cast<std::size_t>(num_steps) * kNumPitches, 0) {
  if (num_steps < 1) throw RangeError("track roll needs at least one step");
}

std::size_t TrackRoll::index(int step, int pitch) const {
  if (step < 0 || step >= num_steps_ || pitch < 0 || pitch >= kNumPitches) {
    throw RangeError("cell (" + std::to_string(step) + ", " +
                     std::to_string(pitch) + ") out of range");
  }
  return static_cast<std::size_t>(step) * kNumPitches + pitch;
}

int TrackRoll::onset_count() const {
  return static_cast<int>(std::count(cells_.begin(), cells_.end(),
                                     static_cast<std::uint8_t>(Cell::kOnset)));
}

bool TrackRoll::holds_are_continuations() const {
  for (int i = 0; i < num_steps_; ++i) {
    for (int q = 0; q < kNumPitches; ++q) {
      if (at(i, q) != Cell::kHold) continue;
      if (i == 0 || at(i - 1, q) == Cell::kSilent) return false;
    }
  }
  return true;
}

PianoRoll::PianoRoll(int num_steps) : num_steps_(num_steps) {
  if (num_steps < 1) throw RangeError("piano roll needs at least one step");
}

PianoRoll::PianoRoll(int num_steps, std::vector<TrackRoll> tracks)
    : PianoRoll(num_steps) {
  for (auto& t : tracks) add_track(std::move(t));
}

void PianoRoll::add_track(TrackRoll track) {
  if (track.num_steps() != num_steps_) {
    throw ShapeError("track '" + track.name() + "' has " +
                     std::to_string(track.num_steps()) + " steps, roll has " +
                     std::to_string(num_steps_));
  }
  tracks_.push_back(std::move(track));
}

// ---------------------------------------------------------------------------
// Levels and distributions
// ---------------------------------------------------------------------------

bool LevelSequence::valid() const {
  return std::all_of(levels.begin(), levels.end(),
                     [&](int l) { return l >= 0 && l <= num_layers; });
}

bool LevelDistribution::valid(double tol) const {
  if (probs.empty()) return false;
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) return false;
    sum += p;
  }
  return std::abs(sum - 1.0) <= tol;
}

LevelDistribution LevelDistribution::uniform(int num_layers) {
  return {std::vector<double>(num_layers + 1, 1.0 / (num_layers + 1))};
}

LevelDistribution LevelDistribution::one_hot(int num_layers, int level) {
  if (level < 0 || level > num_layers) throw RangeError("level out of range");
  LevelDistribution d{std::vector<double>(num_layers + 1, 0.0)};
  d.probs[level] = 1.0;
  return d;
}

double cumulative_prob(const LevelDistribution& d, int level) {
  if (level < 0 || level > d.num_layers()) {
    throw RangeError("level " + std::to_string(level) +
                     " outside [0, " + std::to_string(d.num_layers()) + "]");
  }
  return std::accumulate(d.probs.begin() + level, d.probs.end(), 0.0);
}

DistributionSequence one_hot_sequence(const LevelSequence& seq) {
  DistributionSequence out;
  out.reserve(seq.levels.size());
  for (int l : seq.levels) {
    out.push_back(LevelDistribution::one_hot(seq.num_layers, l));
  }
  return out;
}

// ---------------------------------------------------------------------------
// CrfParams / CrfState
// ---------------------------------------------------------------------------

void CrfParams::validate() const {
  if (num_layers < 1 || num_layers > kMaxLayers) {
    throw CapacityError("num_layers must be in [1, " +
                        std::to_string(kMaxLayers) + "]");
  }
  if (static_cast<int>(w_del.size()) != num_layers ||
      static_cast<int>(w_ins.size()) != num_layers) {
    throw ShapeError("penalty vectors must have one entry per level");
  }
  for (int l = 0; l < num_layers; ++l) {
    if (!(w_del[l] > 0.0) || !(w_ins[l] > 0.0)) {
      throw RangeError("penalty weights must be > 0 (level " +
                       std::to_string(l + 1) + ")");
    }
  }
}

CrfParams CrfParams::uniform(int num_layers, double del, double ins) {
  CrfParams p{num_layers, std::vector<double>(num_layers, del),
              std::vector<double>(num_layers, ins)};
  p.validate();
  return p;
}

CrfParams CrfParams::hard(int num_layers) {
  return uniform(num_layers, kInf, kInf);
}

CrfParams CrfParams::metrical_defaults(int num_layers) {
  CrfParams p = hard(num_layers);
  for (int l = 5; l <= num_layers; ++l) {
    p.w_del[l - 1] = 15.0;
    p.w_ins[l - 1] = 20.0;
  }
  return p;
}

CrfParams CrfParams::upper_levels(int first_level) const {
  if (first_level < 0 || first_level >= num_layers) {
    throw RangeError("cannot take levels above " +
                     std::to_string(first_level) + " of " +
                     std::to_string(num_layers));
  }
  CrfParams p;
  p.num_layers = num_layers - first_level;
  p.w_del.assign(w_del.begin() + first_level, w_del.end());
  p.w_ins.assign(w_ins.begin() + first_level, w_ins.end());
  return p;
}

int boundary_level(const CrfState& z) {
  const int tz = std::countr_zero(z.bits);
  return std::min(tz, z.num_layers);
}

}  // namespace metra
