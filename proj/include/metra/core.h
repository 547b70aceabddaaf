// Domain types: piano rolls, level sequences, level distributions, CRF
// parameters and CRF states.

#ifndef METRA_CORE_H
#define METRA_CORE_H

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "metra/error.h"

namespace metra {

inline constexpr int kNumPitches = 128;
inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Largest hierarchy depth the state space supports (2^L states).
inline constexpr int kMaxLayers = 12;

// ---------------------------------------------------------------------------
// Piano roll
// ---------------------------------------------------------------------------

enum class Cell : std::uint8_t { kSilent = 0, kHold = 1, kOnset = 2 };

/// One track of a tatum-quantized piano roll: num_steps x 128 cells.
class TrackRoll {
 public:
  TrackRoll() = default;
  TrackRoll(std::string name, int num_steps);

  int num_steps() const { return num_steps_; }
  const std::string& name() const { return name_; }

  Cell at(int step, int pitch) const {
    return static_cast<Cell>(cells_[index(step, pitch)]);
  }
  void set(int step, int pitch, Cell c) {
    cells_[index(step, pitch)] = static_cast<std::uint8_t>(c);
  }

  // Row view of one step, 128 entries.
  const std::uint8_t* row(int step) const {
    return cells_.data() + static_cast<std::size_t>(step) * kNumPitches;
  }

  int onset_count() const;

  // A hold at step i requires a non-silent cell at step i-1, same pitch.
  bool holds_are_continuations() const;

  bool operator==(const TrackRoll&) const = default;

 private:
  std::size_t index(int step, int pitch) const;

  std::string name_;
  int num_steps_ = 0;
  std::vector<std::uint8_t> cells_;
};

/// Multi-track roll at sixteenth-note resolution. All tracks share num_steps.
class PianoRoll {
 public:
  static constexpr const char* kTatumUnit = "sixteenth";

  PianoRoll() = default;
  explicit PianoRoll(int num_steps);
  PianoRoll(int num_steps, std::vector<TrackRoll> tracks);

  int num_steps() const { return num_steps_; }
  int num_tracks() const { return static_cast<int>(tracks_.size()); }
  const std::vector<TrackRoll>& tracks() const { return tracks_; }
  const TrackRoll& track(int t) const { return tracks_.at(t); }

  void add_track(TrackRoll track);

  bool operator==(const PianoRoll&) const = default;

 private:
  int num_steps_ = 0;
  std::vector<TrackRoll> tracks_;
};

// ---------------------------------------------------------------------------
// Metrical levels
// ---------------------------------------------------------------------------

/// Per-tatum boundary levels in [0, num_layers].
struct LevelSequence {
  std::vector<int> levels;
  int num_layers = 0;

  int size() const { return static_cast<int>(levels.size()); }
  bool valid() const;
  bool operator==(const LevelSequence&) const = default;
};

/// Probability over boundary levels 0..L at one tatum.
struct LevelDistribution {
  std::vector<double> probs;

  int num_layers() const { return static_cast<int>(probs.size()) - 1; }
  bool valid(double tol = 1e-6) const;

  static LevelDistribution uniform(int num_layers);
  static LevelDistribution one_hot(int num_layers, int level);

  bool operator==(const LevelDistribution&) const = default;
};

using DistributionSequence = std::vector<LevelDistribution>;

/// Probability that the tatum carries a boundary of level >= `level`.
double cumulative_prob(const LevelDistribution& d, int level);

DistributionSequence one_hot_sequence(const LevelSequence& seq);

// ---------------------------------------------------------------------------
// CRF parameters and states
// ---------------------------------------------------------------------------

/// Per-level deletion/insertion penalties; index 0 holds level 1.
/// +infinity turns the level into a hard binary-regularity constraint.
struct CrfParams {
  int num_layers = 0;
  std::vector<double> w_del;
  std::vector<double> w_ins;

  double del(int level) const { return w_del.at(level - 1); }
  double ins(int level) const { return w_ins.at(level - 1); }

  // Throws RangeError when a weight is not strictly positive.
  void validate() const;

  static CrfParams uniform(int num_layers, double w_del, double w_ins);
  static CrfParams hard(int num_layers);
  // Hard up to the measure level (4), w_del=15 / w_ins=20 above it.
  static CrfParams metrical_defaults(int num_layers);

  // Parameters for levels first_level+1..L, renumbered from 1.
  CrfParams upper_levels(int first_level) const;

  bool operator==(const CrfParams&) const = default;
};

/// Joint layer state z = (z^(1)..z^(L)); bit l-1 holds z^(l).
struct CrfState {
  std::uint32_t bits = 0;
  int num_layers = 0;

  bool bit(int level) const { return (bits >> (level - 1)) & 1u; }
  bool operator==(const CrfState&) const = default;
};

/// Number of leading zero layers: L when all bits are zero.
int boundary_level(const CrfState& z);

}  // namespace metra

#endif  // METRA_CORE_H
