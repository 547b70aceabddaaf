// Beat-grid construction, tatum quantization, the piano-roll JSON
// interchange format and the synthetic hierarchical-rhythm corpus.

#ifndef METRA_INGEST_H
#define METRA_INGEST_H

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "metra/core.h"
#include "metra/midi.h"

namespace metra {

// ---------------------------------------------------------------------------
// Quantization
// ---------------------------------------------------------------------------

/// Sixteenth-note grid: point k sits at k * tpq / 4 ticks, rounded half up
/// when tpq is not divisible by 4 (drift never exceeds one tick).
struct TatumGrid {
  std::vector<long> ticks;
  int ticks_per_quarter = 0;

  int size() const { return static_cast<int>(ticks.size()); }
};

TatumGrid build_tatum_grid(const MidiSong& song, long end_tick);

/// Snaps onsets to the nearest grid point (ties to the earlier point) and
/// marks hold cells up to the last grid point before the note-off. Tracks
/// without any note on the grid are dropped; the rest keep file order.
PianoRoll quantize(const MidiSong& song, const TatumGrid& grid);

/// parse -> grid up to the last note-off -> quantize.
PianoRoll midi_to_roll(const MidiSong& song);

// ---------------------------------------------------------------------------
// Piano-roll JSON (schema version 1)
// ---------------------------------------------------------------------------

inline constexpr int kPianoRollJsonVersion = 1;

struct AnnotatedRoll {
  PianoRoll roll;
  std::optional<LevelSequence> levels;
};

std::string save_pianoroll_json(const PianoRoll& roll,
                                 const std::optional<LevelSequence>& levels = {});
AnnotatedRoll load_pianoroll_json(const std::string& text);

AnnotatedRoll load_pianoroll_file(const std::string& path);

// ---------------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------------

struct SyntheticConfig {
  int num_layers = 8;
  int num_songs = 100;
  int steps_per_song = 256;
  int tracks_per_song = 3;
  std::vector<double> onset_density;  // L+1 entries; empty = defaults
  double irregularity_rate = 0.0;
  std::uint64_t seed = 0;
  // Each track carries a single cue: even tracks onset density only, odd
  // tracks pitch contour only.
  bool single_feature_tracks = false;
  // Per-song transposition drawn from [-max_transpose, max_transpose].
  int max_transpose = 0;

  std::vector<double> densities() const;
  void validate() const;
};

std::vector<double> default_onset_density(int num_layers);

struct SyntheticSong {
  PianoRoll roll;
  LevelSequence levels;
  int phase = 0;
  int irregular_level = 0;  // 0 when regular
};

/// Regular level sequence: level L where (i + phase) % 2^L == 0, otherwise
/// the number of trailing zero bits of i + phase.
LevelSequence regular_level_sequence(int num_layers, int n, int phase);

SyntheticSong generate_song(const SyntheticConfig& config, int index);
std::vector<SyntheticSong> generate_synthetic(const SyntheticConfig& config);

}  // namespace metra

#endif  // METRA_INGEST_H
