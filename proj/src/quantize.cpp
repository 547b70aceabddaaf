#include <algorithm>

#include "metra/ingest.h"

namespace metra {

TatumGrid build_tatum_grid(const MidiSong& song, long end_tick) {
  const long tpq = song.ticks_per_quarter;
  if (tpq <= 0) throw RangeError("ticks_per_quarter must be positive");
  TatumGrid grid;
  grid.ticks_per_quarter = song.ticks_per_quarter;
  // point k exists while k * tpq / 4 < end_tick
  for (long k = 0; k * tpq < 4 * end_tick; ++k) {
    grid.ticks.push_back((2 * k * tpq + 4) / 8);
  }
  return grid;
}

namespace {

// Nearest grid index, ties toward the earlier point; may return grid.size()
// when the onset lies closer to the (virtual) point after the last one.
int snap(const TatumGrid& grid, long tick) {
  const auto& t = grid.ticks;
  const int n = grid.size();
  const long next_virtual =
      (2 * static_cast<long>(n) * grid.ticks_per_quarter + 4) / 8;
  const int hi = static_cast<int>(std::lower_bound(t.begin(), t.end(), tick) -
                                  t.begin());
  if (hi == 0) return 0;
  const long after = hi < n ? t[hi] : next_virtual;
  const long before = t[hi - 1];
  return (tick - before <= after - tick) ? hi - 1 : hi;
}

}  // namespace

PianoRoll quantize(const MidiSong& song, const TatumGrid& grid) {
  if (grid.ticks.empty()) throw ShapeError("empty tatum grid");
  const int n = grid.size();
  std::vector<TrackRoll> rolls;
  std::vector<bool> used;
  for (int t = 0; t < song.num_tracks; ++t) {
    const std::string name =
        t < static_cast<int>(song.track_names.size()) &&
                !song.track_names[t].empty()
            ? song.track_names[t]
            : "track" + std::to_string(t);
    rolls.emplace_back(name, n);
    used.push_back(false);
  }
  for (const MidiNote& note : song.notes) {
    if (note.track < 0 || note.track >= song.num_tracks) continue;
    const int start = snap(grid, note.onset);
    if (start >= n) continue;
    TrackRoll& roll = rolls[note.track];
    used[note.track] = true;
    roll.set(start, note.pitch, Cell::kOnset);
    for (int j = start + 1; j < n && grid.ticks[j] < note.offset; ++j) {
      if (roll.at(j, note.pitch) == Cell::kSilent) {
        roll.set(j, note.pitch, Cell::kHold);
      }
    }
  }
  PianoRoll out(n);
  for (int t = 0; t < song.num_tracks; ++t) {
    if (used[t]) out.add_track(std::move(rolls[t]));
  }
  return out;
}

PianoRoll midi_to_roll(const MidiSong& song) {
  const long end = song.end_tick();
  if (end <= 0) throw InsufficientDataError("MIDI file contains no notes");
  return quantize(song, build_tatum_grid(song, end));
}

}  // namespace metra
