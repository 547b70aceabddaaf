// Minimal Standard MIDI File reader (formats 0 and 1).

#ifndef METRA_MIDI_H
#define METRA_MIDI_H

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "metra/error.h"

namespace metra {

struct MidiNote {
  int track = 0;
  int pitch = 0;
  long onset = 0;   // ticks
  long offset = 0;  // ticks, > onset
  int velocity = 0;
  bool operator==(const MidiNote&) const = default;
};

struct TempoEvent {
  long tick = 0;
  int us_per_quarter = 500000;
  bool operator==(const TempoEvent&) const = default;
};

struct TimeSignatureEvent {
  long tick = 0;
  int numerator = 4;
  int denominator = 4;
  bool operator==(const TimeSignatureEvent&) const = default;
};

struct MidiSong {
  int format = 1;
  int ticks_per_quarter = 480;
  int num_tracks = 0;
  std::vector<std::string> track_names;  // one per MTrk chunk, may be empty
  std::vector<MidiNote> notes;           // sorted by (track, onset, pitch)
  std::vector<TempoEvent> tempo_map;     // sorted, first at tick 0
  std::vector<TimeSignatureEvent> time_signatures;  // sorted, first at tick 0

  // Note-ons still open at end of track (closed there) and notes whose
  // note-off landed on the onset tick (extended by one tick).
  int unmatched_note_ons = 0;
  int zero_length_notes = 0;

  long end_tick() const;
  // True when any time signature has a numerator that is not a power of two.
  bool has_non_binary_meter() const;
};

class MidiError : public Error {
 public:
  enum class Kind { kTruncated, kBadHeader, kUnsupportedFormat, kMalformed };

  MidiError(Kind kind, std::size_t offset, const std::string& what);

  Kind kind() const { return kind_; }
  std::size_t offset() const { return offset_; }

 private:
  Kind kind_;
  std::size_t offset_;
};

MidiSong parse_smf(std::span<const std::uint8_t> bytes);
MidiSong read_smf_file(const std::string& path);

}  // namespace metra

#endif  // METRA_MIDI_H
