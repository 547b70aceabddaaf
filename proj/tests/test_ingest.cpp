#include "doctest.h"

#include <bit>
#include <random>

#include "metra/ingest.h"
#include "metra/midi.h"
#include "smf_fixtures.h"

using namespace metra;
using namespace metra::testing;

namespace {

MidiError::Kind parse_error_kind(const Bytes& b) {
  try {
    parse_smf(b);
  } catch (const MidiError& e) {
    return e.kind();
  }
  FAIL("parse_smf accepted a malformed file");
  return MidiError::Kind::kMalformed;
}

MidiSong song_with(int tpq, std::vector<MidiNote> notes, int tracks = 1) {
  MidiSong s;
  s.ticks_per_quarter = tpq;
  s.num_tracks = tracks;
  s.notes = std::move(notes);
  return s;
}

PianoRoll random_roll(std::mt19937_64& rng, int n, int tracks) {
  PianoRoll roll(n);
  std::uniform_int_distribution<int> pitch(0, 127);
  std::bernoulli_distribution onset(0.2), hold(0.6);
  for (int t = 0; t < tracks; ++t) {
    TrackRoll tr("track " + std::to_string(t), n);
    for (int i = 0; i < n; ++i) {
      if (!onset(rng)) continue;
      const int p = pitch(rng);
      tr.set(i, p, Cell::kOnset);
      for (int j = i + 1; j < n && hold(rng); ++j) tr.set(j, p, Cell::kHold);
    }
    roll.add_track(std::move(tr));
  }
  return roll;
}

}  // namespace

TEST_CASE("single-note fixture") {
  const MidiSong s = parse_smf(smf_single_note());
  CHECK(s.format == 1);
  CHECK(s.ticks_per_quarter == 480);
  CHECK(s.num_tracks == 1);
  CHECK(s.notes == smf_single_note_expected());
  CHECK(s.tempo_map == std::vector<TempoEvent>{{0, 500000}});
  CHECK(s.time_signatures == std::vector<TimeSignatureEvent>{{0, 4, 4}});
  CHECK(s.unmatched_note_ons == 0);
  CHECK_FALSE(s.has_non_binary_meter());
}

TEST_CASE("running status, velocity-0 note-off and meta events") {
  const MidiSong s = parse_smf(smf_running_status());
  CHECK(s.format == 0);
  CHECK(s.ticks_per_quarter == 96);
  CHECK(s.notes == smf_running_status_expected());
  CHECK(s.tempo_map == std::vector<TempoEvent>{{0, 500000}, {144, 1000000}});
  CHECK(s.time_signatures == std::vector<TimeSignatureEvent>{{0, 3, 4}});
  CHECK(s.has_non_binary_meter());
}

TEST_CASE("multi-track fixture: names, sysex, FIFO matching, open note") {
  const MidiSong s = parse_smf(smf_two_tracks());
  CHECK(s.num_tracks == 2);
  CHECK(s.notes == smf_two_tracks_expected());
  CHECK(s.unmatched_note_ons == 1);
  CHECK(s.track_names == std::vector<std::string>{"", "Bass"});
  CHECK(s.tempo_map == std::vector<TempoEvent>{{0, 600000}});
  CHECK(s.end_tick() == 960);
}

TEST_CASE("empty track parses to zero notes") {
  const Bytes b{'M', 'T', 'h', 'd', 0, 0, 0, 6, 0, 0, 0, 1, 0, 96,
                'M', 'T', 'r', 'k', 0, 0, 0, 4, 0x00, 0xFF, 0x2F, 0x00};
  const MidiSong s = parse_smf(b);
  CHECK(s.notes.empty());
  CHECK(s.num_tracks == 1);
  CHECK_THROWS_AS(midi_to_roll(s), InsufficientDataError);
}

TEST_CASE("unknown chunks are skipped by length") {
  Bytes b = smf_single_note();
  const Bytes junk{'X', 'F', 'I', 'H', 0, 0, 0, 3, 1, 2, 3};
  b.insert(b.begin() + 14, junk.begin(), junk.end());
  CHECK(parse_smf(b).notes == smf_single_note_expected());
}

TEST_CASE("malformed files report their error category") {
  Bytes bad_tag = smf_single_note();
  bad_tag[3] = 'x';
  CHECK(parse_error_kind(bad_tag) == MidiError::Kind::kBadHeader);

  Bytes format2 = smf_single_note();
  format2[9] = 2;
  CHECK(parse_error_kind(format2) == MidiError::Kind::kUnsupportedFormat);

  Bytes cut = smf_single_note();
  cut.resize(cut.size() - 3);
  CHECK(parse_error_kind(cut) == MidiError::Kind::kTruncated);
  try {
    parse_smf(cut);
  } catch (const MidiError& e) {
    CHECK(e.offset() == 14);  // the MTrk chunk whose length overruns
  }

  // Declared chunk length shorter than the events: the parser stops at the
  // chunk boundary instead of reading on.
  Bytes short_chunk = smf_single_note();
  short_chunk[21] = 6;
  CHECK(parse_error_kind(short_chunk) == MidiError::Kind::kTruncated);

  Bytes missing_track = smf_single_note();
  missing_track[11] = 2;
  CHECK(parse_error_kind(missing_track) == MidiError::Kind::kTruncated);

  Bytes orphan_data = smf_single_note();
  orphan_data[23] = 0x3C;  // data byte with no running status
  CHECK(parse_error_kind(orphan_data) == MidiError::Kind::kMalformed);

  CHECK(parse_error_kind(Bytes{'M', 'T'}) == MidiError::Kind::kBadHeader);
}

TEST_CASE("tatum grid examples") {
  SUBCASE("480 tpq") {
    const TatumGrid g = build_tatum_grid(song_with(480, {}), 1920);
    REQUIRE(g.size() == 16);
    for (int k = 0; k < 16; ++k) CHECK(g.ticks[k] == 120 * k);
  }
  SUBCASE("4 tpq") {
    const TatumGrid g = build_tatum_grid(song_with(4, {}), 8);
    CHECK(g.ticks == std::vector<long>{0, 1, 2, 3, 4, 5, 6, 7});
  }
  SUBCASE("6 tpq rounds with bounded deviation") {
    const TatumGrid g = build_tatum_grid(song_with(6, {}), 12);
    CHECK(g.ticks == std::vector<long>{0, 2, 3, 5, 6, 8, 9, 11});
    for (int k = 0; k < g.size(); ++k) {
      CHECK(std::abs(g.ticks[k] - 1.5 * k) <= 1.0);
    }
  }
}

TEST_CASE("quantize examples") {
  SUBCASE("one quarter note") {
    const MidiSong s = song_with(480, {{0, 60, 0, 480, 90}});
    const PianoRoll r = quantize(s, build_tatum_grid(s, 960));
    REQUIRE(r.num_tracks() == 1);
    CHECK(r.num_steps() == 8);
    CHECK(r.track(0).at(0, 60) == Cell::kOnset);
    for (int i = 1; i <= 3; ++i) CHECK(r.track(0).at(i, 60) == Cell::kHold);
    CHECK(r.track(0).at(4, 60) == Cell::kSilent);
  }
  SUBCASE("very short note keeps exactly its onset cell") {
    const MidiSong s = song_with(480, {{0, 62, 100, 110, 90}});
    const PianoRoll r = quantize(s, build_tatum_grid(s, 480));
    CHECK(r.track(0).at(1, 62) == Cell::kOnset);
    CHECK(r.track(0).onset_count() == 1);
    for (int i : {0, 2, 3}) CHECK(r.track(0).at(i, 62) == Cell::kSilent);
  }
  SUBCASE("overlapping same-pitch notes take the union, both onsets kept") {
    const MidiSong s = song_with(480, {{0, 60, 0, 480, 90}, {0, 60, 240, 720, 90}});
    const PianoRoll r = quantize(s, build_tatum_grid(s, 960));
    const TrackRoll& t = r.track(0);
    CHECK(t.at(0, 60) == Cell::kOnset);
    CHECK(t.at(1, 60) == Cell::kHold);
    CHECK(t.at(2, 60) == Cell::kOnset);
    for (int i = 3; i <= 5; ++i) CHECK(t.at(i, 60) == Cell::kHold);
    CHECK(t.at(6, 60) == Cell::kSilent);
  }
  SUBCASE("ties snap to the earlier grid point") {
    const MidiSong s = song_with(480, {{0, 60, 60, 400, 90}, {0, 61, 61, 400, 90}});
    const PianoRoll r = quantize(s, build_tatum_grid(s, 480));
    CHECK(r.track(0).at(0, 60) == Cell::kOnset);
    CHECK(r.track(0).at(1, 61) == Cell::kOnset);
  }
  SUBCASE("tracks keep their order; empty tracks are dropped; names fall back") {
    MidiSong s = song_with(480, {{0, 60, 0, 120, 90}, {2, 64, 0, 120, 90}}, 3);
    s.track_names = {"lead", "unused", ""};
    const PianoRoll r = quantize(s, build_tatum_grid(s, 480));
    REQUIRE(r.num_tracks() == 2);
    CHECK(r.track(0).name() == "lead");
    CHECK(r.track(1).name() == "track2");
  }
  SUBCASE("note count preserved as onset count") {
    std::mt19937_64 rng(3);
    std::vector<MidiNote> notes;
    for (int k = 0; k < 40; ++k) {
      const long on = 120L * k + (rng() % 50);
      notes.push_back({0, 30 + k, on, on + 100 + static_cast<long>(rng() % 800), 90});
    }
    const MidiSong s = song_with(480, notes);
    const PianoRoll r = quantize(s, build_tatum_grid(s, s.end_tick()));
    CHECK(r.track(0).onset_count() == 40);
    CHECK(r.track(0).holds_are_continuations());
  }
}

TEST_CASE("fixture to piano roll") {
  const PianoRoll r = midi_to_roll(parse_smf(smf_running_status()));
  // end tick 336 at 96 tpq: 14 tatums of 24 ticks
  CHECK(r.num_steps() == 14);
  const TrackRoll& t = r.track(0);
  CHECK(t.at(0, 60) == Cell::kOnset);
  CHECK(t.at(0, 64) == Cell::kOnset);
  CHECK(t.at(3, 60) == Cell::kHold);
  CHECK(t.at(4, 60) == Cell::kSilent);
  CHECK(t.at(6, 67) == Cell::kOnset);
  CHECK(t.at(13, 67) == Cell::kHold);
}

TEST_CASE("synthetic ground truth is strictly regular without irregularity") {
  SyntheticConfig c;
  c.num_layers = 6;
  c.num_songs = 12;
  c.steps_per_song = 200;
  c.seed = 5;
  for (const auto& song : generate_synthetic(c)) {
    const auto& lv = song.levels.levels;
    CHECK(song.irregular_level == 0);
    CHECK(song.levels == regular_level_sequence(6, 200, song.phase));
    for (int l = 1; l <= 6; ++l) {
      std::vector<int> pos;
      for (int i = 0; i < 200; ++i) {
        if (lv[i] >= l) pos.push_back(i);
      }
      for (std::size_t k = 1; k < pos.size(); ++k) {
        int between = 0;
        for (int i = pos[k - 1]; i < pos[k]; ++i) between += lv[i] >= l - 1;
        CHECK(between == 2);
      }
    }
  }
}

TEST_CASE("synthetic boundary counts halve per level") {
  const LevelSequence s = regular_level_sequence(5, 128, 0);
  std::vector<int> count(6, 0);
  for (int l : s.levels) {
    for (int k = 0; k <= l; ++k) ++count[k];
  }
  for (int l = 1; l <= 5; ++l) CHECK(count[l] * 2 == count[l - 1]);
  CHECK(count[5] == 4);
}

TEST_CASE("synthetic irregularity inserts or deletes one hypermeasure") {
  SyntheticConfig c;
  c.num_layers = 6;
  c.num_songs = 20;
  c.irregularity_rate = 1.0;
  c.seed = 17;
  int irregular = 0;
  for (const auto& song : generate_synthetic(c)) {
    CHECK(song.levels.size() == c.steps_per_song);
    if (song.irregular_level == 0) continue;
    ++irregular;
    CHECK(song.irregular_level >= 5);
    CHECK(song.levels != regular_level_sequence(6, c.steps_per_song, song.phase));
  }
  CHECK(irregular == 20);
}

TEST_CASE("synthetic corpus is deterministic and saturates") {
  SyntheticConfig c;
  c.num_layers = 4;
  c.num_songs = 3;
  c.steps_per_song = 64;
  c.seed = 77;
  const auto a = generate_synthetic(c);
  const auto b = generate_synthetic(c);
  for (int k = 0; k < 3; ++k) {
    CHECK(a[k].roll == b[k].roll);
    CHECK(a[k].levels == b[k].levels);
  }
  c.seed = 78;
  CHECK_FALSE(generate_synthetic(c)[0].roll == a[0].roll);

  c.onset_density.assign(5, 1.0);
  for (const auto& song : generate_synthetic(c)) {
    for (const auto& t : song.roll.tracks()) CHECK(t.onset_count() == 64);
  }
  c.onset_density.assign(3, 1.0);
  CHECK_THROWS_AS(c.validate(), ShapeError);
}

TEST_CASE("piano-roll JSON round trip") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 80);
    const PianoRoll r = random_roll(rng, n, 1 + trial % 3);
    std::optional<LevelSequence> lv;
    if (trial % 2) lv = regular_level_sequence(5, n, trial);
    const std::string text = save_pianoroll_json(r, lv);
    const AnnotatedRoll back = load_pianoroll_json(text);
    CHECK(back.roll == r);
    CHECK(back.levels == lv);
    CHECK(save_pianoroll_json(back.roll, back.levels) == text);
  }
}

TEST_CASE("piano-roll JSON errors name the field") {
  auto field_of = [](const std::string& text) {
    try {
      load_pianoroll_json(text);
    } catch (const FormatError& e) {
      return e.field();
    }
    return std::string("<accepted>");
  };
  CHECK(field_of(R"({"version":1,"tatum":"sixteenth","num_steps":4})") == "tracks");
  CHECK(field_of(R"({"version":1,"tatum":"sixteenth","tracks":[]})") == "num_steps");
  CHECK(field_of(R"({"version":1,"tatum":"eighth","num_steps":4,"tracks":[]})") == "tatum");
  CHECK(field_of(R"({"version":1,"tatum":"sixteenth","num_steps":4,"tracks":[],"levels":[1,2]})") ==
        "levels");
  CHECK(field_of(R"({"version":1,"tatum":"sixteenth","num_steps":4,
                    "tracks":[{"name":"a","cells":[[9,60,2]]}]})") == "tracks[0].cells");
  CHECK(field_of("[1,2") == "");
  CHECK_THROWS_AS(
      load_pianoroll_json(R"({"version":2,"tatum":"sixteenth","num_steps":4,"tracks":[]})"),
      UnsupportedVersionError);
  CHECK_THROWS_AS(load_pianoroll_file("/nonexistent/file.json"), IoError);
}
