#include "metra/midi.h"

#include <algorithm>
#include <deque>
#include <fstream>
#include <iterator>
#include <map>
#include <tuple>
#include <utility>

namespace metra {

MidiError::MidiError(Kind kind, std::size_t offset, const std::string& what)
    : Error("SMF parse error at byte offset " + std::to_string(offset) + ": " +
            what),
      kind_(kind),
      offset_(offset) {}

long MidiSong::end_tick() const {
  long end = 0;
  for (const auto& n : notes) end = std::max(end, n.offset);
  return end;
}

bool MidiSong::has_non_binary_meter() const {
  for (const auto& ts : time_signatures) {
    const int n = ts.numerator;
    if (n <= 0 || (n & (n - 1)) != 0) return true;
  }
  return false;
}

namespace {

using Kind = MidiError::Kind;

// Bounded cursor; every read checks against the end of the current chunk.
class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, std::size_t pos, std::size_t end)
      : bytes_(bytes), pos_(pos), end_(end) {}

  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ >= end_; }

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint32_t be(int n) {
    need(n);
    std::uint32_t v = 0;
    for (int k = 0; k < n; ++k) v = (v << 8) | bytes_[pos_++];
    return v;
  }
  std::uint32_t vlq() {
    const std::size_t start = pos_;
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) {
      const std::uint8_t b = u8();
      v = (v << 7) | (b & 0x7f);
      if (!(b & 0x80)) return v;
    }
    throw MidiError(Kind::kMalformed, start,
                    "variable-length quantity longer than 4 bytes");
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > end_) {
      throw MidiError(Kind::kTruncated, pos_,
                      "unexpected end of chunk (need " + std::to_string(n) +
                          " more bytes)");
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_;
  std::size_t end_;
};

struct OpenNote {
  long onset;
  int velocity;
};

void parse_track(Reader& r, int track, MidiSong& song) {
  std::map<std::pair<int, int>, std::deque<OpenNote>> open;
  long tick = 0;
  int running = 0;
  std::string name;

  auto close = [&](int channel, int pitch, long at) {
    auto it = open.find({channel, pitch});
    if (it == open.end() || it->second.empty()) return;  // stray note-off
    const OpenNote on = it->second.front();
    it->second.pop_front();
    long off = at;
    if (off <= on.onset) {
      off = on.onset + 1;
      ++song.zero_length_notes;
    }
    song.notes.push_back({track, pitch, on.onset, off, on.velocity});
  };

  while (!r.done()) {
    tick += r.vlq();
    const std::size_t at = r.pos();
    int status = r.u8();
    int first_data = -1;
    if (status < 0x80) {
      if (running == 0) {
        throw MidiError(Kind::kMalformed, at, "data byte without running status");
      }
      first_data = status;
      status = running;
    }

    if (status == 0xff) {
      running = 0;
      const int type = r.u8();
      const auto data = r.take(r.vlq());
      if (type == 0x2f) break;
      if (type == 0x51 && data.size() == 3) {
        song.tempo_map.push_back(
            {tick, (data[0] << 16) | (data[1] << 8) | data[2]});
      } else if (type == 0x58 && data.size() >= 2) {
        song.time_signatures.push_back({tick, data[0], 1 << data[1]});
      } else if (type == 0x03 && name.empty()) {
        name.assign(data.begin(), data.end());
      }
      continue;
    }
    if (status == 0xf0 || status == 0xf7) {
      running = 0;
      r.take(r.vlq());
      continue;
    }
    if (status > 0xf0) {
      throw MidiError(Kind::kMalformed, at,
                      "system message 0x" + std::to_string(status) +
                          " not allowed in a file");
    }

    running = status;
    const int kind = status & 0xf0;
    const int channel = status & 0x0f;
    const int d1 = first_data >= 0 ? first_data : r.u8();
    const bool two_bytes = kind != 0xc0 && kind != 0xd0;
    const int d2 = two_bytes ? r.u8() : 0;
    if (d1 > 0x7f || d2 > 0x7f) {
      throw MidiError(Kind::kMalformed, at, "data byte above 0x7f");
    }
    if (kind == 0x90 && d2 > 0) {
      open[{channel, d1}].push_back({tick, d2});
    } else if (kind == 0x80 || kind == 0x90) {
      close(channel, d1, tick);
    }
  }

  for (auto& [key, queue] : open) {
    while (!queue.empty()) {
      ++song.unmatched_note_ons;
      close(key.first, key.second, tick);
    }
  }
  song.track_names.push_back(name);
}

}  // namespace

MidiSong parse_smf(std::span<const std::uint8_t> bytes) {
  Reader head(bytes, 0, bytes.size());
  if (bytes.size() < 4 || !std::equal(bytes.begin(), bytes.begin() + 4, "MThd")) {
    throw MidiError(Kind::kBadHeader, 0, "missing MThd chunk");
  }
  head.take(4);
  const std::uint32_t header_len = head.be(4);
  if (header_len < 6) {
    throw MidiError(Kind::kBadHeader, 4, "header chunk shorter than 6 bytes");
  }
  Reader hdr(bytes, 8, std::min<std::size_t>(bytes.size(), 8 + header_len));
  if (8 + static_cast<std::size_t>(header_len) > bytes.size()) {
    throw MidiError(Kind::kTruncated, bytes.size(), "header chunk truncated");
  }
  MidiSong song;
  song.format = static_cast<int>(hdr.be(2));
  const int declared_tracks = static_cast<int>(hdr.be(2));
  const std::uint32_t division = hdr.be(2);
  if (song.format == 2) {
    throw MidiError(Kind::kUnsupportedFormat, 8, "format 2 is not supported");
  }
  if (song.format > 2) {
    throw MidiError(Kind::kBadHeader, 8,
                    "unknown format " + std::to_string(song.format));
  }
  if (division & 0x8000) {
    throw MidiError(Kind::kUnsupportedFormat, 12,
                    "SMPTE time division is not supported");
  }
  if (division == 0) throw MidiError(Kind::kBadHeader, 12, "zero division");
  song.ticks_per_quarter = static_cast<int>(division);

  std::size_t pos = 8 + header_len;
  int track = 0;
  while (track < declared_tracks) {
    if (pos + 8 > bytes.size()) {
      throw MidiError(Kind::kTruncated, pos,
                      "expected " + std::to_string(declared_tracks) +
                          " track chunks, found " + std::to_string(track));
    }
    Reader chunk(bytes, pos, pos + 8);
    const auto tag = chunk.take(4);
    const std::uint32_t len = chunk.be(4);
    const std::size_t body = pos + 8;
    if (body + len > bytes.size()) {
      throw MidiError(Kind::kTruncated, pos,
                      "chunk declares " + std::to_string(len) +
                          " bytes but only " +
                          std::to_string(bytes.size() - body) + " remain");
    }
    if (std::equal(tag.begin(), tag.end(), "MTrk")) {
      Reader r(bytes, body, body + len);
      parse_track(r, track, song);
      ++track;
    }
    pos = body + len;
  }
  song.num_tracks = track;

  std::sort(song.notes.begin(), song.notes.end(),
            [](const MidiNote& a, const MidiNote& b) {
              return std::tie(a.track, a.onset, a.pitch, a.offset) <
                     std::tie(b.track, b.onset, b.pitch, b.offset);
            });
  auto by_tick = [](const auto& a, const auto& b) { return a.tick < b.tick; };
  std::stable_sort(song.tempo_map.begin(), song.tempo_map.end(), by_tick);
  std::stable_sort(song.time_signatures.begin(), song.time_signatures.end(),
                   by_tick);
  if (song.tempo_map.empty() || song.tempo_map.front().tick != 0) {
    song.tempo_map.insert(song.tempo_map.begin(), TempoEvent{});
  }
  if (song.time_signatures.empty() || song.time_signatures.front().tick != 0) {
    song.time_signatures.insert(song.time_signatures.begin(),
                                TimeSignatureEvent{});
  }
  return song;
}

MidiSong read_smf_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  return parse_smf(bytes);
}

}  // namespace metra
