#include <fstream>
#include <sstream>

#include "json.hpp"
#include "metra/ingest.h"

namespace metra {

using nlohmann::json;

std::string save_pianoroll_json(const PianoRoll& roll,
                                const std::optional<LevelSequence>& levels) {
  json doc;
  doc["version"] = kPianoRollJsonVersion;
  doc["tatum"] = PianoRoll::kTatumUnit;
  doc["num_steps"] = roll.num_steps();
  json tracks = json::array();
  for (const TrackRoll& t : roll.tracks()) {
    json cells = json::array();
    for (int i = 0; i < t.num_steps(); ++i) {
      for (int q = 0; q < kNumPitches; ++q) {
        const Cell c = t.at(i, q);
        if (c != Cell::kSilent) {
          cells.push_back({i, q, static_cast<int>(c)});
        }
      }
    }
    tracks.push_back({{"name", t.name()}, {"cells", std::move(cells)}});
  }
  doc["tracks"] = std::move(tracks);
  if (levels) {
    if (levels->size() != roll.num_steps()) {
      throw ShapeError("level sequence length differs from num_steps");
    }
    doc["levels"] = levels->levels;
    doc["num_layers"] = levels->num_layers;
  }
  return doc.dump();
}

namespace {

const json& require(const json& obj, const char* field) {
  if (!obj.is_object() || !obj.contains(field)) {
    throw FormatError(field, "missing");
  }
  return obj.at(field);
}

int require_int(const json& obj, const char* field) {
  const json& v = require(obj, field);
  if (!v.is_number_integer()) throw FormatError(field, "expected an integer");
  return v.get<int>();
}

}  // namespace

AnnotatedRoll load_pianoroll_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError("", std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw FormatError("", "top level must be an object");

  const int version = require_int(doc, "version");
  if (version != kPianoRollJsonVersion) {
    throw UnsupportedVersionError("piano-roll JSON version " +
                                  std::to_string(version) +
                                  " is not supported (expected " +
                                  std::to_string(kPianoRollJsonVersion) + ")");
  }
  if (doc.contains("tatum") && doc["tatum"] != PianoRoll::kTatumUnit) {
    throw FormatError("tatum", "only \"sixteenth\" is supported");
  }
  const int n = require_int(doc, "num_steps");
  if (n < 1) throw FormatError("num_steps", "must be >= 1");

  const json& tracks = require(doc, "tracks");
  if (!tracks.is_array()) throw FormatError("tracks", "expected an array");
  AnnotatedRoll out{PianoRoll(n), std::nullopt};
  for (std::size_t t = 0; t < tracks.size(); ++t) {
    const json& tj = tracks[t];
    const std::string where = "tracks[" + std::to_string(t) + "]";
    if (!tj.is_object()) throw FormatError(where, "expected an object");
    std::string name = "track" + std::to_string(t);
    if (tj.contains("name")) {
      if (!tj["name"].is_string()) throw FormatError(where + ".name", "expected a string");
      name = tj["name"].get<std::string>();
    }
    if (!tj.contains("cells") || !tj["cells"].is_array()) {
      throw FormatError(where + ".cells", "missing or not an array");
    }
    TrackRoll roll(name, n);
    for (const json& c : tj["cells"]) {
      if (!c.is_array() || c.size() != 3 || !c[0].is_number_integer() ||
          !c[1].is_number_integer() || !c[2].is_number_integer()) {
        throw FormatError(where + ".cells", "entries must be [step, pitch, flag]");
      }
      const int step = c[0].get<int>();
      const int pitch = c[1].get<int>();
      const int flag = c[2].get<int>();
      if (step < 0 || step >= n || pitch < 0 || pitch >= kNumPitches) {
        throw FormatError(where + ".cells", "cell outside the roll");
      }
      if (flag != 1 && flag != 2) {
        throw FormatError(where + ".cells", "flag must be 1 (hold) or 2 (onset)");
      }
      roll.set(step, pitch, static_cast<Cell>(flag));
    }
    if (!roll.holds_are_continuations()) {
      throw FormatError(where + ".cells", "hold cell without a preceding note");
    }
    out.roll.add_track(std::move(roll));
  }

  if (doc.contains("levels") && !doc["levels"].is_null()) {
    const json& lv = doc["levels"];
    if (!lv.is_array() || static_cast<int>(lv.size()) != n) {
      throw FormatError("levels", "expected an array of num_steps integers");
    }
    LevelSequence seq;
    for (const json& v : lv) {
      if (!v.is_number_integer() || v.get<int>() < 0) {
        throw FormatError("levels", "entries must be non-negative integers");
      }
      seq.levels.push_back(v.get<int>());
    }
    if (doc.contains("num_layers")) {
      seq.num_layers = require_int(doc, "num_layers");
    } else {
      seq.num_layers = *std::max_element(seq.levels.begin(), seq.levels.end());
    }
    if (!seq.valid()) throw FormatError("levels", "entry above num_layers");
    out.levels = std::move(seq);
  }
  return out;
}

AnnotatedRoll load_pianoroll_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return load_pianoroll_json(ss.str());
}

}  // namespace metra
