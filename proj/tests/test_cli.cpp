#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <sys/wait.h>

#include "json.hpp"
#include "metra/checkpoint.h"
#include "metra/cli.h"
#include "metra/crf.h"
#include "metra/ingest.h"
#include "metra/io.h"
#include "metra/midi.h"
#include "smf_fixtures.h"

using namespace metra;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() /
           ("metra_cli_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) { return read_text_file(path); }

std::vector<std::string> listing(const std::string& dir) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) names.push_back(e.path().filename());
  std::sort(names.begin(), names.end());
  return names;
}

// Small model so the CLI tests stay fast.
std::vector<std::string> small_train(const std::string& corpus, const std::string& out,
                                     const std::string& epochs = "1") {
  return {"train", "--corpus", corpus, "--out", out, "--levels", "5",
          "--channels", "4", "--depth", "5", "--epochs", epochs, "--seed", "3"};
}

}  // namespace

TEST_CASE("synth writes songs plus manifest and is reproducible") {
  TempDir d;
  REQUIRE(cli({"synth", "--out", d / "a", "--songs", "5", "--seed", "9", "--steps", "80"}).code == 0);
  REQUIRE(cli({"synth", "--out", d / "b", "--songs", "5", "--seed", "9", "--steps", "80"}).code == 0);
  const auto names = listing(d / "a");
  CHECK(names == std::vector<std::string>{"manifest.json", "song_00000.json", "song_00001.json",
                                          "song_00002.json", "song_00003.json", "song_00004.json"});
  for (const auto& n : names) CHECK(slurp(d / ("a/" + n)) == slurp(d / ("b/" + n)));

  const json manifest = json::parse(slurp(d / "a/manifest.json"));
  CHECK(manifest["seed"] == 9);
  CHECK(manifest["config"]["songs"] == 5);
  CHECK(manifest["config_hash"].get<std::string>().size() == 16);

  const AnnotatedRoll song = load_pianoroll_file(d / "a/song_00003.json");
  CHECK(song.roll.num_steps() == 80);
  CHECK(song.levels.has_value());

  REQUIRE(cli({"synth", "--out", d / "empty", "--songs", "0"}).code == 0);
  CHECK(listing(d / "empty") == std::vector<std::string>{"manifest.json"});
}

TEST_CASE("synth reports an unwritable path as an I/O error") {
  TempDir d;
  std::ofstream(d / "file") << "x";
  const Run r = cli({"synth", "--out", d / "file/sub", "--songs", "1"});
  CHECK(r.code == kExitIo);
}

TEST_CASE("train defaults, zero epochs and error paths") {
  TempDir d;
  REQUIRE(cli({"synth", "--out", d / "c", "--songs", "3", "--levels", "5", "--steps", "96"}).code == 0);

  SUBCASE("resolved config echoes the defaults") {
    std::vector<std::string> args{"train", "--corpus", d / "c", "--out", d / "m.json",
                                  "--epochs", "0"};
    const Run r = cli(args);
    REQUIRE(r.code == 0);
    const json cfg = json::parse(slurp(d / "m.run.json"));
    CHECK(cfg["levels"] == 8);
    CHECK(cfg["lr"] == 1e-4);
    CHECK(cfg["lambda"] == 1.0);
    CHECK(cfg["crf"]["w_del"] ==
          json::array({"inf", "inf", "inf", "inf", 15.0, 15.0, 15.0, 15.0}));
    CHECK(cfg["crf"]["w_ins"] ==
          json::array({"inf", "inf", "inf", "inf", 20.0, 20.0, 20.0, 20.0}));
    CHECK(r.err.find("\"epochs\":0") != std::string::npos);
    const Run defaults = cli({"train", "--help"});
    CHECK(defaults.code == 0);
    CHECK(defaults.out.find("10") != std::string::npos);
  }

  SUBCASE("zero epochs store the initialization") {
    REQUIRE(cli(small_train(d / "c", d / "m.json", "0")).code == 0);
    const Checkpoint ck = read_checkpoint_file(d / "m.json");
    ModelConfig mc;
    mc.num_layers = 5;
    mc.channels = 4;
    mc.depth = 5;
    mc.effective_layers = 5;
    CHECK(ck.model == EmissionModel::initialized(mc, 3));
    CHECK(ck.loss_log.empty());
    CHECK_FALSE(ck.calibration.has_value());
    CHECK(ck.crf == CrfParams::metrical_defaults(5));
  }

  SUBCASE("config file sits between defaults and flags") {
    std::ofstream(d / "run.ini") << "[train]\nepochs=0\nlr=0.5\n";
    auto args = small_train(d / "c", d / "m.json", "0");
    args.erase(args.end() - 4, args.end() - 2);  // drop --epochs
    args.insert(args.end(), {"--config", d / "run.ini", "--lr", "0.25"});
    const Run r = cli(args);
    REQUIRE(r.code == 0);
    const json cfg = json::parse(slurp(d / "m.run.json"));
    CHECK(cfg["epochs"] == 0);
    CHECK(cfg["lr"] == 0.25);
  }

  SUBCASE("missing corpus names the path") {
    const Run r = cli(small_train(d / "nowhere", d / "m.json"));
    CHECK(r.code == kExitIo);
    CHECK(r.err.find(d / "nowhere") != std::string::npos);
    CHECK_FALSE(fs::exists(d / "m.json"));
  }

  SUBCASE("empty corpus is a usage error") {
    fs::create_directories(d / "none");
    CHECK(cli(small_train(d / "none", d / "m.json")).code == kExitUsage);
  }

  SUBCASE("bad flags are usage errors") {
    CHECK(cli({"train", "--corpus", d / "c"}).code == kExitUsage);
    CHECK(cli({"train", "--corpus", d / "c", "--out", d / "m.json", "--epochs", "x"}).code ==
          kExitUsage);
    CHECK(cli({"frobnicate"}).code == kExitUsage);
    CHECK(cli({}).code == kExitUsage);
    auto neg = small_train(d / "c", d / "m.json");
    neg.insert(neg.end(), {"--lr", "-1"});
    CHECK(cli(neg).code == kExitUsage);
  }
}

TEST_CASE("calibrate stores an offset idempotently") {
  TempDir d;
  REQUIRE(cli({"synth", "--out", d / "c", "--songs", "2", "--levels", "5", "--steps", "96"}).code == 0);
  REQUIRE(cli(small_train(d / "c", d / "m.json")).code == 0);

  REQUIRE(cli({"calibrate", "--checkpoint", d / "m.json", "--song", d / "c/song_00001.json",
               "--out", d / "m1.json"}).code == 0);
  REQUIRE(cli({"calibrate", "--checkpoint", d / "m1.json", "--song", d / "c/song_00001.json",
               "--out", d / "m2.json"}).code == 0);
  CHECK(slurp(d / "m1.json") == slurp(d / "m2.json"));
  const Checkpoint ck = read_checkpoint_file(d / "m1.json");
  REQUIRE(ck.calibration.has_value());
  CHECK(ck.calibration->song_id == "song_00001");
  CHECK(std::abs(ck.calibration->offset) <= 32);

  // In place by default.
  REQUIRE(cli({"calibrate", "--checkpoint", d / "m.json", "--song",
               d / "c/song_00001.json"}).code == 0);
  CHECK(slurp(d / "m.json") == slurp(d / "m1.json"));

  SUBCASE("unannotated song") {
    const AnnotatedRoll song = load_pianoroll_file(d / "c/song_00000.json");
    write_file_atomic(d / "bare.json", save_pianoroll_json(song.roll));
    CHECK(cli({"calibrate", "--checkpoint", d / "m.json", "--song", d / "bare.json"}).code ==
          kExitUsage);
  }
  SUBCASE("short song") {
    const AnnotatedRoll song = load_pianoroll_file(d / "c/song_00000.json");
    PianoRoll shorter(40);
    for (const auto& t : song.roll.tracks()) {
      TrackRoll cut(t.name(), 40);
      for (int i = 0; i < 40; ++i) {
        for (int p = 0; p < kNumPitches; ++p) cut.set(i, p, t.at(i, p));
      }
      shorter.add_track(cut);
    }
    LevelSequence lv{{song.levels->levels.begin(), song.levels->levels.begin() + 40}, 5};
    write_file_atomic(d / "short.json", save_pianoroll_json(shorter, lv));
    const Run r = cli({"calibrate", "--checkpoint", d / "m.json", "--song", d / "short.json"});
    CHECK(r.code == kExitIo);
    CHECK(r.err.find("65") != std::string::npos);
  }
}

TEST_CASE("decode: JSON and SMF inputs of the same song agree") {
  TempDir d;
  REQUIRE(cli({"synth", "--out", d / "c", "--songs", "2", "--levels", "5", "--steps", "96"}).code == 0);
  REQUIRE(cli(small_train(d / "c", d / "m.json")).code == 0);

  {
    std::ofstream f(d / "song.mid", std::ios::binary);
    const auto bytes = testing::smf_running_status();
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<long>(bytes.size()));
  }
  const PianoRoll roll = midi_to_roll(parse_smf(testing::smf_running_status()));
  write_file_atomic(d / "song.json", save_pianoroll_json(roll));

  const Run a = cli({"decode", "--checkpoint", d / "m.json", "--input", d / "song.mid",
                     "--out", d / "a.json"});
  const Run b = cli({"decode", "--checkpoint", d / "m.json", "--input", d / "song.json",
                     "--out", d / "b.json"});
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  CHECK(slurp(d / "a.json") == slurp(d / "b.json"));
  CHECK(a.err.find("non-binary meter") != std::string::npos);

  const json doc = json::parse(slurp(d / "a.json"));
  CHECK(doc["num_steps"] == roll.num_steps());
  CHECK(doc["levels"].size() == static_cast<std::size_t>(roll.num_steps()));
  CHECK(doc["distributions"].size() == static_cast<std::size_t>(roll.num_steps()));
  CHECK(doc["distributions"][0].size() == 6);
  CHECK(doc["dots"].get<std::string>() ==
        dot_diagram(doc["levels"].get<std::vector<int>>(), 5));

  SUBCASE("parse failures exit 2 with diagnostics") {
    auto bytes = testing::smf_single_note();
    bytes.resize(bytes.size() - 3);
    std::ofstream f(d / "bad.mid", std::ios::binary);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<long>(bytes.size()));
    f.close();
    const Run r = cli({"decode", "--checkpoint", d / "m.json", "--input", d / "bad.mid",
                       "--out", d / "bad.json"});
    CHECK(r.code == kExitIo);
    CHECK(r.err.find("offset") != std::string::npos);
    CHECK_FALSE(fs::exists(d / "bad.json"));

    std::ofstream(d / "broken.json") << R"({"version":1,"tatum":"sixteenth","num_steps":4})";
    const Run j = cli({"decode", "--checkpoint", d / "m.json", "--input", d / "broken.json",
                       "--out", d / "bad.json"});
    CHECK(j.code == kExitIo);
    CHECK(j.err.find("tracks") != std::string::npos);
  }
}

TEST_CASE("perfect-oracle probabilities decode to the ground truth") {
  SyntheticConfig sc;
  sc.num_layers = 6;
  sc.num_songs = 5;
  for (const auto& song : generate_synthetic(sc)) {
    CHECK(viterbi_decode(CrfParams::metrical_defaults(6), one_hot_sequence(song.levels)) ==
          song.levels);
  }
}

TEST_CASE("dot diagram renders a level-l boundary as l+1 dots") {
  CHECK(dot_diagram({2, 0, 1, 0}, 2) == ".\n. .\n....\n");
  CHECK(dot_diagram({0, 0}, 1) == "\n..\n");
}

TEST_CASE("eval writes JSON and text reports deterministically") {
  TempDir d;
  REQUIRE(cli({"synth", "--out", d / "c", "--songs", "3", "--levels", "5", "--steps", "96",
               "--seed", "4"}).code == 0);
  REQUIRE(cli(small_train(d / "c", d / "m.json")).code == 0);
  const std::vector<std::string> args{"eval", "--checkpoint", d / "m.json", "--corpus", d / "c",
                                      "--out", d / "r1.json"};
  const Run r = cli(args);
  REQUIRE(r.code == 0);
  auto again = args;
  again.back() = d / "r2.json";
  again.insert(again.end(), {"--threads", "2"});
  REQUIRE(cli(again).code == 0);
  CHECK(slurp(d / "r1.json") == slurp(d / "r2.json"));
  CHECK(slurp(d / "r1.txt") == slurp(d / "r2.txt"));
  CHECK(r.out == slurp(d / "r1.txt"));

  const json rep = json::parse(slurp(d / "r1.json"));
  CHECK(rep["num_songs"] == 3);
  for (const auto& key : {"1", "2", "3", "4", "5"}) {
    REQUIRE(rep["per_level"].contains(key));
    const double mean = rep["per_level"][key]["mean"];
    CHECK(mean >= 0.0);
    CHECK(mean <= 1.0);
  }
  CHECK(rep["downbeat"].contains("mean"));

  fs::create_directories(d / "bare");
  const AnnotatedRoll song = load_pianoroll_file(d / "c/song_00000.json");
  write_file_atomic(d / "bare/x.json", save_pianoroll_json(song.roll));
  CHECK(cli({"eval", "--checkpoint", d / "m.json", "--corpus", d / "bare", "--out",
             d / "r3.json"}).code == kExitUsage);
  CHECK(cli({"eval", "--checkpoint", d / "missing.json", "--corpus", d / "c", "--out",
             d / "r3.json"}).code == kExitIo);
}

TEST_CASE("the installed binary maps errors to exit codes") {
  TempDir d;
  const std::string tool = METRA_TOOL_PATH;
  auto status = [](const std::string& cmd) {
    const int raw = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  };
  CHECK(status(tool + " --help") == 0);
  CHECK(status(tool + " synth") == kExitUsage);
  CHECK(status(tool + " train --corpus " + (d / "none") + " --out " + (d / "m.json")) == kExitIo);
  CHECK(status(tool + " synth --out " + (d / "c") + " --songs 1 --steps 70") == 0);
  CHECK(fs::exists(d / "c/song_00000.json"));
}
