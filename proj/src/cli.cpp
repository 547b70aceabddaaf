#include "metra/cli.h"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <ostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "metra/checkpoint.h"
#include "metra/eval.h"
#include "metra/ingest.h"
#include "metra/io.h"
#include "metra/midi.h"
#include "metra/train.h"

namespace metra {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr const char* kManifestName = "manifest.json";

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ordered_json weights_json(const std::vector<double>& w) {
  ordered_json a = ordered_json::array();
  for (double v : w) {
    if (std::isinf(v)) {
      a.push_back("inf");
    } else {
      a.push_back(v);
    }
  }
  return a;
}

void log_config(std::ostream& err, const char* command, const ordered_json& cfg) {
  err << "[" << command << "] resolved config: " << cfg.dump() << "\n";
}

// Resolved config persisted next to an output: out.json -> out.run.json.
void write_run_config(const std::string& out, const ordered_json& cfg) {
  fs::path p(out);
  p.replace_extension(".run.json");
  write_file_atomic(p.string(), cfg.dump(2) + "\n");
}

std::vector<std::string> list_corpus(const std::string& dir) {
  if (!fs::is_directory(dir)) {
    throw IoError("corpus directory '" + dir + "' does not exist");
  }
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const fs::path& p = entry.path();
    const std::string name = p.filename().string();
    if (p.extension() != ".json" || name == kManifestName) continue;
    if (name.size() > 9 && name.ends_with(".run.json")) continue;
    files.push_back(p.string());
  }
  std::sort(files.begin(), files.end());
  return files;
}

bool is_midi_path(const std::string& path) {
  std::string ext = fs::path(path).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
  return ext == ".mid" || ext == ".midi" || ext == ".smf";
}

AnnotatedRoll load_song(const std::string& path, std::ostream& err) {
  if (is_midi_path(path)) {
    const MidiSong song = read_smf_file(path);
    if (song.has_non_binary_meter()) {
      err << "warning: '" << path
          << "' declares a non-binary meter; analysing on a 4/4 grid\n";
    }
    if (song.unmatched_note_ons > 0) {
      err << "warning: " << song.unmatched_note_ons
          << " note-on(s) without note-off closed at end of track\n";
    }
    return {midi_to_roll(song), std::nullopt};
  }
  return load_pianoroll_json(read_text_file(path));
}

ordered_json crf_json(const CrfParams& p) {
  return {{"w_del", weights_json(p.w_del)}, {"w_ins", weights_json(p.w_ins)}};
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthOptions {
  std::string out;
  SyntheticConfig cfg;
};

int cmd_synth(const SynthOptions& o, std::ostream& out, std::ostream& err) {
  const SyntheticConfig& cfg = o.cfg;
  cfg.validate();
  ordered_json resolved = {{"command", "synth"},
                           {"levels", cfg.num_layers},
                           {"songs", cfg.num_songs},
                           {"steps", cfg.steps_per_song},
                           {"tracks", cfg.tracks_per_song},
                           {"onset_density", cfg.densities()},
                           {"irregularity", cfg.irregularity_rate},
                           {"single_feature", cfg.single_feature_tracks},
                           {"max_transpose", cfg.max_transpose},
                           {"seed", cfg.seed}};
  log_config(err, "synth", resolved);

  std::error_code ec;
  fs::create_directories(o.out, ec);
  if (!fs::is_directory(o.out)) {
    throw IoError("cannot create output directory '" + o.out + "'");
  }
  ordered_json files = ordered_json::array();
  for (int k = 0; k < cfg.num_songs; ++k) {
    const SyntheticSong song = generate_song(cfg, k);
    char name[32];
    std::snprintf(name, sizeof name, "song_%05d.json", k);
    write_file_atomic((fs::path(o.out) / name).string(),
                      save_pianoroll_json(song.roll, song.levels));
    files.push_back(name);
  }
  ordered_json manifest = {{"seed", cfg.seed},
                           {"config", resolved},
                           {"config_hash", fnv1a_hex(resolved.dump())},
                           {"files", files}};
  write_file_atomic((fs::path(o.out) / kManifestName).string(),
                    manifest.dump(2) + "\n");
  out << "wrote " << cfg.num_songs << " songs to " << o.out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainOptions {
  std::string corpus;
  std::string out;
  int levels = 8;
  int channels = 32;
  int depth = 6;
  int effective_layers = -1;  // -1: min(levels, depth)
  double w_del_upper = 15.0;
  double w_ins_upper = 20.0;
  TrainConfig train;
};

CrfParams training_crf(const TrainOptions& o) {
  CrfParams p = CrfParams::hard(o.levels);
  for (int l = kMeasureLevel + 1; l <= o.levels; ++l) {
    p.w_del[l - 1] = o.w_del_upper;
    p.w_ins[l - 1] = o.w_ins_upper;
  }
  p.validate();
  return p;
}

int cmd_train(const TrainOptions& o, std::ostream& out, std::ostream& err) {
  ModelConfig mc;
  mc.num_layers = o.levels;
  mc.channels = o.channels;
  mc.depth = o.depth;
  mc.effective_layers =
      o.effective_layers >= 0 ? o.effective_layers : std::min(o.levels, o.depth);
  mc.validate();
  o.train.validate();
  const CrfParams crf = training_crf(o);

  ordered_json resolved = {{"command", "train"},
                           {"corpus", o.corpus},
                           {"levels", mc.num_layers},
                           {"channels", mc.channels},
                           {"depth", mc.depth},
                           {"effective_layers", mc.effective_layers},
                           {"lr", o.train.learning_rate},
                           {"epochs", o.train.epochs},
                           {"lambda", o.train.lambda_consistency},
                           {"batch", o.train.batch},
                           {"adam_beta1", o.train.adam_beta1},
                           {"adam_beta2", o.train.adam_beta2},
                           {"adam_eps", o.train.adam_eps},
                           {"seed", o.train.seed},
                           {"threads", o.train.threads},
                           {"crf", crf_json(crf)}};
  log_config(err, "train", resolved);

  const auto files = list_corpus(o.corpus);
  std::vector<PianoRoll> data;
  for (const auto& f : files) data.push_back(load_pianoroll_file(f).roll);
  if (data.empty()) {
    throw UsageError("corpus '" + o.corpus + "' contains no piano-roll files");
  }

  TrainResult result = train(data, crf, mc, o.train, [&](int epoch, double loss) {
    err << "epoch " << epoch + 1 << "/" << o.train.epochs << " loss " << loss
        << "\n";
  });
  Checkpoint ckpt{std::move(result.model), o.train, crf, crf,
                  std::move(result.epoch_losses), std::nullopt};
  write_checkpoint_file(o.out, ckpt);
  write_run_config(o.out, resolved);
  out << "trained on " << data.size() << " songs; checkpoint " << o.out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// calibrate
// ---------------------------------------------------------------------------

struct CalibrateOptions {
  std::string checkpoint;
  std::string song;
  std::string out;
  int level = kMeasureLevel;
};

int cmd_calibrate(const CalibrateOptions& o, std::ostream& out,
                  std::ostream& err) {
  Checkpoint ckpt = read_checkpoint_file(o.checkpoint);
  const AnnotatedRoll song = load_song(o.song, err);
  if (!song.levels) {
    throw UsageError("song '" + o.song + "' carries no ground-truth levels");
  }
  const DistributionSequence pred = predict(ckpt.model, song.roll);
  Calibration cal = calibrate_offset(pred, *song.levels, o.level, ckpt.decode_crf);
  cal.song_id = fs::path(o.song).stem().string();
  ckpt.calibration = cal;
  const std::string target = o.out.empty() ? o.checkpoint : o.out;
  write_checkpoint_file(target, ckpt);
  out << "offset " << cal.offset << " (F1 " << cal.score << ") from "
      << cal.song_id << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// decode
// ---------------------------------------------------------------------------

struct DecodeOptions {
  std::string checkpoint;
  std::string input;
  std::string out;
};

int cmd_decode(const DecodeOptions& o, std::ostream& out, std::ostream& err) {
  const ordered_json resolved = {{"command", "decode"},
                                 {"checkpoint", o.checkpoint},
                                 {"input", o.input}};
  log_config(err, "decode", resolved);
  const Checkpoint ckpt = read_checkpoint_file(o.checkpoint);
  const AnnotatedRoll song = load_song(o.input, err);
  if (song.roll.num_tracks() == 0) {
    throw UsageError("input '" + o.input + "' has no tracks");
  }
  const int offset = ckpt.calibration ? ckpt.calibration->offset : 0;
  if (!ckpt.calibration) err << "warning: checkpoint is not calibrated\n";

  const DistributionSequence pred = predict(ckpt.model, song.roll);
  const LevelSequence levels =
      apply_offset(viterbi_decode(ckpt.decode_crf, pred), offset);

  ordered_json doc;
  doc["num_steps"] = song.roll.num_steps();
  doc["num_layers"] = levels.num_layers;
  doc["offset"] = offset;
  ordered_json dists = ordered_json::array();
  for (const auto& d : pred) dists.push_back(d.probs);
  doc["distributions"] = std::move(dists);
  doc["levels"] = levels.levels;
  doc["dots"] = dot_diagram(levels.levels, levels.num_layers);
  write_file_atomic(o.out, doc.dump() + "\n");
  write_run_config(o.out, resolved);
  out << "decoded " << song.roll.num_steps() << " tatums to " << o.out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalCliOptions {
  std::string checkpoint;
  std::string corpus;
  std::string out;
  EvalOptions eval;
};

int cmd_eval(const EvalCliOptions& o, std::ostream& out, std::ostream& err) {
  const ordered_json resolved = {{"command", "eval"},
                                 {"checkpoint", o.checkpoint},
                                 {"corpus", o.corpus},
                                 {"threshold", o.eval.peak_threshold},
                                 {"threads", o.eval.threads}};
  log_config(err, "eval", resolved);
  const Checkpoint ckpt = read_checkpoint_file(o.checkpoint);
  std::vector<EvalSong> corpus;
  for (const auto& f : list_corpus(o.corpus)) {
    AnnotatedRoll song = load_pianoroll_file(f);
    corpus.push_back({std::move(song.roll), std::move(song.levels),
                      fs::path(f).stem().string()});
  }
  const bool any = std::any_of(corpus.begin(), corpus.end(),
                               [](const EvalSong& s) { return s.truth.has_value(); });
  if (!any) {
    throw UsageError("corpus '" + o.corpus + "' has no annotated songs");
  }
  const Calibration cal = ckpt.calibration.value_or(Calibration{});
  if (!ckpt.calibration) err << "warning: checkpoint is not calibrated\n";
  const EvalReport report =
      evaluate_corpus(ckpt.model, cal, corpus, ckpt.decode_crf, o.eval);
  write_file_atomic(o.out, report.to_json() + "\n");
  fs::path text_path(o.out);
  text_path.replace_extension(".txt");
  write_file_atomic(text_path.string(), report.to_text());
  write_run_config(o.out, resolved);
  out << report.to_text();
  return kExitOk;
}

}  // namespace

std::string dot_diagram(const std::vector<int>& levels, int num_layers) {
  std::string text;
  for (int row = num_layers + 1; row >= 1; --row) {
    std::string line;
    for (int l : levels) line += (l + 1 >= row) ? '.' : ' ';
    while (!line.empty() && line.back() == ' ') line.pop_back();
    text += line;
    text += '\n';
  }
  return text;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"metra: self-supervised hierarchical metrical structure analysis"};
  app.set_config("--config", "", "Read options from an INI/TOML file");
  app.fallthrough();
  app.require_subcommand(1);

  // Accepted everywhere for a uniform interface; not every command uses them.
  int unused_threads = 1;
  std::uint64_t unused_seed = 0;

  SynthOptions synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic annotated corpus");
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--songs", synth.cfg.num_songs, "Number of songs")->capture_default_str();
  s->add_option("--steps", synth.cfg.steps_per_song, "Tatums per song")->capture_default_str();
  s->add_option("--tracks", synth.cfg.tracks_per_song, "Tracks per song")->capture_default_str();
  s->add_option("--levels", synth.cfg.num_layers, "Hierarchy depth L")->capture_default_str();
  s->add_option("--irregularity", synth.cfg.irregularity_rate,
                "Probability of one hypermeasure insertion/deletion per song")
      ->capture_default_str();
  s->add_option("--density", synth.cfg.onset_density,
                "Onset probability per level (L+1 values)")
      ->delimiter(',');
  s->add_flag("--single-feature", synth.cfg.single_feature_tracks,
              "One cue type per track");
  s->add_option("--transpose", synth.cfg.max_transpose,
                "Maximum per-song transposition in semitones")
      ->capture_default_str();
  s->add_option("--seed", synth.cfg.seed, "Random seed")->capture_default_str();
  s->add_option("--threads", unused_threads)->group("");

  TrainOptions tr;
  auto* t = app.add_subcommand("train", "Train an emission model");
  t->add_option("--corpus", tr.corpus, "Directory of piano-roll JSON files")->required();
  t->add_option("--out", tr.out, "Checkpoint path")->required();
  t->add_option("--levels", tr.levels, "Hierarchy depth L")->capture_default_str();
  t->add_option("--channels", tr.channels, "Channel width")->capture_default_str();
  t->add_option("--depth", tr.depth, "Convolution blocks")->capture_default_str();
  t->add_option("--effective-layers", tr.effective_layers,
                "Deepest level the receptive field must span (default min(L, depth))");
  t->add_option("--w-del-upper", tr.w_del_upper,
                "Deletion penalty for levels above the measure")->capture_default_str();
  t->add_option("--w-ins-upper", tr.w_ins_upper,
                "Insertion penalty for levels above the measure")->capture_default_str();
  t->add_option("--lr", tr.train.learning_rate, "Learning rate")->capture_default_str();
  t->add_option("--epochs", tr.train.epochs, "Epochs")->capture_default_str();
  t->add_option("--lambda", tr.train.lambda_consistency,
                "Consistency loss weight")->capture_default_str();
  t->add_option("--batch", tr.train.batch, "Songs per step")->capture_default_str();
  t->add_option("--beta1", tr.train.adam_beta1)->capture_default_str();
  t->add_option("--beta2", tr.train.adam_beta2)->capture_default_str();
  t->add_option("--adam-eps", tr.train.adam_eps)->capture_default_str();
  t->add_option("--seed", tr.train.seed, "Random seed")->capture_default_str();
  t->add_option("--threads", tr.train.threads, "Worker threads")->capture_default_str();

  CalibrateOptions cal;
  auto* c = app.add_subcommand("calibrate", "Calibrate the global offset on one song");
  c->add_option("--checkpoint", cal.checkpoint, "Checkpoint path")->required();
  c->add_option("--song", cal.song, "Annotated piano-roll JSON")->required();
  c->add_option("--out", cal.out, "Output checkpoint (default: in place)");
  c->add_option("--level", cal.level, "Level scored during calibration")
      ->capture_default_str();
  c->add_option("--threads", unused_threads)->group("");
  c->add_option("--seed", unused_seed)->group("");

  DecodeOptions dec;
  auto* d = app.add_subcommand("decode", "Analyse one SMF or piano-roll JSON file");
  d->add_option("--checkpoint", dec.checkpoint, "Checkpoint path")->required();
  d->add_option("--input", dec.input, "Input .mid or .json")->required();
  d->add_option("--out", dec.out, "Analysis JSON path")->required();
  d->add_option("--threads", unused_threads)->group("");
  d->add_option("--seed", unused_seed)->group("");

  EvalCliOptions ev;
  auto* e = app.add_subcommand("eval", "Evaluate on an annotated corpus");
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint path")->required();
  e->add_option("--corpus", ev.corpus, "Directory of annotated JSON")->required();
  e->add_option("--out", ev.out, "Report JSON path (text report beside it)")->required();
  e->add_option("--threshold", ev.eval.peak_threshold, "Downbeat peak threshold")
      ->capture_default_str();
  e->add_option("--threads", ev.eval.threads, "Worker threads")->capture_default_str();
  e->add_option("--seed", unused_seed)->group("");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << "\n";
    if (!app.get_subcommands().empty()) {
      err << app.get_subcommands().front()->help();
    }
    return kExitUsage;
  }

  try {
    if (s->parsed()) return cmd_synth(synth, out, err);
    if (t->parsed()) return cmd_train(tr, out, err);
    if (c->parsed()) return cmd_calibrate(cal, out, err);
    if (d->parsed()) return cmd_decode(dec, out, err);
    if (e->parsed()) return cmd_eval(ev, out, err);
  } catch (const UsageError& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitUsage;
  } catch (const IoError& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitIo;
  } catch (const FormatError& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitIo;
  } catch (const UnsupportedVersionError& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitIo;
  } catch (const MidiError& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitIo;
  } catch (const InsufficientDataError& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitIo;
  } catch (const NumericalError& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitNumerical;
  } catch (const DecodeError& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitNumerical;
  } catch (const Error& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitUsage;
  } catch (const std::filesystem::filesystem_error& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitIo;
  }
  return kExitUsage;
}

}  // namespace metra
