#include <algorithm>
#include <bit>
#include <random>

#include "metra/ingest.h"

namespace metra {

// Rises linearly from 0.2 at level 0 to 1.0 at level L, so onset density
// separates every pair of levels, hypermetrical ones included.
std::vector<double> default_onset_density(int num_layers) {
  std::vector<double> d(num_layers + 1);
  for (int l = 0; l <= num_layers; ++l) {
    d[l] = 0.2 + 0.8 * static_cast<double>(l) / num_layers;
  }
  return d;
}

std::vector<double> SyntheticConfig::densities() const {
  return onset_density.empty() ? default_onset_density(num_layers)
                               : onset_density;
}

void SyntheticConfig::validate() const {
  if (num_layers < 1 || num_layers > kMaxLayers) {
    throw RangeError("num_layers out of range");
  }
  if (num_songs < 0) throw RangeError("num_songs must be >= 0");
  if (steps_per_song < 1) throw RangeError("steps_per_song must be >= 1");
  if (tracks_per_song < 1) throw RangeError("tracks_per_song must be >= 1");
  if (!onset_density.empty() &&
      static_cast<int>(onset_density.size()) != num_layers + 1) {
    throw ShapeError("onset_density needs L+1 entries");
  }
  for (double d : onset_density) {
    if (!(d >= 0.0 && d <= 1.0)) throw RangeError("densities must be in [0,1]");
  }
  if (max_transpose < 0 || max_transpose > 24) {
    throw RangeError("max_transpose must be in [0, 24]");
  }
  if (!(irregularity_rate >= 0.0 && irregularity_rate <= 1.0)) {
    throw RangeError("irregularity_rate must be in [0,1]");
  }
}

LevelSequence regular_level_sequence(int num_layers, int n, int phase) {
  LevelSequence seq{std::vector<int>(n), num_layers};
  const unsigned period = 1u << num_layers;
  for (int i = 0; i < n; ++i) {
    const unsigned pos = (static_cast<unsigned>(i) + phase) % period;
    seq.levels[i] = pos == 0 ? num_layers : std::countr_zero(pos);
  }
  return seq;
}

namespace {

constexpr int kMaxHold = 8;
constexpr int kIrregularFromLevel = 5;
constexpr int kBasePitch = 48;

// Regular levels from phase 0 with at most one irregular hypermeasure, then
// the window [phase, phase + n).
std::vector<int> song_levels(const SyntheticConfig& cfg, std::mt19937_64& rng,
                             int phase, int& irregular_level) {
  const int L = cfg.num_layers;
  const int n = cfg.steps_per_song;
  std::vector<int> base =
      regular_level_sequence(L, phase + n + (2 << L), 0).levels;
  irregular_level = 0;

  std::bernoulli_distribution irregular(cfg.irregularity_rate);
  if (L >= kIrregularFromLevel && irregular(rng)) {
    std::uniform_int_distribution<int> pick_level(kIrregularFromLevel, L);
    const int l = pick_level(rng);
    const int half = 1 << (l - 1);
    std::vector<int> starts;
    for (int s = phase; s + 2 * half <= phase + n; ++s) {
      if (base[s] >= l) starts.push_back(s);
    }
    const bool insert = std::bernoulli_distribution(0.5)(rng);
    if (!starts.empty()) {
      std::uniform_int_distribution<std::size_t> pick(0, starts.size() - 1);
      const int s = starts[pick(rng)];
      if (insert) {
        const std::vector<int> sub(base.begin() + s + half,
                                   base.begin() + s + 2 * half);
        base.insert(base.begin() + s + 2 * half, sub.begin(), sub.end());
      } else {
        base.erase(base.begin() + s + half, base.begin() + s + 2 * half);
      }
      irregular_level = l;
    }
  }
  return {base.begin() + phase, base.begin() + phase + n};
}

// Pitch offset per level for track slot t. Independent of the seed, so every
// corpus shares one "style"; distinct across levels while L+1 <= 12.
std::vector<int> track_contour(const SyntheticConfig& cfg, int t) {
  std::seed_seq seq{0x636f6eu, static_cast<std::uint32_t>(t)};
  std::mt19937_64 rng(seq);
  std::vector<int> pool(12);
  for (int k = 0; k < 12; ++k) pool[k] = k;
  std::shuffle(pool.begin(), pool.end(), rng);
  std::vector<int> contour(cfg.num_layers + 1);
  for (std::size_t l = 0; l < contour.size(); ++l) {
    contour[l] = l < pool.size()
                     ? pool[l]
                     : std::uniform_int_distribution<int>(0, 11)(rng);
  }
  return contour;
}

}  // namespace

SyntheticSong generate_song(const SyntheticConfig& cfg, int index) {
  cfg.validate();
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed),
                    static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(index)};
  std::mt19937_64 rng(seq);
  const int L = cfg.num_layers;
  const int n = cfg.steps_per_song;

  SyntheticSong song;
  song.phase = std::uniform_int_distribution<int>(0, (1 << L) - 1)(rng);
  song.levels.num_layers = L;
  song.levels.levels = song_levels(cfg, rng, song.phase, song.irregular_level);

  const std::vector<double> density = cfg.densities();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  song.roll = PianoRoll(n);
  const int transpose =
      std::uniform_int_distribution<int>(-cfg.max_transpose, cfg.max_transpose)(rng);
  for (int t = 0; t < cfg.tracks_per_song; ++t) {
    const std::vector<int> contour = track_contour(cfg, t);
    const int base = kBasePitch + 12 * (t % 3) + transpose;

    const bool density_cue = !cfg.single_feature_tracks || t % 2 == 0;
    const bool pitch_cue = !cfg.single_feature_tracks || t % 2 == 1;

    std::vector<int> onsets;
    std::vector<int> pitches;
    for (int i = 0; i < n; ++i) {
      const int lvl = song.levels.levels[i];
      const double p = density_cue ? density[lvl] : 0.5;
      if (u(rng) >= p) continue;
      onsets.push_back(i);
      pitches.push_back(pitch_cue ? base + contour[lvl] : base);
    }
    TrackRoll roll("synth" + std::to_string(t), n);
    for (std::size_t k = 0; k < onsets.size(); ++k) {
      const int start = onsets[k];
      const int stop = std::min({n, start + kMaxHold,
                                 k + 1 < onsets.size() ? onsets[k + 1] : n});
      roll.set(start, pitches[k], Cell::kOnset);
      for (int j = start + 1; j < stop; ++j) roll.set(j, pitches[k], Cell::kHold);
    }
    song.roll.add_track(std::move(roll));
  }
  return song;
}

std::vector<SyntheticSong> generate_synthetic(const SyntheticConfig& config) {
  config.validate();
  std::vector<SyntheticSong> out;
  out.reserve(config.num_songs);
  for (int k = 0; k < config.num_songs; ++k) {
    out.push_back(generate_song(config, k));
  }
  return out;
}

}  // namespace metra
