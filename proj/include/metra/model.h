// Per-track dilated convolution network, confidence-weighted track pooling,
// and reverse-mode gradients of the self-supervised objective.

#ifndef METRA_MODEL_H
#define METRA_MODEL_H

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "metra/core.h"
#include "metra/crf.h"

namespace metra {

// Two input channels per pitch: onset flag and sounding flag.
inline constexpr int kInputChannels = 2 * kNumPitches;
inline constexpr int kKernelSize = 3;

struct ModelConfig {
  int num_layers = 8;   // L; the head emits L+1 level logits + 1 confidence
  int channels = 32;    // C
  int depth = 6;        // D, block d has dilation 2^d
  // Deepest level whose period the receptive field must span.
  int effective_layers = 6;

  int receptive_field() const { return (2 << depth) - 1; }
  int head_outputs() const { return num_layers + 2; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Named slice of the flat parameter vector.
struct TensorInfo {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// Parameters live in one flat vector in declared order:
///   block0.weight [C, 256, 3], block0.bias [C],
///   block{d}.weight [C, C, 3], block{d}.bias [C]   for d = 1..D-1,
///   head.weight [L+2, C], head.bias [L+2].
class EmissionModel {
 public:
  explicit EmissionModel(const ModelConfig& config);

  static EmissionModel zeros(const ModelConfig& config);
  // Uniform in +-1/sqrt(fan_in).
  static EmissionModel initialized(const ModelConfig& config,
                                   std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const std::vector<TensorInfo>& tensors() const { return tensors_; }
  const TensorInfo& tensor(const std::string& name) const;

  std::vector<double>& parameters() { return params_; }
  const std::vector<double>& parameters() const { return params_; }
  std::span<double> view(const TensorInfo& t) {
    return {params_.data() + t.offset, t.size};
  }
  std::span<const double> view(const TensorInfo& t) const {
    return {params_.data() + t.offset, t.size};
  }

  int block_dilation(int d) const { return 1 << d; }

  bool operator==(const EmissionModel& o) const {
    return config_ == o.config_ && params_ == o.params_;
  }

 private:
  ModelConfig config_;
  std::vector<TensorInfo> tensors_;
  std::vector<double> params_;
};

struct TrackOutput {
  LevelMatrix logits;              // N x (L+1)
  std::vector<double> confidence;  // N
};

TrackOutput track_forward(const EmissionModel& model, const TrackRoll& track);

/// Softmax over tracks of the confidences weights the per-track level
/// softmaxes.
DistributionSequence pool_tracks(const std::vector<TrackOutput>& outputs);

DistributionSequence predict(const EmissionModel& model, const PianoRoll& song);

struct TrackPair {
  int first = 0;
  int second = 1;
};

struct LossBreakdown {
  double loss = 0.0;         // (L1 + lambda * L2) / N
  double regularity = 0.0;   // L1
  double consistency = 0.0;  // mean L2 over the pairs, 0 when unused
};

/// Loss of one song and its gradient w.r.t. every model parameter (same
/// layout as EmissionModel::parameters). `pairs` selects the track pairs for
/// the consistency term; the term is skipped when T == 1, lambda == 0 or
/// `pairs` is empty.
LossBreakdown loss_and_gradients(const EmissionModel& model,
                                 const PianoRoll& song,
                                 const TransitionTable& table, double lambda,
                                 std::span<const TrackPair> pairs,
                                 std::vector<double>& grad);

/// Convenience overload using every unordered track pair.
LossBreakdown loss_and_gradients(const EmissionModel& model,
                                 const PianoRoll& song, const CrfParams& params,
                                 double lambda, std::vector<double>& grad);

std::vector<TrackPair> all_track_pairs(int num_tracks);

// Emissions are clamped from below before entering the CRF during training.
inline constexpr double kEmissionFloor = 1e-12;

}  // namespace metra

#endif  // METRA_MODEL_H
