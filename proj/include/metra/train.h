// Adam optimizer and the self-supervised training loop.

#ifndef METRA_TRAIN_H
#define METRA_TRAIN_H

#include <cstdint>
#include <functional>
#include <vector>

#include "metra/model.h"

namespace metra {

struct TrainConfig {
  double learning_rate = 1e-4;
  int epochs = 10;
  double lambda_consistency = 1.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch = 1;  // songs per gradient step
  std::uint64_t seed = 0;
  int threads = 1;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;

  explicit AdamState(std::size_t size = 0) : m(size, 0.0), v(size, 0.0) {}
};

/// One bias-corrected Adam update of `params` in place.
void adam_step(std::vector<double>& params, AdamState& state,
               const std::vector<double>& grad, const TrainConfig& config);

struct TrainResult {
  EmissionModel model;
  std::vector<double> epoch_losses;  // mean per-song normalized loss
};

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

/// Deterministic for a fixed config.seed (independent of config.threads).
TrainResult train(const std::vector<PianoRoll>& dataset,
                  const CrfParams& params, const ModelConfig& model_config,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Continue from an existing model.
TrainResult train(EmissionModel init, const std::vector<PianoRoll>& dataset,
                  const CrfParams& params, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

}  // namespace metra

#endif  // METRA_TRAIN_H
