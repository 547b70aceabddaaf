// Model checkpoint: a versioned JSON document.
//
//   {
//     "format": "metra-checkpoint", "version": 1,
//     "seed": <uint64>,
//     "model": {"num_layers", "channels", "depth", "effective_layers",
//               "input_channels": 256, "kernel": 3},
//     "train": {learning_rate, epochs, lambda_consistency, adam_beta1,
//               adam_beta2, adam_eps, batch},
//     "crf":        {"w_del": [...], "w_ins": [...]},   // "inf" for +inf
//     "decode_crf": {"w_del": [...], "w_ins": [...]},
//     "tensors": [{"name", "shape", "data"}, ...],     // declared order
//     "loss_log": [...],
//     "calibration": null | {"offset", "score", "song_id"}
//   }
//
// Doubles are written with round-trip precision, so save/load is lossless.

#ifndef METRA_CHECKPOINT_H
#define METRA_CHECKPOINT_H

#include <optional>
#include <string>
#include <vector>

#include "metra/calibrate.h"
#include "metra/model.h"
#include "metra/train.h"

namespace metra {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  EmissionModel model{ModelConfig{}};
  TrainConfig train;
  CrfParams crf;
  CrfParams decode_crf;
  std::vector<double> loss_log;
  std::optional<Calibration> calibration;
};

std::string save_checkpoint(const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& text);

Checkpoint read_checkpoint_file(const std::string& path);
void write_checkpoint_file(const std::string& path, const Checkpoint& ckpt);

}  // namespace metra

#endif  // METRA_CHECKPOINT_H
