// Unsupervised binary-regularity CRF over the joint layer state space.
//
// States are L-bit vectors; the boundary level of a state is its number of
// leading zero layers. A transition into a state of boundary level b updates
// layers 1..b+1 through the 2x2 potential
//
//     A(l) = [ exp(-w_del(l))   1              ]
//            [ 1                exp(-w_ins(l)) ]
//
// and freezes the layers above. Emission of step i is p[i][level(z_i)].
// Every state is admitted at step 1 with prior potential 1.
//
// All arithmetic is in log space; -inf encodes hard constraints.

#ifndef METRA_CRF_H
#define METRA_CRF_H

#include <cstdint>
#include <vector>

#include "metra/core.h"

namespace metra {

/// Row-major N x (L+1) matrix of reals, one row per tatum.
struct LevelMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  LevelMatrix() = default;
  LevelMatrix(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

  double& operator()(int i, int l) { return data[std::size_t(i) * cols + l]; }
  double operator()(int i, int l) const {
    return data[std::size_t(i) * cols + l];
  }
};

LevelMatrix to_matrix(const DistributionSequence& p);

// ---------------------------------------------------------------------------
// Transitions
// ---------------------------------------------------------------------------

/// Clears layers 1..b, sets layer b+1 (if b < L), keeps the rest.
CrfState successor_state(const CrfState& prev, int b);

/// log phi(prev, successor_state(prev, b)); -inf under a violated hard
/// constraint.
double transition_log_potential(const CrfParams& params, const CrfState& prev,
                                int b);

/// Precomputed successor and log-potential for every (state, level) pair,
/// plus the reverse adjacency used by gather-style recursions.
class TransitionTable {
 public:
  struct Edge {
    std::uint32_t from;
    std::uint32_t to;
    double log_potential;
  };

  explicit TransitionTable(const CrfParams& params);

  int num_layers() const { return num_layers_; }
  int num_states() const { return 1 << num_layers_; }
  int num_levels() const { return num_layers_ + 1; }
  std::size_t size() const { return entries_.size(); }

  const Edge& entry(std::uint32_t state, int b) const {
    return entries_[std::size_t(state) * num_levels() + b];
  }
  int level(std::uint32_t state) const { return level_[state]; }

  // Edges ending in `state` with finite potential.
  const std::vector<Edge>& incoming(std::uint32_t state) const {
    return incoming_[state];
  }

 private:
  int num_layers_;
  std::vector<Edge> entries_;
  std::vector<int> level_;
  std::vector<std::vector<Edge>> incoming_;
};

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

struct CrfLossResult {
  double loss = 0.0;
  LevelMatrix grad;  // d loss / d p[i][l]
  // True when no state path has non-zero weight: loss is +inf and grad is
  // left at zero.
  bool degenerate = false;
};

/// Log-partition log Z of the CRF with generic per-step level emissions and
/// d log Z / d emission[i][l]. Emissions must be non-negative.
struct PartitionResult {
  double log_z = 0.0;
  LevelMatrix d_log_z;
};
PartitionResult log_partition(const TransitionTable& table,
                              const LevelMatrix& emission);

CrfLossResult unsupervised_loss(const CrfParams& params,
                                const DistributionSequence& p);
CrfLossResult unsupervised_loss(const TransitionTable& table,
                                const LevelMatrix& p);

struct ConsistencyLossResult {
  double loss = 0.0;
  LevelMatrix grad_first;
  LevelMatrix grad_second;
  bool degenerate = false;
};

/// Same DP with emission p1[i][l] * p2[i][l].
ConsistencyLossResult consistency_loss(const CrfParams& params,
                                       const DistributionSequence& p1,
                                       const DistributionSequence& p2);
ConsistencyLossResult consistency_loss(const TransitionTable& table,
                                       const LevelMatrix& p1,
                                       const LevelMatrix& p2);

// ---------------------------------------------------------------------------
// Decoding
// ---------------------------------------------------------------------------

// Two path scores closer than this (absolute, in log space) count as tied.
inline constexpr double kViterbiTieTolerance = 1e-10;

struct ViterbiResult {
  LevelSequence levels;
  double log_score = 0.0;
};

/// Best state path. Among tied paths the level sequence that is
/// lexicographically greatest from the first step wins, i.e. ties prefer the
/// higher boundary level at the earliest differing step.
ViterbiResult viterbi_decode_scored(const CrfParams& params,
                                    const DistributionSequence& p);
LevelSequence viterbi_decode(const CrfParams& params,
                             const DistributionSequence& p);

/// One distribution per downbeat over levels 0..L-4: old levels 0..4 fold
/// into new level 0, old level 4+k becomes new level k.
DistributionSequence subsample_to_measure_level(
    const DistributionSequence& p, const std::vector<int>& downbeat_positions);

inline constexpr int kMeasureLevel = 4;

// ---------------------------------------------------------------------------
// Enumeration oracles
// ---------------------------------------------------------------------------

/// Explicit sum over every boundary-level sequence and every admissible
/// initial state. Throws CapacityError when (L+1)^N > 1e7.
double brute_force_loss(const CrfParams& params, const DistributionSequence& p);

/// Same enumeration with arbitrary non-negative emissions; returns log Z.
double brute_force_log_partition(const CrfParams& params,
                                 const LevelMatrix& emission);

/// Exhaustive argmax with the same tie rule as viterbi_decode.
ViterbiResult brute_force_decode(const CrfParams& params,
                                 const DistributionSequence& p);

}  // namespace metra

#endif  // METRA_CRF_H
