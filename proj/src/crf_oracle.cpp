// Enumeration oracles for the CRF. These deliberately avoid TransitionTable
// and the forward-backward recursions; each boundary-level sequence is
// expanded into explicit state paths through successor_state.

#include <algorithm>
#include <cmath>
#include <string>

#include "metra/crf.h"

namespace metra {
namespace {

constexpr double kEnumerationBudget = 1e7;

void check_budget(int num_layers, int n) {
  if (n < 1) throw ShapeError("empty sequence");
  if (std::pow(double(num_layers + 1), double(n)) > kEnumerationBudget) {
    throw CapacityError("(L+1)^N exceeds the enumeration budget of 1e7");
  }
}

// Calls fn(levels, best_initial_log_score_or_all_path_scores) for every
// boundary-level sequence; `score_path` gets one call per admissible path.
template <typename PathFn>
void enumerate_paths(const CrfParams& params, const LevelMatrix& emission,
                     PathFn&& on_path) {
  const int L = params.num_layers;
  const int n = emission.rows;
  std::vector<int> seq(n, 0);
  while (true) {
    double emit = 0.0;
    for (int i = 0; i < n; ++i) emit += std::log(emission(i, seq[i]));
    for (std::uint32_t bits = 0; bits < (1u << L); ++bits) {
      CrfState z{bits, L};
      if (boundary_level(z) != seq[0]) continue;
      double score = emit;
      for (int i = 1; i < n && score != -kInf; ++i) {
        score += transition_log_potential(params, z, seq[i]);
        z = successor_state(z, seq[i]);
      }
      on_path(seq, score);
    }
    int k = n - 1;
    while (k >= 0 && seq[k] == L) seq[k--] = 0;
    if (k < 0) break;
    ++seq[k];
  }
}

}  // namespace

double brute_force_log_partition(const CrfParams& params,
                                 const LevelMatrix& emission) {
  params.validate();
  check_budget(params.num_layers, emission.rows);
  if (emission.cols != params.num_layers + 1) {
    throw ShapeError("emission width must be L+1");
  }
  std::vector<double> scores;
  enumerate_paths(params, emission, [&](const std::vector<int>&, double s) {
    if (s != -kInf) scores.push_back(s);
  });
  if (scores.empty()) return -kInf;
  const double hi = *std::max_element(scores.begin(), scores.end());
  double sum = 0.0;
  for (double s : scores) sum += std::exp(s - hi);
  return hi + std::log(sum);
}

double brute_force_loss(const CrfParams& params,
                        const DistributionSequence& p) {
  return -brute_force_log_partition(params, to_matrix(p));
}

ViterbiResult brute_force_decode(const CrfParams& params,
                                 const DistributionSequence& p) {
  params.validate();
  const LevelMatrix em = to_matrix(p);
  check_budget(params.num_layers, em.rows);
  double best = -kInf;
  enumerate_paths(params, em, [&](const std::vector<int>&, double s) {
    best = std::max(best, s);
  });
  if (best == -kInf) throw DecodeError("no finite path");
  std::vector<int> pick;
  enumerate_paths(params, em, [&](const std::vector<int>& seq, double s) {
    if (s >= best - kViterbiTieTolerance && (pick.empty() || seq > pick)) {
      pick = seq;
    }
  });
  return {{pick, params.num_layers}, best};
}

}  // namespace metra
