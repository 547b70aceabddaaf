// Random instance generators shared by the CRF tests and the acceptance run.

#ifndef METRA_TESTS_CRF_FIXTURES_H
#define METRA_TESTS_CRF_FIXTURES_H

#include <random>

#include "metra/core.h"
#include "metra/crf.h"

namespace metra::testing {

inline CrfParams random_params(std::mt19937_64& rng, int L) {
  std::uniform_real_distribution<double> w(0.2, 6.0);
  std::bernoulli_distribution hard(0.3);
  CrfParams p{L, std::vector<double>(L), std::vector<double>(L)};
  for (int l = 0; l < L; ++l) {
    p.w_del[l] = hard(rng) ? kInf : w(rng);
    p.w_ins[l] = hard(rng) ? kInf : w(rng);
  }
  return p;
}

inline LevelDistribution random_distribution(std::mt19937_64& rng, int L) {
  std::gamma_distribution<double> g(0.7, 1.0);
  LevelDistribution d{std::vector<double>(L + 1)};
  double sum = 0;
  for (double& p : d.probs) sum += (p = g(rng) + 1e-300);
  for (double& p : d.probs) p /= sum;
  return d;
}

// Probabilities drawn from a coarse lattice so that exact score ties occur.
inline LevelDistribution lattice_distribution(std::mt19937_64& rng, int L) {
  std::uniform_int_distribution<int> k(0, 2);
  LevelDistribution d{std::vector<double>(L + 1)};
  double sum = 0;
  for (double& p : d.probs) sum += (p = k(rng));
  if (sum == 0) return LevelDistribution::uniform(L);
  for (double& p : d.probs) p /= sum;
  return d;
}

inline DistributionSequence random_sequence(std::mt19937_64& rng, int L,
                                            int n, bool lattice = false) {
  DistributionSequence s;
  for (int i = 0; i < n; ++i) {
    s.push_back(lattice ? lattice_distribution(rng, L)
                        : random_distribution(rng, L));
  }
  return s;
}

// Binary-regular levels, level L at positions where (i + phase) % 2^L == 0.
inline LevelSequence regular_levels(int L, int n, int phase) {
  LevelSequence s{std::vector<int>(n), L};
  const int period = 1 << L;
  for (int i = 0; i < n; ++i) {
    const int pos = (i + phase) % period;
    int lvl = 0;
    if (pos == 0) {
      lvl = L;
    } else {
      while (!((pos >> lvl) & 1)) ++lvl;
    }
    s.levels[i] = lvl;
  }
  return s;
}

}  // namespace metra::testing

#endif  // METRA_TESTS_CRF_FIXTURES_H
