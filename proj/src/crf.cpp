#include "metra/crf.h"

#include <algorithm>
#include <cmath>
#include <string>

namespace metra {
namespace {

constexpr double kNegInf = -kInf;

double safe_log(double x) { return x > 0.0 ? std::log(x) : kNegInf; }

// log(exp(a) + exp(b)) with -inf handled.
double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(-std::abs(a - b)));
}

double log_sum_exp(const double* v, std::size_t n) {
  double hi = kNegInf;
  for (std::size_t k = 0; k < n; ++k) hi = std::max(hi, v[k]);
  if (hi == kNegInf) return kNegInf;
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s += std::exp(v[k] - hi);
  return hi + std::log(s);
}

void check_rows(const LevelMatrix& m, const TransitionTable& table,
                const char* what) {
  if (m.rows < 1) throw ShapeError(std::string(what) + ": empty sequence");
  if (m.cols != table.num_levels()) {
    throw ShapeError(std::string(what) + ": expected " +
                     std::to_string(table.num_levels()) +
                     " levels per step, got " + std::to_string(m.cols));
  }
}

}  // namespace

LevelMatrix to_matrix(const DistributionSequence& p) {
  if (p.empty()) return {};
  const int cols = static_cast<int>(p.front().probs.size());
  LevelMatrix m(static_cast<int>(p.size()), cols);
  for (int i = 0; i < m.rows; ++i) {
    if (static_cast<int>(p[i].probs.size()) != cols) {
      throw ShapeError("distribution " + std::to_string(i) +
                       " has a different number of levels");
    }
    std::copy(p[i].probs.begin(), p[i].probs.end(), &m(i, 0));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Transitions
// ---------------------------------------------------------------------------

CrfState successor_state(const CrfState& prev, int b) {
  const int L = prev.num_layers;
  if (b < 0 || b > L) throw RangeError("boundary level out of range");
  const std::uint32_t all = (L >= 32) ? ~0u : ((1u << L) - 1u);
  const std::uint32_t keep_mask = all & ~((2u << b) - 1u);  // bits b+1..L-1
  std::uint32_t next = prev.bits & keep_mask;
  if (b < L) next |= 1u << b;
  return {next, L};
}

double transition_log_potential(const CrfParams& params, const CrfState& prev,
                                int b) {
  const CrfState next = successor_state(prev, b);
  const int top = std::min(b + 1, params.num_layers);
  double total = 0.0;
  for (int l = 1; l <= top; ++l) {
    const bool from = prev.bit(l);
    const bool to = next.bit(l);
    if (from == to) {
      const double w = from ? params.ins(l) : params.del(l);
      if (std::isinf(w)) return kNegInf;
      total -= w;
    }
  }
  return total;
}

TransitionTable::TransitionTable(const CrfParams& params)
    : num_layers_(params.num_layers) {
  if (params.num_layers > kMaxLayers) {
    throw CapacityError("transition table supports at most " +
                        std::to_string(kMaxLayers) + " layers");
  }
  params.validate();
  const int states = num_states();
  entries_.reserve(std::size_t(states) * num_levels());
  level_.resize(states);
  incoming_.resize(states);
  for (int s = 0; s < states; ++s) {
    const CrfState z{static_cast<std::uint32_t>(s), num_layers_};
    level_[s] = boundary_level(z);
    for (int b = 0; b <= num_layers_; ++b) {
      const CrfState next = successor_state(z, b);
      entries_.push_back({z.bits, next.bits,
                          transition_log_potential(params, z, b)});
    }
  }
  for (const Edge& e : entries_) {
    if (e.log_potential != kNegInf) incoming_[e.to].push_back(e);
  }
}

// ---------------------------------------------------------------------------
// Forward-backward
// ---------------------------------------------------------------------------

PartitionResult log_partition(const TransitionTable& table,
                              const LevelMatrix& emission) {
  check_rows(emission, table, "log_partition");
  const int n = emission.rows;
  const int levels = table.num_levels();
  const int states = table.num_states();

  LevelMatrix log_e(n, levels);
  for (std::size_t k = 0; k < emission.data.size(); ++k) {
    if (emission.data[k] < 0.0 || std::isnan(emission.data[k])) {
      throw RangeError("emissions must be non-negative");
    }
    log_e.data[k] = safe_log(emission.data[k]);
  }

  // pre[i][z]: log mass of prefixes ending in z, emission at i excluded.
  std::vector<double> pre(std::size_t(n) * states);
  std::vector<double> alpha(states);
  std::vector<double> scratch;
  std::fill(pre.begin(), pre.begin() + states, 0.0);
  for (int i = 0; i + 1 < n; ++i) {
    const double* cur = &pre[std::size_t(i) * states];
    for (int z = 0; z < states; ++z) {
      alpha[z] = cur[z] + log_e(i, table.level(z));
    }
    double* next = &pre[std::size_t(i + 1) * states];
    for (int z = 0; z < states; ++z) {
      const auto& in = table.incoming(z);
      scratch.resize(in.size());
      for (std::size_t k = 0; k < in.size(); ++k) {
        scratch[k] = alpha[in[k].from] + in[k].log_potential;
      }
      next[z] = log_sum_exp(scratch.data(), scratch.size());
    }
  }

  // post[i][z]: log mass of suffixes after i given z at i.
  std::vector<double> post(std::size_t(n) * states);
  std::fill(post.end() - states, post.end(), 0.0);
  scratch.resize(levels);
  for (int i = n - 2; i >= 0; --i) {
    const double* nxt = &post[std::size_t(i + 1) * states];
    double* cur = &post[std::size_t(i) * states];
    for (int z = 0; z < states; ++z) {
      for (int b = 0; b < levels; ++b) {
        const auto& e = table.entry(z, b);
        scratch[b] = e.log_potential + log_e(i + 1, b) + nxt[e.to];
      }
      cur[z] = log_sum_exp(scratch.data(), levels);
    }
  }

  PartitionResult out;
  out.d_log_z = LevelMatrix(n, levels);
  {
    const double* last = &pre[std::size_t(n - 1) * states];
    double acc = kNegInf;
    for (int z = 0; z < states; ++z) {
      acc = log_add(acc, last[z] + log_e(n - 1, table.level(z)));
    }
    out.log_z = acc;
  }
  if (out.log_z == kNegInf) return out;

  for (int i = 0; i < n; ++i) {
    const double* a = &pre[std::size_t(i) * states];
    const double* b = &post[std::size_t(i) * states];
    for (int z = 0; z < states; ++z) {
      const double v = a[z] + b[z];
      if (v == kNegInf) continue;
      out.d_log_z(i, table.level(z)) += std::exp(v - out.log_z);
    }
  }
  return out;
}

CrfLossResult unsupervised_loss(const TransitionTable& table,
                                const LevelMatrix& p) {
  PartitionResult part = log_partition(table, p);
  CrfLossResult out;
  out.grad = LevelMatrix(p.rows, p.cols);
  if (part.log_z == kNegInf) {
    out.loss = kInf;
    out.degenerate = true;
    return out;
  }
  out.loss = -part.log_z;
  for (std::size_t k = 0; k < out.grad.data.size(); ++k) {
    out.grad.data[k] = -part.d_log_z.data[k];
  }
  return out;
}

CrfLossResult unsupervised_loss(const CrfParams& params,
                                const DistributionSequence& p) {
  return unsupervised_loss(TransitionTable(params), to_matrix(p));
}

ConsistencyLossResult consistency_loss(const TransitionTable& table,
                                       const LevelMatrix& p1,
                                       const LevelMatrix& p2) {
  if (p1.rows != p2.rows || p1.cols != p2.cols) {
    throw ShapeError("consistency_loss: sequences differ in shape (" +
                     std::to_string(p1.rows) + " vs " +
                     std::to_string(p2.rows) + " steps)");
  }
  LevelMatrix joint(p1.rows, p1.cols);
  for (std::size_t k = 0; k < joint.data.size(); ++k) {
    joint.data[k] = p1.data[k] * p2.data[k];
  }
  PartitionResult part = log_partition(table, joint);
  ConsistencyLossResult out;
  out.grad_first = LevelMatrix(p1.rows, p1.cols);
  out.grad_second = LevelMatrix(p1.rows, p1.cols);
  if (part.log_z == kNegInf) {
    out.loss = kInf;
    out.degenerate = true;
    return out;
  }
  out.loss = -part.log_z;
  for (std::size_t k = 0; k < joint.data.size(); ++k) {
    const double d = part.d_log_z.data[k];
    out.grad_first.data[k] = -d * p2.data[k];
    out.grad_second.data[k] = -d * p1.data[k];
  }
  return out;
}

ConsistencyLossResult consistency_loss(const CrfParams& params,
                                       const DistributionSequence& p1,
                                       const DistributionSequence& p2) {
  if (p1.size() != p2.size()) {
    throw ShapeError("consistency_loss: sequences differ in length (" +
                     std::to_string(p1.size()) + " vs " +
                     std::to_string(p2.size()) + ")");
  }
  return consistency_loss(TransitionTable(params), to_matrix(p1),
                          to_matrix(p2));
}

// ---------------------------------------------------------------------------
// Viterbi
// ---------------------------------------------------------------------------

ViterbiResult viterbi_decode_scored(const CrfParams& params,
                                    const DistributionSequence& p) {
  const TransitionTable table(params);
  const LevelMatrix em = to_matrix(p);
  check_rows(em, table, "viterbi_decode");
  const int n = em.rows;
  const int levels = table.num_levels();
  const int states = table.num_states();
  const int L = table.num_layers();

  LevelMatrix log_e(n, levels);
  for (std::size_t k = 0; k < em.data.size(); ++k) {
    log_e.data[k] = safe_log(em.data[k]);
  }

  // togo[i][z]: best suffix score after step i given z at i.
  std::vector<double> togo(std::size_t(n) * states, kNegInf);
  std::fill(togo.end() - states, togo.end(), 0.0);
  for (int i = n - 2; i >= 0; --i) {
    const double* nxt = &togo[std::size_t(i + 1) * states];
    double* cur = &togo[std::size_t(i) * states];
    for (int z = 0; z < states; ++z) {
      double best = kNegInf;
      for (int b = 0; b < levels; ++b) {
        const auto& e = table.entry(z, b);
        best = std::max(best, e.log_potential + log_e(i + 1, b) + nxt[e.to]);
      }
      cur[z] = best;
    }
  }

  double best = kNegInf;
  for (int z = 0; z < states; ++z) {
    best = std::max(best, log_e(0, table.level(z)) + togo[z]);
  }
  if (best == kNegInf) {
    throw DecodeError("no state path with finite score (contradictory hard "
                      "constraints or zero emissions)");
  }
  const double floor = best - kViterbiTieTolerance;

  // Walk forward keeping every state that still lies on an optimal path
  // consistent with the levels chosen so far.
  ViterbiResult out;
  out.log_score = best;
  out.levels.num_layers = L;
  out.levels.levels.resize(n);

  std::vector<double> prefix(states, kNegInf);
  int chosen = -1;
  for (int z = 0; z < states; ++z) {
    const double s = log_e(0, table.level(z));
    if (s + togo[z] >= floor) chosen = std::max(chosen, table.level(z));
  }
  for (int z = 0; z < states; ++z) {
    const double s = log_e(0, table.level(z));
    if (table.level(z) == chosen && s + togo[z] >= floor) prefix[z] = s;
  }
  out.levels.levels[0] = chosen;

  std::vector<double> next_prefix(states);
  for (int i = 0; i + 1 < n; ++i) {
    const double* nxt = &togo[std::size_t(i + 1) * states];
    chosen = -1;
    for (int z = 0; z < states; ++z) {
      if (prefix[z] == kNegInf) continue;
      for (int b = levels - 1; b > chosen; --b) {
        const auto& e = table.entry(z, b);
        const double s = prefix[z] + e.log_potential + log_e(i + 1, b);
        if (s + nxt[e.to] >= floor) {
          chosen = b;
          break;
        }
      }
    }
    std::fill(next_prefix.begin(), next_prefix.end(), kNegInf);
    for (int z = 0; z < states; ++z) {
      if (prefix[z] == kNegInf) continue;
      const auto& e = table.entry(z, chosen);
      const double s = prefix[z] + e.log_potential + log_e(i + 1, chosen);
      if (s + nxt[e.to] >= floor) {
        next_prefix[e.to] = std::max(next_prefix[e.to], s);
      }
    }
    prefix.swap(next_prefix);
    out.levels.levels[i + 1] = chosen;
  }
  return out;
}

LevelSequence viterbi_decode(const CrfParams& params,
                             const DistributionSequence& p) {
  return viterbi_decode_scored(params, p).levels;
}

// ---------------------------------------------------------------------------
// Measure-level subsampling
// ---------------------------------------------------------------------------

DistributionSequence subsample_to_measure_level(
    const DistributionSequence& p, const std::vector<int>& downbeat_positions) {
  DistributionSequence out;
  if (downbeat_positions.empty()) return out;
  const int n = static_cast<int>(p.size());
  int last = -1;
  for (int pos : downbeat_positions) {
    if (pos <= last || pos >= n) {
      throw RangeError("downbeat positions must be strictly increasing and "
                       "inside [0, " + std::to_string(n) + ")");
    }
    last = pos;
    const auto& src = p[pos].probs;
    const int L = static_cast<int>(src.size()) - 1;
    if (L < kMeasureLevel) {
      throw RangeError("measure-level subsampling needs at least 4 layers");
    }
    LevelDistribution d{std::vector<double>(L - kMeasureLevel + 1, 0.0)};
    for (int l = 0; l <= kMeasureLevel; ++l) d.probs[0] += src[l];
    for (int k = 1; k <= L - kMeasureLevel; ++k) {
      d.probs[k] = src[kMeasureLevel + k];
    }
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace metra
