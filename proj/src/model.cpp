#include "metra/model.h"

#include <algorithm>
#include <cmath>
#include <random>

namespace metra {

// ---------------------------------------------------------------------------
// Configuration and parameter layout
// ---------------------------------------------------------------------------

void ModelConfig::validate() const {
  if (num_layers < 1 || num_layers > kMaxLayers) {
    throw RangeError("num_layers must be in [1, " +
                     std::to_string(kMaxLayers) + "]");
  }
  if (channels < 1) throw RangeError("channels must be positive");
  if (depth < 1) throw RangeError("depth must be positive");
  if (effective_layers < 0 || effective_layers > num_layers) {
    throw RangeError("effective_layers must be in [0, num_layers]");
  }
  if (receptive_field() < (1 << effective_layers)) {
    throw RangeError("receptive field " + std::to_string(receptive_field()) +
                     " is shorter than the level-" +
                     std::to_string(effective_layers) + " period " +
                     std::to_string(1 << effective_layers));
  }
}

EmissionModel::EmissionModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  std::size_t offset = 0;
  auto add = [&](std::string name, std::vector<int> shape) {
    std::size_t n = 1;
    for (int s : shape) n *= static_cast<std::size_t>(s);
    tensors_.push_back({std::move(name), std::move(shape), offset, n});
    offset += n;
  };
  const int c = config_.channels;
  for (int d = 0; d < config_.depth; ++d) {
    const int in = d == 0 ? kInputChannels : c;
    const std::string prefix = "block" + std::to_string(d);
    add(prefix + ".weight", {c, in, kKernelSize});
    add(prefix + ".bias", {c});
  }
  add("head.weight", {config_.head_outputs(), c});
  add("head.bias", {config_.head_outputs()});
  params_.assign(offset, 0.0);
}

EmissionModel EmissionModel::zeros(const ModelConfig& config) {
  return EmissionModel(config);
}

EmissionModel EmissionModel::initialized(const ModelConfig& config,
                                         std::uint64_t seed) {
  EmissionModel m(config);
  std::mt19937_64 rng(seed);
  for (const TensorInfo& t : m.tensors_) {
    // fan_in of the layer that owns this tensor
    int fan_in;
    if (t.name.starts_with("head")) {
      fan_in = config.channels;
    } else if (t.name.starts_with("block0")) {
      fan_in = kInputChannels * kKernelSize;
    } else {
      fan_in = config.channels * kKernelSize;
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (double& w : m.view(t)) w = u(rng);
  }
  return m;
}

const TensorInfo& EmissionModel::tensor(const std::string& name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return t;
  }
  throw RangeError("no tensor named '" + name + "'");
}

// ---------------------------------------------------------------------------
// Forward / backward through one track
// ---------------------------------------------------------------------------

namespace {

// Row-major N x C activations.
struct Activations {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Activations() = default;
  Activations(int r, int c) : rows(r), cols(c), data(std::size_t(r) * c, 0.0) {}
  double* row(int i) { return data.data() + std::size_t(i) * cols; }
  const double* row(int i) const { return data.data() + std::size_t(i) * cols; }
};

// Active input channels per step.
std::vector<std::vector<int>> encode_input(const TrackRoll& track) {
  std::vector<std::vector<int>> active(track.num_steps());
  for (int i = 0; i < track.num_steps(); ++i) {
    const std::uint8_t* cells = track.row(i);
    for (int q = 0; q < kNumPitches; ++q) {
      const auto c = static_cast<Cell>(cells[q]);
      if (c == Cell::kOnset) active[i].push_back(2 * q);
      if (c != Cell::kSilent) active[i].push_back(2 * q + 1);
    }
  }
  return active;
}

// [out][in][k] -> [k][in][out]
std::vector<double> transpose_kernel(std::span<const double> w, int out,
                                     int in) {
  std::vector<double> t(w.size());
  for (int o = 0; o < out; ++o) {
    for (int c = 0; c < in; ++c) {
      for (int k = 0; k < kKernelSize; ++k) {
        t[(std::size_t(k) * in + c) * out + o] =
            w[(std::size_t(o) * in + c) * kKernelSize + k];
      }
    }
  }
  return t;
}

void add_transposed_kernel(const std::vector<double>& t, int out, int in,
                           std::span<double> w) {
  for (int o = 0; o < out; ++o) {
    for (int c = 0; c < in; ++c) {
      for (int k = 0; k < kKernelSize; ++k) {
        w[(std::size_t(o) * in + c) * kKernelSize + k] +=
            t[(std::size_t(k) * in + c) * out + o];
      }
    }
  }
}

struct TrackCache {
  std::vector<std::vector<int>> input;
  std::vector<std::vector<double>> kernels;  // transposed, per block
  std::vector<Activations> block_in;         // h_d for d >= 1 (index d)
  std::vector<Activations> pre;              // pre-activation of block d
  Activations top;                           // h_D
  Activations head;                          // N x (L+2)
};

TrackCache forward_cached(const EmissionModel& model, const TrackRoll& track) {
  const ModelConfig& cfg = model.config();
  const int n = track.num_steps();
  const int c = cfg.channels;
  TrackCache cache;
  cache.input = encode_input(track);
  cache.block_in.resize(cfg.depth);
  cache.pre.resize(cfg.depth);

  Activations h;
  for (int d = 0; d < cfg.depth; ++d) {
    const int in = d == 0 ? kInputChannels : c;
    const int dil = model.block_dilation(d);
    const std::string prefix = "block" + std::to_string(d);
    const auto w = model.view(model.tensor(prefix + ".weight"));
    const auto b = model.view(model.tensor(prefix + ".bias"));
    cache.kernels.push_back(transpose_kernel(w, c, in));
    const std::vector<double>& wt = cache.kernels.back();

    Activations pre(n, c);
    for (int i = 0; i < n; ++i) {
      double* acc = pre.row(i);
      std::copy(b.begin(), b.end(), acc);
      for (int k = 0; k < kKernelSize; ++k) {
        const int j = i + (k - 1) * dil;
        if (j < 0 || j >= n) continue;
        const double* wk = wt.data() + std::size_t(k) * in * c;
        if (d == 0) {
          for (int ch : cache.input[j]) {
            const double* col = wk + std::size_t(ch) * c;
            for (int o = 0; o < c; ++o) acc[o] += col[o];
          }
        } else {
          const double* src = h.row(j);
          for (int ci = 0; ci < c; ++ci) {
            const double s = src[ci];
            if (s == 0.0) continue;
            const double* col = wk + std::size_t(ci) * c;
            for (int o = 0; o < c; ++o) acc[o] += col[o] * s;
          }
        }
      }
    }
    Activations out(n, c);
    for (std::size_t k = 0; k < out.data.size(); ++k) {
      out.data[k] = std::max(0.0, pre.data[k]);
    }
    if (d > 0) {
      for (std::size_t k = 0; k < out.data.size(); ++k) out.data[k] += h.data[k];
      cache.block_in[d] = std::move(h);
    }
    cache.pre[d] = std::move(pre);
    h = std::move(out);
  }

  const int outs = cfg.head_outputs();
  const auto hw = model.view(model.tensor("head.weight"));
  const auto hb = model.view(model.tensor("head.bias"));
  cache.head = Activations(n, outs);
  for (int i = 0; i < n; ++i) {
    const double* src = h.row(i);
    double* dst = cache.head.row(i);
    for (int o = 0; o < outs; ++o) {
      double s = hb[o];
      const double* wr = hw.data() + std::size_t(o) * c;
      for (int ci = 0; ci < c; ++ci) s += wr[ci] * src[ci];
      dst[o] = s;
    }
  }
  cache.top = std::move(h);
  return cache;
}

// Accumulates parameter gradients for d loss / d head output.
void backward(const EmissionModel& model, const TrackCache& cache,
              const Activations& d_head, std::vector<double>& grad) {
  const ModelConfig& cfg = model.config();
  const int n = d_head.rows;
  const int c = cfg.channels;
  const int outs = cfg.head_outputs();

  const auto& hw_info = model.tensor("head.weight");
  const auto& hb_info = model.tensor("head.bias");
  const auto hw = model.view(hw_info);
  Activations dh(n, c);
  for (int i = 0; i < n; ++i) {
    const double* dy = d_head.row(i);
    const double* h = cache.top.row(i);
    double* dhi = dh.row(i);
    for (int o = 0; o < outs; ++o) {
      const double g = dy[o];
      if (g == 0.0) continue;
      grad[hb_info.offset + o] += g;
      double* gw = grad.data() + hw_info.offset + std::size_t(o) * c;
      const double* wr = hw.data() + std::size_t(o) * c;
      for (int ci = 0; ci < c; ++ci) {
        gw[ci] += g * h[ci];
        dhi[ci] += g * wr[ci];
      }
    }
  }

  for (int d = cfg.depth - 1; d >= 0; --d) {
    const int in = d == 0 ? kInputChannels : c;
    const int dil = model.block_dilation(d);
    const std::string prefix = "block" + std::to_string(d);
    const auto& w_info = model.tensor(prefix + ".weight");
    const auto& b_info = model.tensor(prefix + ".bias");
    const std::vector<double>& wt = cache.kernels[d];
    const Activations& pre = cache.pre[d];

    Activations dpre(n, c);
    for (std::size_t k = 0; k < dpre.data.size(); ++k) {
      dpre.data[k] = pre.data[k] > 0.0 ? dh.data[k] : 0.0;
    }
    // residual path
    Activations dprev;
    if (d > 0) dprev = dh;

    std::vector<double> dwt(wt.size(), 0.0);
    for (int i = 0; i < n; ++i) {
      const double* g = dpre.row(i);
      for (int o = 0; o < c; ++o) grad[b_info.offset + o] += g[o];
      for (int k = 0; k < kKernelSize; ++k) {
        const int j = i + (k - 1) * dil;
        if (j < 0 || j >= n) continue;
        const std::size_t kbase = std::size_t(k) * in * c;
        if (d == 0) {
          for (int ch : cache.input[j]) {
            double* col = dwt.data() + kbase + std::size_t(ch) * c;
            for (int o = 0; o < c; ++o) col[o] += g[o];
          }
        } else {
          const double* src = cache.block_in[d].row(j);
          double* dsrc = dprev.row(j);
          for (int ci = 0; ci < c; ++ci) {
            double* col = dwt.data() + kbase + std::size_t(ci) * c;
            const double* wcol = wt.data() + kbase + std::size_t(ci) * c;
            const double s = src[ci];
            double back = 0.0;
            for (int o = 0; o < c; ++o) {
              col[o] += g[o] * s;
              back += wcol[o] * g[o];
            }
            dsrc[ci] += back;
          }
        }
      }
    }
    add_transposed_kernel(
        dwt, c, in, std::span<double>(grad.data() + w_info.offset, w_info.size));
    if (d > 0) dh = std::move(dprev);
  }
}

TrackOutput split_head(const Activations& head, int num_layers) {
  TrackOutput out;
  out.logits = LevelMatrix(head.rows, num_layers + 1);
  out.confidence.resize(head.rows);
  for (int i = 0; i < head.rows; ++i) {
    const double* r = head.row(i);
    std::copy(r, r + num_layers + 1, &out.logits(i, 0));
    out.confidence[i] = r[num_layers + 1];
  }
  return out;
}

void softmax_rows(const LevelMatrix& logits, LevelMatrix& out) {
  out = LevelMatrix(logits.rows, logits.cols);
  for (int i = 0; i < logits.rows; ++i) {
    double hi = -kInf;
    for (int l = 0; l < logits.cols; ++l) hi = std::max(hi, logits(i, l));
    double sum = 0.0;
    for (int l = 0; l < logits.cols; ++l) {
      sum += out(i, l) = std::exp(logits(i, l) - hi);
    }
    for (int l = 0; l < logits.cols; ++l) out(i, l) /= sum;
  }
}

// Softmax over tracks of confidence at each step: weights[t][i].
std::vector<std::vector<double>> track_weights(
    const std::vector<TrackOutput>& outputs) {
  const int tracks = static_cast<int>(outputs.size());
  const int n = static_cast<int>(outputs.front().confidence.size());
  std::vector<std::vector<double>> a(tracks, std::vector<double>(n));
  for (int i = 0; i < n; ++i) {
    double hi = -kInf;
    for (int t = 0; t < tracks; ++t) hi = std::max(hi, outputs[t].confidence[i]);
    double sum = 0.0;
    for (int t = 0; t < tracks; ++t) {
      sum += a[t][i] = std::exp(outputs[t].confidence[i] - hi);
    }
    for (int t = 0; t < tracks; ++t) a[t][i] /= sum;
  }
  return a;
}

}  // namespace

TrackOutput track_forward(const EmissionModel& model, const TrackRoll& track) {
  const TrackCache cache = forward_cached(model, track);
  return split_head(cache.head, model.config().num_layers);
}

DistributionSequence pool_tracks(const std::vector<TrackOutput>& outputs) {
  if (outputs.empty()) throw ShapeError("pool_tracks: no tracks");
  const int n = outputs.front().logits.rows;
  const int levels = outputs.front().logits.cols;
  for (const auto& o : outputs) {
    if (o.logits.rows != n || o.logits.cols != levels ||
        static_cast<int>(o.confidence.size()) != n) {
      throw ShapeError("pool_tracks: tracks differ in shape");
    }
  }
  const auto a = track_weights(outputs);
  DistributionSequence p(n, LevelDistribution{std::vector<double>(levels, 0.0)});
  LevelMatrix q;
  for (std::size_t t = 0; t < outputs.size(); ++t) {
    softmax_rows(outputs[t].logits, q);
    for (int i = 0; i < n; ++i) {
      for (int l = 0; l < levels; ++l) p[i].probs[l] += a[t][i] * q(i, l);
    }
  }
  return p;
}

DistributionSequence predict(const EmissionModel& model,
                             const PianoRoll& song) {
  std::vector<TrackOutput> outs;
  outs.reserve(song.num_tracks());
  for (const auto& track : song.tracks()) {
    outs.push_back(track_forward(model, track));
  }
  return pool_tracks(outs);
}

std::vector<TrackPair> all_track_pairs(int num_tracks) {
  std::vector<TrackPair> pairs;
  for (int a = 0; a < num_tracks; ++a) {
    for (int b = a + 1; b < num_tracks; ++b) pairs.push_back({a, b});
  }
  return pairs;
}

// ---------------------------------------------------------------------------
// Training objective
// ---------------------------------------------------------------------------

LossBreakdown loss_and_gradients(const EmissionModel& model,
                                 const PianoRoll& song,
                                 const TransitionTable& table, double lambda,
                                 std::span<const TrackPair> pairs,
                                 std::vector<double>& grad) {
  const int tracks = song.num_tracks();
  if (tracks < 1) throw ShapeError("song has no tracks");
  if (table.num_layers() != model.config().num_layers) {
    throw ShapeError("CRF and model disagree on the number of layers");
  }
  grad.assign(model.parameters().size(), 0.0);
  const int n = song.num_steps();
  const int levels = model.config().num_layers + 1;

  std::vector<TrackCache> caches;
  std::vector<TrackOutput> outs;
  std::vector<LevelMatrix> q(tracks);
  for (int t = 0; t < tracks; ++t) {
    caches.push_back(forward_cached(model, song.track(t)));
    outs.push_back(split_head(caches.back().head, levels - 1));
    softmax_rows(outs.back().logits, q[t]);
  }
  const auto a = track_weights(outs);

  LevelMatrix pooled(n, levels);
  for (int t = 0; t < tracks; ++t) {
    for (int i = 0; i < n; ++i) {
      for (int l = 0; l < levels; ++l) pooled(i, l) += a[t][i] * q[t](i, l);
    }
  }
  auto floor_clamp = [](LevelMatrix m) {
    for (double& v : m.data) v = std::max(v, kEmissionFloor);
    return m;
  };

  LossBreakdown out;
  const double scale = 1.0 / n;
  const CrfLossResult l1 = unsupervised_loss(table, floor_clamp(pooled));
  out.regularity = l1.loss;

  // d loss / d q_t, accumulated from both terms.
  std::vector<LevelMatrix> dq(tracks, LevelMatrix(n, levels));
  std::vector<std::vector<double>> dconf(tracks, std::vector<double>(n, 0.0));
  for (int i = 0; i < n; ++i) {
    // da_t = <g, q_t>, then through the confidence softmax
    double mean = 0.0;
    std::vector<double> da(tracks);
    for (int t = 0; t < tracks; ++t) {
      double s = 0.0;
      for (int l = 0; l < levels; ++l) {
        const double g = l1.grad(i, l) * scale;
        dq[t](i, l) += a[t][i] * g;
        s += g * q[t](i, l);
      }
      da[t] = s;
      mean += a[t][i] * s;
    }
    for (int t = 0; t < tracks; ++t) dconf[t][i] = a[t][i] * (da[t] - mean);
  }

  const bool use_pairs = tracks >= 2 && lambda != 0.0 && !pairs.empty();
  if (use_pairs) {
    const double w = lambda * scale / static_cast<double>(pairs.size());
    double total = 0.0;
    for (const TrackPair& pr : pairs) {
      if (pr.first < 0 || pr.second < 0 || pr.first >= tracks ||
          pr.second >= tracks || pr.first == pr.second) {
        throw RangeError("invalid track pair");
      }
      const auto l2 = consistency_loss(table, floor_clamp(q[pr.first]),
                                       floor_clamp(q[pr.second]));
      total += l2.loss;
      for (std::size_t k = 0; k < l2.grad_first.data.size(); ++k) {
        dq[pr.first].data[k] += w * l2.grad_first.data[k];
        dq[pr.second].data[k] += w * l2.grad_second.data[k];
      }
    }
    out.consistency = total / static_cast<double>(pairs.size());
  }
  out.loss = (out.regularity + (use_pairs ? lambda * out.consistency : 0.0)) *
             scale;

  for (int t = 0; t < tracks; ++t) {
    Activations d_head(n, levels + 1);
    for (int i = 0; i < n; ++i) {
      double dot = 0.0;
      for (int l = 0; l < levels; ++l) dot += dq[t](i, l) * q[t](i, l);
      double* dy = d_head.row(i);
      for (int l = 0; l < levels; ++l) {
        dy[l] = q[t](i, l) * (dq[t](i, l) - dot);
      }
      dy[levels] = dconf[t][i];
    }
    backward(model, caches[t], d_head, grad);
  }
  return out;
}

LossBreakdown loss_and_gradients(const EmissionModel& model,
                                 const PianoRoll& song, const CrfParams& params,
                                 double lambda, std::vector<double>& grad) {
  const auto pairs = all_track_pairs(song.num_tracks());
  return loss_and_gradients(model, song, TransitionTable(params), lambda,
                            pairs, grad);
}

}  // namespace metra
