#include "metra/train.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <thread>

namespace metra {

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw RangeError("learning_rate must be >= 0");
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) ||
      !(adam_beta2 > 0.0 && adam_beta2 < 1.0)) {
    throw RangeError("Adam betas must lie in (0, 1)");
  }
  if (!(adam_eps > 0.0)) throw RangeError("adam_eps must be positive");
  if (epochs < 0) throw RangeError("epochs must be >= 0");
  if (!(lambda_consistency >= 0.0)) {
    throw RangeError("lambda_consistency must be >= 0");
  }
  if (batch < 1) throw RangeError("batch must be >= 1");
  if (threads < 1) throw RangeError("threads must be >= 1");
}

void adam_step(std::vector<double>& params, AdamState& state,
               const std::vector<double>& grad, const TrainConfig& config) {
  if (grad.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw ShapeError("adam_step: parameter, gradient and state sizes differ");
  }
  ++state.step;
  const double b1 = config.adam_beta1;
  const double b2 = config.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double g = grad[k];
    state.m[k] = b1 * state.m[k] + (1.0 - b1) * g;
    state.v[k] = b2 * state.v[k] + (1.0 - b2) * g * g;
    const double m_hat = state.m[k] / c1;
    const double v_hat = state.v[k] / c2;
    params[k] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.adam_eps);
  }
}

namespace {

struct SongJob {
  int song = 0;
  std::vector<TrackPair> pairs;
  std::vector<double> grad;
  double loss = 0.0;
};

void run_jobs(const EmissionModel& model, const std::vector<PianoRoll>& data,
              const TransitionTable& table, double lambda,
              std::vector<SongJob>& jobs, int threads) {
  auto work = [&](std::size_t k) {
    SongJob& job = jobs[k];
    job.loss = loss_and_gradients(model, data[job.song], table, lambda,
                                  job.pairs, job.grad).loss;
  };
  const int workers = std::min<int>(threads, static_cast<int>(jobs.size()));
  if (workers <= 1) {
    for (std::size_t k = 0; k < jobs.size(); ++k) work(k);
    return;
  }
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t k = w; k < jobs.size(); k += workers) work(k);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace

TrainResult train(EmissionModel init, const std::vector<PianoRoll>& dataset,
                  const CrfParams& params, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (dataset.empty()) throw ShapeError("training set is empty");
  const TransitionTable table(params);

  TrainResult result{std::move(init), {}};
  std::vector<double>& theta = result.model.parameters();
  AdamState adam(theta.size());
  // Stream distinct from the one that initialized the weights.
  std::mt19937_64 rng(config.seed ^ 0x5bd1e9955bd1e995ull);

  std::vector<int> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> total(theta.size());

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      const std::size_t stop = std::min(order.size(), start + config.batch);
      std::vector<SongJob> jobs;
      for (std::size_t k = start; k < stop; ++k) {
        SongJob job;
        job.song = order[k];
        const int tracks = dataset[job.song].num_tracks();
        if (tracks >= 2) {
          std::uniform_int_distribution<int> pick(0, tracks - 1);
          const int a = pick(rng);
          int b = pick(rng);
          while (b == a) b = pick(rng);
          job.pairs.push_back({a, b});
        }
        jobs.push_back(std::move(job));
      }
      run_jobs(result.model, dataset, table, config.lambda_consistency, jobs,
               config.threads);
      std::fill(total.begin(), total.end(), 0.0);
      for (const SongJob& job : jobs) {
        loss_sum += job.loss;
        for (std::size_t k = 0; k < total.size(); ++k) total[k] += job.grad[k];
      }
      const double inv = 1.0 / static_cast<double>(jobs.size());
      for (double& g : total) g *= inv;
      adam_step(theta, adam, total, config);
    }
    const double mean = loss_sum / static_cast<double>(dataset.size());
    if (!std::isfinite(mean)) {
      throw NumericalError("training loss became non-finite in epoch " +
                        std::to_string(epoch));
    }
    result.epoch_losses.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
  }
  return result;
}

TrainResult train(const std::vector<PianoRoll>& dataset,
                  const CrfParams& params, const ModelConfig& model_config,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  return train(EmissionModel::initialized(model_config, config.seed), dataset,
               params, config, on_epoch);
}

}  // namespace metra
