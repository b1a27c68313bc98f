#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <thread>
#include <variant>
#include <vector>

#include "cpsnn/backward.hpp"
#include "cpsnn/baselines.hpp"
#include "cpsnn/dynamics.hpp"
#include "cpsnn/hyperparams.hpp"
#include "cpsnn/optim.hpp"
#include "cpsnn/rng.hpp"
#include "cpsnn/sequence.hpp"

namespace cpsnn {

struct TrainingConfig {
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 1.0;
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  Ablation ablation = Ablation::full;
  bool train_mixing = false;
  // Worker threads for per-sample gradients within a batch; results do not depend on it.
  std::size_t threads = 1;
  // Training samples used for the per-epoch gradient-through-time profile.
  std::size_t profile_samples = 32;

  AdamConfig adam() const { return {learning_rate, beta1, beta2, epsilon}; }

  void validate() const {
    if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
    if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("betas must lie in (0,1)");
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
    if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
    if (epochs == 0 || batch_size == 0) throw ConfigError("epochs and batch_size must be positive");
    if (threads == 0) throw ConfigError("threads must be positive");
  }
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double eval_loss = 0.0;
  double eval_accuracy = 0.0;
  double grad_norm = 0.0;  // mean pre-clip global norm over the epoch's batches
  double train_mean_omega = std::numeric_limits<double>::quiet_NaN();
  double eval_mean_omega = std::numeric_limits<double>::quiet_NaN();
  Vector grad_profile;  // length T
};

struct TrainingHistory {
  ModelKind kind = ModelKind::cpsnn;
  std::size_t parameter_count = 0;
  std::vector<EpochMetrics> epochs;
};

using AnyParams = std::variant<LayerParams, FixedSnnParams, AdaptiveSnnParams>;

struct TrainedModel {
  ModelKind kind = ModelKind::cpsnn;
  ModelHyperparams hp;
  AnyParams params;
};

// ---------------------------------------------------------------------------
// Uniform per-model interface used by the training loop.

template <class P>
struct ModelTraits;

template <>
struct ModelTraits<LayerParams> {
  using TapeT = Tape;
  static constexpr ModelKind kind = ModelKind::cpsnn;
};
template <>
struct ModelTraits<FixedSnnParams> {
  using TapeT = BaselineTape;
  static constexpr ModelKind kind = ModelKind::snn_fixed;
};
template <>
struct ModelTraits<AdaptiveSnnParams> {
  using TapeT = BaselineTape;
  static constexpr ModelKind kind = ModelKind::snn_adaptive;
};

template <class TapeT>
struct ModelOutput {
  Vector logits;
  std::optional<TapeT> tape;
  double omega_sum = 0.0;
  std::size_t omega_count = 0;
};

inline ModelOutput<Tape> model_forward(const SpikeSequence& seq, const LayerParams& p, const ModelHyperparams& hp,
                                       bool record_tape, SpikeMode mode = SpikeMode::hard) {
  auto r = forward_sequence(seq, p, hp, record_tape, mode);
  return {std::move(r.logits), std::move(r.tape), r.omega_sum, r.omega_count};
}

inline ModelOutput<BaselineTape> model_forward(const SpikeSequence& seq, const FixedSnnParams& p,
                                               const ModelHyperparams& hp, bool record_tape,
                                               SpikeMode mode = SpikeMode::hard) {
  auto r = fixed_snn_forward(seq, p, hp, record_tape, mode);
  return {std::move(r.logits), std::move(r.tape), 0.0, 0};
}

inline ModelOutput<BaselineTape> model_forward(const SpikeSequence& seq, const AdaptiveSnnParams& p,
                                               const ModelHyperparams& hp, bool record_tape,
                                               SpikeMode mode = SpikeMode::hard) {
  auto r = adaptive_snn_forward(seq, p, hp, record_tape, mode);
  return {std::move(r.logits), std::move(r.tape), 0.0, 0};
}

inline void init_normal(Tensor& t, double stddev, Rng& rng) {
  std::normal_distribution<double> n(0.0, stddev);
  for (double& x : t.data) x = n(rng);
}

// Variance-preserving synaptic and readout init; the warp controller starts
// at W_c = 0, b_c = 4 so omega ~ sigmoid(4) ~ 0.982.
template <class P>
P init_params(const ModelHyperparams& hp, Rng& rng);

inline void init_readout(Tensor& W_out, const ModelHyperparams& hp, Rng& rng) {
  if (hp.readout_gain > 0.0) init_normal(W_out, hp.readout_gain / std::sqrt(static_cast<double>(hp.hidden)), rng);
}

template <>
inline LayerParams init_params<LayerParams>(const ModelHyperparams& hp, Rng& rng) {
  auto p = LayerParams::zeros(hp);
  init_normal(p.W, hp.init_gain / std::sqrt(static_cast<double>(hp.channels)), rng);
  std::fill(p.b_c.data.begin(), p.b_c.data.end(), 4.0);
  init_readout(p.W_out, hp, rng);
  return p;
}

template <>
inline FixedSnnParams init_params<FixedSnnParams>(const ModelHyperparams& hp, Rng& rng) {
  auto p = FixedSnnParams::zeros(hp);
  init_normal(p.W, hp.init_gain / std::sqrt(static_cast<double>(hp.channels)), rng);
  init_readout(p.W_out, hp, rng);
  return p;
}

template <>
inline AdaptiveSnnParams init_params<AdaptiveSnnParams>(const ModelHyperparams& hp, Rng& rng) {
  auto p = AdaptiveSnnParams::zeros(hp);
  init_normal(p.W, hp.init_gain / std::sqrt(static_cast<double>(hp.channels)), rng);
  std::fill(p.a.data.begin(), p.a.data.end(), logit(hp.alpha_m));
  init_readout(p.W_out, hp, rng);
  return p;
}

inline TrainedModel init_model(ModelKind kind, const ModelHyperparams& hp, std::uint64_t seed) {
  hp.validate();
  Rng rng(derive_seed(seed, "init"));
  switch (kind) {
    case ModelKind::cpsnn: return {kind, hp, init_params<LayerParams>(hp, rng)};
    case ModelKind::snn_fixed: return {kind, hp, init_params<FixedSnnParams>(hp, rng)};
    case ModelKind::snn_adaptive: return {kind, hp, init_params<AdaptiveSnnParams>(hp, rng)};
  }
  throw ConfigError("unknown model kind");
}

inline std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

struct EvalReport {
  double loss = 0.0;
  double accuracy = 0.0;
  double mean_omega = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::size_t n = 0;
};

template <class P>
EvalReport evaluate_params(const P& p, const ModelHyperparams& hp, const Dataset& data) {
  EvalReport r;
  r.confusion.assign(hp.classes, std::vector<std::size_t>(hp.classes, 0));
  double omega_sum = 0.0;
  std::size_t omega_count = 0, correct = 0;
  for (const auto& seq : data) {
    auto out = model_forward(seq, p, hp, false);
    r.loss += softmax_cross_entropy(out.logits, seq.label).loss;
    const auto pred = argmax(out.logits);
    correct += pred == static_cast<std::size_t>(seq.label);
    r.confusion[static_cast<std::size_t>(seq.label)][pred] += 1;
    omega_sum += out.omega_sum;
    omega_count += out.omega_count;
  }
  r.n = data.size();
  if (r.n) {
    r.loss /= static_cast<double>(r.n);
    r.accuracy = static_cast<double>(correct) / static_cast<double>(r.n);
  }
  if (omega_count) r.mean_omega = omega_sum / static_cast<double>(omega_count);
  return r;
}

inline void check_dataset(const Dataset& data, const ModelHyperparams& hp, const char* which) {
  for (const auto& seq : data) {
    if (seq.C != hp.channels) {
      throw ConfigError(std::string(which) + " dataset has " + std::to_string(seq.C) + " channels, model expects " +
                        std::to_string(hp.channels));
    }
    if (seq.label < 0 || static_cast<std::size_t>(seq.label) >= hp.classes) {
      throw ConfigError(std::string(which) + " dataset label outside the model's classes");
    }
  }
}

inline EvalReport evaluate(const TrainedModel& m, const Dataset& data) {
  check_dataset(data, m.hp, "eval");
  return std::visit([&](const auto& p) { return evaluate_params(p, m.hp, data); }, m.params);
}

/// Per-timestep l2 norm of d loss / d (membrane, fast trace, slow trace) at t.
inline Vector profile_from_adjoints(const Adjoints& adj) {
  Vector out(adj.dv_pre.size(), 0.0);
  for (std::size_t t = 0; t < out.size(); ++t) {
    double sq = 0.0;
    for (double x : adj.dv_pre[t]) sq += x * x;
    if (!adj.df.empty()) {
      for (double x : adj.df[t]) sq += x * x;
      for (double x : adj.dz[t]) sq += x * x;
    }
    out[t] = std::sqrt(sq);
  }
  return out;
}

template <class P>
struct SampleGrad {
  double loss = 0.0;
  bool correct = false;
  double omega_sum = 0.0;
  std::size_t omega_count = 0;
  std::optional<P> grads;
};

template <class P>
SampleGrad<P> sample_gradient(const SpikeSequence& seq, const P& p, const ModelHyperparams& hp) {
  auto out = model_forward(seq, p, hp, true);
  auto bw = backward_sequence(*out.tape, seq.label, p, hp);
  SampleGrad<P> r;
  r.loss = bw.loss;
  r.correct = argmax(out.logits) == static_cast<std::size_t>(seq.label);
  r.omega_sum = out.omega_sum;
  r.omega_count = out.omega_count;
  r.grads = std::move(bw.grads);
  return r;
}

template <class P>
void zero_frozen(P&, const TrainingConfig&) {}

template <>
inline void zero_frozen<LayerParams>(LayerParams& g, const TrainingConfig& cfg) {
  if (!cfg.train_mixing) std::fill(g.mix.data.begin(), g.mix.data.end(), 0.0);
}

template <class P>
TrainingHistory train_params(P& params, const Dataset& train_set, const Dataset& eval_set, const ModelHyperparams& hp,
                             const TrainingConfig& cfg) {
  TrainingHistory hist;
  hist.kind = ModelTraits<P>::kind;
  hist.parameter_count = parameter_count(params);
  auto opt = AdamState<P>::zeros_like(params);
  const auto adam = cfg.adam();
  const std::size_t N = train_set.size();
  const std::size_t T = train_set.front().T;
  std::size_t step = 0;

  std::vector<std::size_t> order(N);
  std::vector<SampleGrad<P>> batch_out;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(derive_seed(derive_seed(cfg.seed, "shuffle"), static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochMetrics em;
    em.epoch = epoch;
    double loss_sum = 0.0, norm_sum = 0.0, omega_sum = 0.0;
    std::size_t correct = 0, batches = 0, omega_count = 0;

    for (std::size_t start = 0; start < N; start += cfg.batch_size) {
      const std::size_t end = std::min(N, start + cfg.batch_size);
      const std::size_t B = end - start;
      batch_out.assign(B, {});
      auto work = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) batch_out[i] = sample_gradient(train_set[order[start + i]], params, hp);
      };
      const std::size_t nt = std::min(cfg.threads, B);
      if (nt <= 1) {
        work(0, B);
      } else {
        std::vector<std::thread> pool;
        for (std::size_t k = 0; k < nt; ++k) pool.emplace_back(work, k * B / nt, (k + 1) * B / nt);
        for (auto& th : pool) th.join();
      }
      // Fixed combine order keeps results independent of the thread count.
      P grads = std::move(*batch_out[0].grads);
      for (std::size_t i = 1; i < B; ++i) accumulate(grads, *batch_out[i].grads);
      for (const auto& r : batch_out) {
        loss_sum += r.loss;
        correct += r.correct;
        omega_sum += r.omega_sum;
        omega_count += r.omega_count;
      }
      scale(grads, 1.0 / static_cast<double>(B));
      zero_frozen(grads, cfg);
      const double n = global_norm(grads);
      if (!std::isfinite(n)) throw NumericError("non-finite gradient norm in epoch " + std::to_string(epoch));
      norm_sum += n;
      ++batches;
      grads = clip_gradients(std::move(grads), cfg.clip_norm);
      adam_step(params, grads, opt, adam, ++step);
    }

    em.train_loss = loss_sum / static_cast<double>(N);
    em.train_accuracy = static_cast<double>(correct) / static_cast<double>(N);
    em.grad_norm = norm_sum / static_cast<double>(batches);
    if (omega_count) em.train_mean_omega = omega_sum / static_cast<double>(omega_count);

    if (!eval_set.empty()) {
      const auto ev = evaluate_params(params, hp, eval_set);
      em.eval_loss = ev.loss;
      em.eval_accuracy = ev.accuracy;
      em.eval_mean_omega = ev.mean_omega;
    }

    em.grad_profile.assign(T, 0.0);
    const std::size_t probes = std::min(cfg.profile_samples, N);
    for (std::size_t i = 0; i < probes; ++i) {
      const auto& seq = train_set[i];
      auto out = model_forward(seq, params, hp, true);
      Adjoints adj;
      backward_sequence(*out.tape, seq.label, params, hp, &adj);
      const auto prof = profile_from_adjoints(adj);
      for (std::size_t t = 0; t < T; ++t) em.grad_profile[t] += prof[t] / static_cast<double>(probes);
    }
    hist.epochs.push_back(std::move(em));
  }
  return hist;
}

struct TrainResult {
  TrainedModel model;
  TrainingHistory history;
};

/// Mini-batch Adam training with batch-averaged, globally clipped gradients.
/// cfg.ablation overrides hp.ablation.
inline TrainResult train_model(const Dataset& train_set, const Dataset& eval_set, ModelKind kind,
                               ModelHyperparams hp, const TrainingConfig& cfg) {
  cfg.validate();
  hp.ablation = cfg.ablation;
  hp.validate();
  if (train_set.empty()) throw ConfigError("training set is empty");
  check_dataset(train_set, hp, "train");
  check_dataset(eval_set, hp, "eval");
  const std::size_t T = train_set.front().T;
  for (const auto& s : train_set) {
    if (s.T != T) throw ConfigError("training sequences must share one horizon");
  }

  TrainResult r{init_model(kind, hp, cfg.seed), {}};
  r.history = std::visit([&](auto& p) { return train_params(p, train_set, eval_set, hp, cfg); }, r.model.params);
  return r;
}

}  // namespace cpsnn
