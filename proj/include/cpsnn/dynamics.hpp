#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "cpsnn/common.hpp"
#include "cpsnn/hyperparams.hpp"
#include "cpsnn/sequence.hpp"

namespace cpsnn {

/// Trainable tensors of one CPSNN layer plus its linear readout.
struct LayerParams {
  Tensor W;      // H x C synaptic weights
  Tensor W_c;    // C x 2C warp controller weights over [s_t, z_{t-1}]
  Tensor b_c;    // C
  Tensor W_out;  // classes x H
  Tensor b_out;  // classes
  Tensor mix;    // {lambda_f, lambda_s}; frozen unless mixing is trained

  static LayerParams zeros(const ModelHyperparams& hp) {
    const auto C = hp.channels, H = hp.hidden, K = hp.classes;
    LayerParams p;
    p.W = Tensor(H, C);
    p.W_c = Tensor(C, 2 * C);
    p.b_c = Tensor::vector(C);
    p.W_out = Tensor(K, H);
    p.b_out = Tensor::vector(K);
    p.mix = Tensor::vector(2);
    p.mix[0] = hp.lambda_f;
    p.mix[1] = hp.lambda_s;
    return p;
  }

  void check_shapes(const ModelHyperparams& hp) const {
    const auto C = hp.channels, H = hp.hidden, K = hp.classes;
    require_shape(W, H, C, "W");
    require_shape(W_c, C, 2 * C, "W_c");
    require_shape(b_c, C, 1, "b_c");
    require_shape(W_out, K, H, "W_out");
    require_shape(b_out, K, 1, "b_out");
    require_shape(mix, 2, 1, "mix");
  }

  bool operator==(const LayerParams&) const = default;
};

template <class P, class F>
  requires std::same_as<std::remove_const_t<P>, LayerParams>
void for_each_tensor(P& p, F&& f) {
  f("W", p.W);
  f("W_c", p.W_c);
  f("b_c", p.b_c);
  f("W_out", p.W_out);
  f("b_out", p.b_out);
  f("mix", p.mix);
}

/// Per-sequence mutable state. Size depends on H and C only.
struct LayerState {
  Vector v;  // H membrane potentials (post-reset)
  Vector f;  // C fast traces
  Vector z;  // C slow traces
  std::size_t t = 0;

  static LayerState zeros(const ModelHyperparams& hp) {
    return {Vector(hp.hidden, 0.0), Vector(hp.channels, 0.0), Vector(hp.channels, 0.0), 0};
  }

  void reset() {
    std::fill(v.begin(), v.end(), 0.0);
    std::fill(f.begin(), f.end(), 0.0);
    std::fill(z.begin(), z.end(), 0.0);
    t = 0;
  }

  // Live state footprint, counted from element sizes.
  std::size_t state_bytes() const {
    return (v.size() + f.size() + z.size()) * sizeof(double) + sizeof(t);
  }

  bool operator==(const LayerState&) const = default;
};

/// Everything one timestep produces; the backward pass replays these.
struct StepRecord {
  Vector s;       // C input spikes
  Vector f;       // C fast trace f_t
  Vector z_prev;  // C slow trace z_{t-1}
  Vector z;       // C slow trace z_t
  Vector omega;   // C warp factors
  Vector I;       // H synaptic current
  Vector v_prev;  // H post-reset membrane from t-1
  Vector v_pre;   // H membrane before reset
  Vector v_post;  // H membrane after reset
  Vector spikes;  // H emitted spikes (soft mode: in (0,1))

  void resize(std::size_t C, std::size_t H) {
    for (auto* c : {&s, &f, &z_prev, &z, &omega}) c->assign(C, 0.0);
    for (auto* h : {&I, &v_prev, &v_pre, &v_post, &spikes}) h->assign(H, 0.0);
  }
};

struct Tape {
  SpikeMode mode = SpikeMode::hard;
  std::vector<StepRecord> steps;
  Vector rates;
  Vector logits;

  std::size_t length() const { return steps.size(); }
};

// ---------------------------------------------------------------------------
// Per-timestep operations. The *_into forms write into caller storage and are
// what the sequence loops use; the value-returning forms wrap them.

inline void fast_trace_update_into(std::span<const double> f_prev, std::span<const double> s, double alpha_f,
                                   std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = alpha_f * f_prev[i] + s[i];
  }
}

inline Vector fast_trace_update(std::span<const double> f_prev, std::span<const double> s, double alpha_f) {
  if (f_prev.size() != s.size()) throw ConfigError("fast_trace_update: size mismatch");
  if (!(alpha_f > 0.0 && alpha_f < 1.0)) throw ContractError("fast_trace_update: alpha_f outside (0,1)");
  if (!all_finite(f_prev) || !all_finite(s)) throw NumericError("fast_trace_update: non-finite input");
  Vector out(s.size());
  fast_trace_update_into(f_prev, s, alpha_f, out);
  return out;
}

// omega = omega_min + (1 - omega_min) * sigmoid(W_c [s; z_prev] + b_c); all ones under no-warp.
inline void warp_factor_into(std::span<const double> s, std::span<const double> z_prev, const Tensor& W_c,
                             const Tensor& b_c, const ModelHyperparams& hp, std::span<double> out) {
  if (hp.ablation == Ablation::no_warp) {
    std::fill(out.begin(), out.end(), 1.0);
    return;
  }
  const std::size_t C = s.size();
  for (std::size_t i = 0; i < C; ++i) {
    const double* w = W_c.data.data() + i * W_c.cols;
    double pre = b_c[i];
    for (std::size_t j = 0; j < C; ++j) pre += w[j] * s[j];
    for (std::size_t j = 0; j < C; ++j) pre += w[C + j] * z_prev[j];
    out[i] = hp.omega_min + (1.0 - hp.omega_min) * sigmoid(pre);
  }
}

inline Vector warp_factor(std::span<const double> s, std::span<const double> z_prev, const Tensor& W_c,
                          const Tensor& b_c, const ModelHyperparams& hp) {
  const std::size_t C = s.size();
  if (z_prev.size() != C) throw ConfigError("warp_factor: z_prev size mismatch");
  require_shape(W_c, C, 2 * C, "W_c");
  require_shape(b_c, C, 1, "b_c");
  Vector out(C);
  warp_factor_into(s, z_prev, W_c, b_c, hp, out);
  return out;
}

// z = alpha_s^omega * z_prev + s, with the power taken as exp(omega ln alpha_s).
inline void slow_trace_update_into(std::span<const double> z_prev, std::span<const double> s,
                                   std::span<const double> omega, double log_alpha_s, std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::exp(omega[i] * log_alpha_s) * z_prev[i] + s[i];
  }
}

inline Vector slow_trace_update(std::span<const double> z_prev, std::span<const double> s,
                                std::span<const double> omega, double alpha_s) {
  if (z_prev.size() != s.size() || omega.size() != s.size()) throw ConfigError("slow_trace_update: size mismatch");
  if (!(alpha_s > 0.0 && alpha_s < 1.0)) throw ContractError("slow_trace_update: alpha_s outside (0,1)");
  for (double w : omega) {
    if (!(w > 0.0 && w <= 1.0)) throw ContractError("slow_trace_update: omega outside (0,1]");
  }
  Vector out(s.size());
  slow_trace_update_into(z_prev, s, omega, std::log(alpha_s), out);
  return out;
}

// Presynaptic drive x = s + lambda_f f + lambda_s z with ablated terms removed.
inline void presynaptic_drive_into(std::span<const double> s, std::span<const double> f, std::span<const double> z,
                                   const LayerParams& p, const ModelHyperparams& hp, std::span<double> out) {
  const double lf = hp.ablation == Ablation::no_fast ? 0.0 : p.mix[0];
  const double ls = hp.ablation == Ablation::no_slow ? 0.0 : p.mix[1];
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = s[i] + lf * f[i] + ls * z[i];
  }
}

/// I = W s + lambda_f W f + lambda_s W z.
inline Vector synaptic_current(std::span<const double> s, std::span<const double> f, std::span<const double> z,
                               const LayerParams& p, const ModelHyperparams& hp) {
  const std::size_t C = hp.channels;
  if (s.size() != C || f.size() != C || z.size() != C) throw ConfigError("synaptic_current: size mismatch");
  require_shape(p.W, hp.hidden, C, "W");
  Vector x(C), out(hp.hidden);
  presynaptic_drive_into(s, f, z, p, hp, x);
  matvec(p.W, x, out);
  return out;
}

inline double spike_value(double v_pre, const ModelHyperparams& hp, SpikeMode mode) {
  if (mode == SpikeMode::soft) {
    return sigmoid((v_pre - hp.theta) / hp.surrogate_width);
  }
  return v_pre > hp.theta ? 1.0 : 0.0;
}

struct MembraneResult {
  Vector v;
  Vector spikes;
};

/// Leaky integration, strict threshold crossing and hard reset to exactly zero.
inline MembraneResult membrane_step(std::span<const double> v_prev, std::span<const double> I, double alpha_m,
                                    double theta) {
  if (v_prev.size() != I.size()) throw ConfigError("membrane_step: size mismatch");
  if (!(alpha_m > 0.0 && alpha_m < 1.0)) throw ContractError("membrane_step: alpha_m outside (0,1)");
  if (!(theta > 0.0)) throw ContractError("membrane_step: theta must be positive");
  if (!all_finite(I)) throw NumericError("membrane_step: non-finite synaptic current");
  MembraneResult r{Vector(I.size()), Vector(I.size())};
  for (std::size_t i = 0; i < I.size(); ++i) {
    const double v = alpha_m * v_prev[i] + (1.0 - alpha_m) * I[i];
    const bool fire = v > theta;
    r.spikes[i] = fire ? 1.0 : 0.0;
    r.v[i] = fire ? 0.0 : v;
  }
  return r;
}

// One full CPSNN timestep on `state`, in the fixed order fast trace, warp,
// slow trace, current, membrane, spike, reset. `rec` receives every
// intermediate; `drive` is scratch of size C.
inline void cpsnn_step(const LayerParams& p, const ModelHyperparams& hp, SpikeMode mode, double log_alpha_s,
                       LayerState& state, StepRecord& rec, Vector& drive) {
  fast_trace_update_into(state.f, rec.s, hp.alpha_f, rec.f);
  rec.z_prev = state.z;
  warp_factor_into(rec.s, rec.z_prev, p.W_c, p.b_c, hp, rec.omega);
  slow_trace_update_into(rec.z_prev, rec.s, rec.omega, log_alpha_s, rec.z);
  presynaptic_drive_into(rec.s, rec.f, rec.z, p, hp, drive);
  matvec(p.W, drive, rec.I);
  rec.v_prev = state.v;
  const double a = hp.alpha_m;
  for (std::size_t h = 0; h < rec.I.size(); ++h) {
    const double v = a * rec.v_prev[h] + (1.0 - a) * rec.I[h];
    const double sp = spike_value(v, hp, mode);
    rec.v_pre[h] = v;
    rec.spikes[h] = sp;
    rec.v_post[h] = mode == SpikeMode::hard ? (sp > 0.0 ? 0.0 : v) : (1.0 - sp) * v;
  }
  state.f = rec.f;
  state.z = rec.z;
  state.v = rec.v_post;
  ++state.t;
}

struct ForwardResult {
  Vector rates;
  Vector logits;
  std::optional<Tape> tape;
  double omega_sum = 0.0;  // summed over steps and channels
  std::size_t omega_count = 0;

  double mean_omega() const { return omega_count ? omega_sum / static_cast<double>(omega_count) : 1.0; }
};

inline void readout(const Tensor& W_out, const Tensor& b_out, std::span<const double> rates, Vector& logits) {
  logits.assign(W_out.rows, 0.0);
  matvec(W_out, rates, logits);
  for (std::size_t k = 0; k < logits.size(); ++k) logits[k] += b_out[k];
}

/// Runs the layer over a whole sequence from the zero state.
inline ForwardResult forward_sequence(const SpikeSequence& seq, const LayerParams& p, const ModelHyperparams& hp,
                                      bool record_tape, SpikeMode mode = SpikeMode::hard) {
  if (seq.T == 0) throw ConfigError("forward_sequence: empty sequence");
  if (seq.C != hp.channels) throw ConfigError("forward_sequence: sequence channels do not match model");
  p.check_shapes(hp);

  const std::size_t C = hp.channels, H = hp.hidden;
  const double log_alpha_s = std::log(hp.alpha_s);
  LayerState state = LayerState::zeros(hp);
  StepRecord rec;
  rec.resize(C, H);
  Vector drive(C);

  ForwardResult out;
  out.rates.assign(H, 0.0);
  if (record_tape) {
    out.tape.emplace();
    out.tape->mode = mode;
    out.tape->steps.reserve(seq.T);
  }
  for (std::size_t t = 0; t < seq.T; ++t) {
    seq.row(t, rec.s);
    cpsnn_step(p, hp, mode, log_alpha_s, state, rec, drive);
    if (!all_finite(rec.v_pre)) throw NumericError("forward_sequence: non-finite membrane at t=" + std::to_string(t));
    for (std::size_t h = 0; h < H; ++h) out.rates[h] += rec.spikes[h];
    for (double w : rec.omega) out.omega_sum += w;
    out.omega_count += C;
    if (record_tape) out.tape->steps.push_back(rec);
  }
  for (auto& r : out.rates) r /= static_cast<double>(seq.T);
  readout(p.W_out, p.b_out, out.rates, out.logits);
  if (record_tape) {
    out.tape->rates = out.rates;
    out.tape->logits = out.logits;
  }
  return out;
}

/// One in-place hard-mode timestep with no retained history.
inline Vector streaming_step(LayerState& state, std::span<const double> s, const LayerParams& p,
                             const ModelHyperparams& hp) {
  if (s.size() != hp.channels || state.f.size() != hp.channels || state.z.size() != hp.channels ||
      state.v.size() != hp.hidden) {
    throw ConfigError("streaming_step: state or input dimensions do not match the model");
  }
  StepRecord rec;
  rec.resize(hp.channels, hp.hidden);
  std::copy(s.begin(), s.end(), rec.s.begin());
  Vector drive(hp.channels);
  cpsnn_step(p, hp, SpikeMode::hard, std::log(hp.alpha_s), state, rec, drive);
  return rec.spikes;
}

/// Reusable streaming runner: same step as streaming_step without per-call allocation.
class StreamingLayer {
 public:
  StreamingLayer(const LayerParams& p, const ModelHyperparams& hp)
      : params_(&p), hp_(hp), state_(LayerState::zeros(hp)), log_alpha_s_(std::log(hp.alpha_s)), drive_(hp.channels) {
    p.check_shapes(hp);
    rec_.resize(hp.channels, hp.hidden);
  }

  std::span<const double> step(std::span<const double> s) {
    std::copy(s.begin(), s.end(), rec_.s.begin());
    cpsnn_step(*params_, hp_, SpikeMode::hard, log_alpha_s_, state_, rec_, drive_);
    return rec_.spikes;
  }

  const LayerState& state() const { return state_; }
  void reset() { state_.reset(); }

  // State plus the fixed-size scratch used per step.
  std::size_t state_bytes() const {
    std::size_t scratch = drive_.size();
    for (const auto* v : {&rec_.s, &rec_.f, &rec_.z_prev, &rec_.z, &rec_.omega, &rec_.I, &rec_.v_prev, &rec_.v_pre,
                          &rec_.v_post, &rec_.spikes}) {
      scratch += v->size();
    }
    return state_.state_bytes() + scratch * sizeof(double);
  }

 private:
  const LayerParams* params_;
  ModelHyperparams hp_;
  LayerState state_;
  double log_alpha_s_;
  StepRecord rec_;
  Vector drive_;
};

}  // namespace cpsnn
