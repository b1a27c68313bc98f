#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "cpsnn/baselines.hpp"
#include "cpsnn/common.hpp"
#include "cpsnn/dynamics.hpp"
#include "cpsnn/hyperparams.hpp"

namespace cpsnn {

/// Triangular surrogate for d spike / d v, peak 1/width at v == theta, unit area.
inline double surrogate_derivative(double v, double theta, double width) {
  return std::max(0.0, 1.0 - std::abs(v - theta) / width) / width;
}

// d spike / d v_pre as used by the backward pass for the recorded spike value.
inline double spike_derivative(double v_pre, double spike, const ModelHyperparams& hp, SpikeMode mode) {
  if (mode == SpikeMode::soft) {
    return spike * (1.0 - spike) / hp.surrogate_width;
  }
  return surrogate_derivative(v_pre, hp.theta, hp.surrogate_width);
}

struct LossGrad {
  double loss = 0.0;
  Vector dlogits;
};

inline LossGrad softmax_cross_entropy(std::span<const double> logits, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
    throw ConfigError("label " + std::to_string(label) + " outside the readout's class range");
  }
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - m);
  LossGrad out;
  out.loss = std::log(z) + m - logits[static_cast<std::size_t>(label)];
  out.dlogits.resize(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k) {
    out.dlogits[k] = std::exp(logits[k] - m) / z - (static_cast<int>(k) == label ? 1.0 : 0.0);
  }
  return out;
}

/// Per-step total derivatives of the loss, filled on request.
/// dv_pre is w.r.t. the pre-reset membrane; df/dz are empty for the baselines.
struct Adjoints {
  std::vector<Vector> dv_pre;
  std::vector<Vector> df;
  std::vector<Vector> dz;
};

template <class Params>
struct BackwardResult {
  double loss = 0.0;
  Params grads;
};

namespace detail {

inline void check_step_finite(std::span<const double> v, std::size_t t, const char* what) {
  if (!all_finite(v)) {
    throw NumericError(std::string("non-finite gradient (") + what + ") first at t=" + std::to_string(t));
  }
}

// Readout and rate-averaging part shared by every model. Returns d loss / d spike_t
// (same for all t) and fills the readout gradients.
inline Vector readout_backward(const Vector& rates, const Vector& logits, int label, const Tensor& W_out,
                               std::size_t T, Tensor& dW_out, Tensor& db_out, double& loss) {
  auto lg = softmax_cross_entropy(logits, label);
  loss = lg.loss;
  outer_add(dW_out, lg.dlogits, rates);
  for (std::size_t k = 0; k < lg.dlogits.size(); ++k) db_out[k] += lg.dlogits[k];
  Vector g(W_out.cols, 0.0);
  matvec_transposed_add(W_out, lg.dlogits, g);
  for (auto& x : g) x /= static_cast<double>(T);
  return g;
}

}  // namespace detail

/// Exact reverse-mode BPTT through a recorded CPSNN tape.
inline BackwardResult<LayerParams> backward_sequence(const Tape& tape, int label, const LayerParams& p,
                                                     const ModelHyperparams& hp, Adjoints* adjoints = nullptr) {
  const std::size_t T = tape.length();
  if (T == 0) throw ConfigError("backward_sequence: empty tape");
  const std::size_t C = hp.channels, H = hp.hidden;
  const SpikeMode mode = tape.mode;
  const bool warp = hp.ablation != Ablation::no_warp;
  const double lf = hp.ablation == Ablation::no_fast ? 0.0 : p.mix[0];
  const double ls = hp.ablation == Ablation::no_slow ? 0.0 : p.mix[1];
  const double log_alpha_s = std::log(hp.alpha_s);
  const double am = hp.alpha_m;

  BackwardResult<LayerParams> out{0.0, LayerParams::zeros(hp)};
  std::fill(out.grads.mix.data.begin(), out.grads.mix.data.end(), 0.0);
  auto& g = out.grads;
  const Vector g_spike = detail::readout_backward(tape.rates, tape.logits, label, p.W_out, T, g.W_out, g.b_out, out.loss);

  if (adjoints) {
    adjoints->dv_pre.assign(T, Vector(H, 0.0));
    adjoints->df.assign(T, Vector(C, 0.0));
    adjoints->dz.assign(T, Vector(C, 0.0));
  }

  Vector dv_post(H, 0.0), dv_pre(H, 0.0), dI(H, 0.0);
  Vector df(C, 0.0), dz(C, 0.0);            // carried from t+1 into f_t, z_t
  Vector dx(C), x(C), dpre(C), input(2 * C), dz_prev(C);

  for (std::size_t ti = T; ti-- > 0;) {
    const StepRecord& r = tape.steps[ti];
    for (std::size_t h = 0; h < H; ++h) {
      const double sp = r.spikes[h];
      const double dsp = spike_derivative(r.v_pre[h], sp, hp, mode);
      const double d_spike = g_spike[h] - (hp.detach_reset ? 0.0 : dv_post[h] * r.v_pre[h]);
      dv_pre[h] = dv_post[h] * (1.0 - sp) + d_spike * dsp;
      dI[h] = (1.0 - am) * dv_pre[h];
    }
    detail::check_step_finite(dv_pre, ti, "membrane");

    // I = W x, x = s + lf f + ls z
    presynaptic_drive_into(r.s, r.f, r.z, p, hp, x);
    outer_add(g.W, dI, x);
    std::fill(dx.begin(), dx.end(), 0.0);
    matvec_transposed_add(p.W, dI, dx);
    for (std::size_t c = 0; c < C; ++c) {
      if (hp.ablation != Ablation::no_fast) g.mix[0] += dx[c] * r.f[c];
      if (hp.ablation != Ablation::no_slow) g.mix[1] += dx[c] * r.z[c];
      df[c] += lf * dx[c];
      dz[c] += ls * dx[c];
    }

    if (adjoints) {
      adjoints->dv_pre[ti] = dv_pre;
      adjoints->df[ti] = df;
      adjoints->dz[ti] = dz;
    }

    // z_t = exp(omega_t ln alpha_s) z_{t-1} + s_t, omega_t = w0 + (1-w0) sigmoid(W_c [s; z_{t-1}] + b_c)
    for (std::size_t c = 0; c < C; ++c) {
      const double decay = std::exp(r.omega[c] * log_alpha_s);
      dz_prev[c] = decay * dz[c];
      if (warp) {
        const double d_omega = dz[c] * r.z_prev[c] * decay * log_alpha_s;
        const double sg = (r.omega[c] - hp.omega_min) / (1.0 - hp.omega_min);
        dpre[c] = d_omega * (1.0 - hp.omega_min) * sg * (1.0 - sg);
      }
    }
    if (warp) {
      std::copy(r.s.begin(), r.s.end(), input.begin());
      std::copy(r.z_prev.begin(), r.z_prev.end(), input.begin() + static_cast<std::ptrdiff_t>(C));
      outer_add(g.W_c, dpre, input);
      for (std::size_t c = 0; c < C; ++c) {
        g.b_c[c] += dpre[c];
        const double d = dpre[c];
        if (d == 0.0) continue;
        const double* w = p.W_c.data.data() + c * p.W_c.cols + C;
        for (std::size_t j = 0; j < C; ++j) dz_prev[j] += w[j] * d;
      }
    }
    detail::check_step_finite(dz_prev, ti, "slow trace");

    for (std::size_t c = 0; c < C; ++c) df[c] *= hp.alpha_f;
    std::swap(dz, dz_prev);
    for (std::size_t h = 0; h < H; ++h) dv_post[h] = am * dv_pre[h];
  }
  return out;
}

namespace detail {

inline void lif_backward(const BaselineTape& tape, int label, const Tensor* U, const Tensor& W_out,
                         const ModelHyperparams& hp, Tensor& dW, Tensor* dU, Tensor* da, Tensor& dW_out,
                         Tensor& db_out, double& loss, Adjoints* adjoints) {
  const std::size_t T = tape.length();
  if (T == 0) throw ConfigError("backward: empty tape");
  const std::size_t H = hp.hidden;
  const bool scaled = !(U && hp.unscaled_input);
  const Vector g_spike = readout_backward(tape.rates, tape.logits, label, W_out, T, dW_out, db_out, loss);
  if (adjoints) {
    adjoints->dv_pre.assign(T, Vector(H, 0.0));
    adjoints->df.clear();
    adjoints->dz.clear();
  }
  Vector dv_post(H, 0.0), dv_pre(H), dI(H), dpre(H);
  for (std::size_t ti = T; ti-- > 0;) {
    const BaselineStep& r = tape.steps[ti];
    for (std::size_t h = 0; h < H; ++h) {
      const double sp = r.spikes[h];
      const double dsp = spike_derivative(r.v_pre[h], sp, hp, tape.mode);
      const double d_spike = g_spike[h] - (hp.detach_reset ? 0.0 : dv_post[h] * r.v_pre[h]);
      dv_pre[h] = dv_post[h] * (1.0 - sp) + d_spike * dsp;
      const double al = r.alpha[h];
      dI[h] = (scaled ? 1.0 - al : 1.0) * dv_pre[h];
      if (U) {
        const double d_alpha = dv_pre[h] * (r.v_prev[h] - (scaled ? r.I[h] : 0.0));
        dpre[h] = d_alpha * al * (1.0 - al);
      }
    }
    check_step_finite(dv_pre, ti, "membrane");
    if (adjoints) adjoints->dv_pre[ti] = dv_pre;
    outer_add(dW, dI, r.s);
    if (U) {
      outer_add(*dU, dpre, r.s);
      for (std::size_t h = 0; h < H; ++h) (*da)[h] += dpre[h];
    }
    for (std::size_t h = 0; h < H; ++h) dv_post[h] = r.alpha[h] * dv_pre[h];
  }
}

}  // namespace detail

inline BackwardResult<FixedSnnParams> backward_sequence(const BaselineTape& tape, int label, const FixedSnnParams& p,
                                                        const ModelHyperparams& hp, Adjoints* adjoints = nullptr) {
  BackwardResult<FixedSnnParams> out{0.0, FixedSnnParams::zeros(hp)};
  detail::lif_backward(tape, label, nullptr, p.W_out, hp, out.grads.W, nullptr, nullptr, out.grads.W_out,
                       out.grads.b_out, out.loss, adjoints);
  return out;
}

inline BackwardResult<AdaptiveSnnParams> backward_sequence(const BaselineTape& tape, int label,
                                                           const AdaptiveSnnParams& p, const ModelHyperparams& hp,
                                                           Adjoints* adjoints = nullptr) {
  BackwardResult<AdaptiveSnnParams> out{0.0, AdaptiveSnnParams::zeros(hp)};
  detail::lif_backward(tape, label, &p.U, p.W_out, hp, out.grads.W, &out.grads.U, &out.grads.a,
                       out.grads.W_out, out.grads.b_out, out.loss, adjoints);
  return out;
}

}  // namespace cpsnn
