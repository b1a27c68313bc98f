#pragma once

#include <cmath>
#include <concepts>
#include <optional>
#include <type_traits>
#include <vector>

#include "cpsnn/common.hpp"
#include "cpsnn/dynamics.hpp"
#include "cpsnn/hyperparams.hpp"
#include "cpsnn/sequence.hpp"

namespace cpsnn {

/// LIF layer with fixed membrane decay driven by I = W s only.
struct FixedSnnParams {
  Tensor W;      // H x C
  Tensor W_out;  // classes x H
  Tensor b_out;  // classes

  static FixedSnnParams zeros(const ModelHyperparams& hp) {
    return {Tensor(hp.hidden, hp.channels), Tensor(hp.classes, hp.hidden), Tensor::vector(hp.classes)};
  }

  void check_shapes(const ModelHyperparams& hp) const {
    require_shape(W, hp.hidden, hp.channels, "W");
    require_shape(W_out, hp.classes, hp.hidden, "W_out");
    require_shape(b_out, hp.classes, 1, "b_out");
  }

  bool operator==(const FixedSnnParams&) const = default;
};

/// LIF layer whose per-neuron decay is sigmoid(a + U s_t).
struct AdaptiveSnnParams {
  Tensor W;      // H x C
  Tensor U;      // H x C decay controller
  Tensor a;      // H decay bias
  Tensor W_out;  // classes x H
  Tensor b_out;  // classes

  static AdaptiveSnnParams zeros(const ModelHyperparams& hp) {
    return {Tensor(hp.hidden, hp.channels), Tensor(hp.hidden, hp.channels), Tensor::vector(hp.hidden),
            Tensor(hp.classes, hp.hidden), Tensor::vector(hp.classes)};
  }

  void check_shapes(const ModelHyperparams& hp) const {
    require_shape(W, hp.hidden, hp.channels, "W");
    require_shape(U, hp.hidden, hp.channels, "U");
    require_shape(a, hp.hidden, 1, "a");
    require_shape(W_out, hp.classes, hp.hidden, "W_out");
    require_shape(b_out, hp.classes, 1, "b_out");
  }

  bool operator==(const AdaptiveSnnParams&) const = default;
};

template <class P, class F>
  requires std::same_as<std::remove_const_t<P>, FixedSnnParams>
void for_each_tensor(P& p, F&& f) {
  f("W", p.W);
  f("W_out", p.W_out);
  f("b_out", p.b_out);
}

template <class P, class F>
  requires std::same_as<std::remove_const_t<P>, AdaptiveSnnParams>
void for_each_tensor(P& p, F&& f) {
  f("W", p.W);
  f("U", p.U);
  f("a", p.a);
  f("W_out", p.W_out);
  f("b_out", p.b_out);
}

struct BaselineStep {
  Vector s;       // C
  Vector I;       // H
  Vector alpha;   // H decay used at this step
  Vector v_prev;  // H
  Vector v_pre;   // H
  Vector v_post;  // H
  Vector spikes;  // H

  void resize(std::size_t C, std::size_t H) {
    s.assign(C, 0.0);
    for (auto* h : {&I, &alpha, &v_prev, &v_pre, &v_post, &spikes}) h->assign(H, 0.0);
  }
};

struct BaselineTape {
  SpikeMode mode = SpikeMode::hard;
  std::vector<BaselineStep> steps;
  Vector rates;
  Vector logits;

  std::size_t length() const { return steps.size(); }
};

struct BaselineForwardResult {
  Vector rates;
  Vector logits;
  std::optional<BaselineTape> tape;
};

namespace detail {

// Shared LIF loop; U/a null selects the fixed-decay model.
inline BaselineForwardResult lif_forward(const SpikeSequence& seq, const Tensor& W, const Tensor* U, const Tensor* a,
                                         const Tensor& W_out, const Tensor& b_out, const ModelHyperparams& hp,
                                         bool record_tape, SpikeMode mode) {
  if (seq.T == 0) throw ConfigError("forward: empty sequence");
  if (seq.C != hp.channels) throw ConfigError("forward: sequence channels do not match model");
  const std::size_t C = hp.channels, H = hp.hidden;
  const bool scaled = !(U && hp.unscaled_input);

  BaselineStep rec;
  rec.resize(C, H);
  Vector v(H, 0.0);
  BaselineForwardResult out;
  out.rates.assign(H, 0.0);
  if (record_tape) {
    out.tape.emplace();
    out.tape->mode = mode;
    out.tape->steps.reserve(seq.T);
  }
  for (std::size_t t = 0; t < seq.T; ++t) {
    seq.row(t, rec.s);
    matvec(W, rec.s, rec.I);
    if (U) {
      matvec(*U, rec.s, rec.alpha);
      for (std::size_t h = 0; h < H; ++h) rec.alpha[h] = sigmoid(rec.alpha[h] + (*a)[h]);
    } else {
      std::fill(rec.alpha.begin(), rec.alpha.end(), hp.alpha_m);
    }
    rec.v_prev = v;
    for (std::size_t h = 0; h < H; ++h) {
      const double al = rec.alpha[h];
      const double vp = al * v[h] + (scaled ? (1.0 - al) : 1.0) * rec.I[h];
      const double sp = spike_value(vp, hp, mode);
      rec.v_pre[h] = vp;
      rec.spikes[h] = sp;
      rec.v_post[h] = mode == SpikeMode::hard ? (sp > 0.0 ? 0.0 : vp) : (1.0 - sp) * vp;
      out.rates[h] += sp;
    }
    if (!all_finite(rec.v_pre)) throw NumericError("forward: non-finite membrane at t=" + std::to_string(t));
    v = rec.v_post;
    if (record_tape) out.tape->steps.push_back(rec);
  }
  for (auto& r : out.rates) r /= static_cast<double>(seq.T);
  readout(W_out, b_out, out.rates, out.logits);
  if (record_tape) {
    out.tape->rates = out.rates;
    out.tape->logits = out.logits;
  }
  return out;
}

}  // namespace detail

inline BaselineForwardResult fixed_snn_forward(const SpikeSequence& seq, const FixedSnnParams& p,
                                               const ModelHyperparams& hp, bool record_tape,
                                               SpikeMode mode = SpikeMode::hard) {
  p.check_shapes(hp);
  return detail::lif_forward(seq, p.W, nullptr, nullptr, p.W_out, p.b_out, hp, record_tape, mode);
}

inline BaselineForwardResult adaptive_snn_forward(const SpikeSequence& seq, const AdaptiveSnnParams& p,
                                                  const ModelHyperparams& hp, bool record_tape,
                                                  SpikeMode mode = SpikeMode::hard) {
  p.check_shapes(hp);
  return detail::lif_forward(seq, p.W, &p.U, &p.a, p.W_out, p.b_out, hp, record_tape, mode);
}

}  // namespace cpsnn
