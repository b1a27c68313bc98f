#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "cpsnn/common.hpp"

namespace cpsnn {

// Works with any parameter struct that provides for_each_tensor.

template <class Params>
double global_norm(const Params& grads) {
  double sq = 0.0;
  for_each_tensor(grads, [&](const char*, const Tensor& t) {
    for (double x : t.data) sq += x * x;
  });
  return std::sqrt(sq);
}

template <class Params>
std::size_t parameter_count(const Params& p) {
  std::size_t n = 0;
  for_each_tensor(p, [&](const char*, const Tensor& t) { n += t.size(); });
  return n;
}

template <class Params>
void scale(Params& grads, double factor) {
  for_each_tensor(grads, [&](const char*, Tensor& t) {
    for (double& x : t.data) x *= factor;
  });
}

// acc += g, tensor by tensor.
template <class Params>
void accumulate(Params& acc, const Params& g) {
  std::vector<const Tensor*> src;
  for_each_tensor(g, [&](const char*, const Tensor& t) { src.push_back(&t); });
  std::size_t i = 0;
  for_each_tensor(acc, [&](const char*, Tensor& t) {
    const Tensor& s = *src[i++];
    for (std::size_t k = 0; k < t.size(); ++k) t.data[k] += s.data[k];
  });
}

/// Scales every tensor by clip_norm / ||g|| when the global l2 norm exceeds clip_norm.
template <class Params>
Params clip_gradients(Params grads, double clip_norm) {
  const double n = global_norm(grads);
  if (n > clip_norm) scale(grads, clip_norm / n);
  return grads;
}

struct AdamConfig {
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <class Params>
struct AdamState {
  Params m;
  Params v;

  static AdamState zeros_like(const Params& p) {
    AdamState s{p, p};
    for_each_tensor(s.m, [](const char*, Tensor& t) { std::fill(t.data.begin(), t.data.end(), 0.0); });
    for_each_tensor(s.v, [](const char*, Tensor& t) { std::fill(t.data.begin(), t.data.end(), 0.0); });
    return s;
  }
};

/// Bias-corrected Adam update for step >= 1.
template <class Params>
void adam_step(Params& params, const Params& grads, AdamState<Params>& state, const AdamConfig& cfg,
               std::size_t step) {
  if (step == 0) throw ContractError("adam_step: step counts from 1");
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  std::vector<const Tensor*> gs;
  std::vector<Tensor*> ms, vs;
  for_each_tensor(grads, [&](const char*, const Tensor& t) { gs.push_back(&t); });
  for_each_tensor(state.m, [&](const char*, Tensor& t) { ms.push_back(&t); });
  for_each_tensor(state.v, [&](const char*, Tensor& t) { vs.push_back(&t); });
  std::size_t i = 0;
  for_each_tensor(params, [&](const char*, Tensor& p) {
    const Tensor& g = *gs[i];
    Tensor& m = *ms[i];
    Tensor& v = *vs[i];
    ++i;
    for (std::size_t k = 0; k < p.size(); ++k) {
      m.data[k] = cfg.beta1 * m.data[k] + (1.0 - cfg.beta1) * g.data[k];
      v.data[k] = cfg.beta2 * v.data[k] + (1.0 - cfg.beta2) * g.data[k] * g.data[k];
      const double m_hat = m.data[k] / bc1;
      const double v_hat = v.data[k] / bc2;
      p.data[k] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  });
}

}  // namespace cpsnn
