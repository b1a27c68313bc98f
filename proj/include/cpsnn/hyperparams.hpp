#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "cpsnn/common.hpp"

namespace cpsnn {

enum class Ablation { full, no_warp, no_slow, no_fast };
enum class ModelKind { cpsnn, snn_fixed, snn_adaptive };

// Hard forward with surrogate backward is the training mode. Soft mode replaces
// the Heaviside spike by sigmoid((v - theta) / width) in both passes so the
// whole unrolled graph is differentiable and finite differences are valid.
enum class SpikeMode { hard, soft };

inline std::string_view to_string(Ablation a) {
  switch (a) {
    case Ablation::full: return "none";
    case Ablation::no_warp: return "no-warp";
    case Ablation::no_slow: return "no-slow";
    case Ablation::no_fast: return "no-fast";
  }
  return "none";
}

inline Ablation parse_ablation(std::string_view s) {
  if (s == "none" || s == "full") return Ablation::full;
  if (s == "no-warp" || s == "no_warp") return Ablation::no_warp;
  if (s == "no-slow" || s == "no_slow") return Ablation::no_slow;
  if (s == "no-fast" || s == "no_fast") return Ablation::no_fast;
  throw ConfigError("unknown ablation '" + std::string(s) + "' (none|no-warp|no-slow|no-fast)");
}

inline std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::cpsnn: return "cpsnn";
    case ModelKind::snn_fixed: return "snn";
    case ModelKind::snn_adaptive: return "adaptive";
  }
  return "cpsnn";
}

inline ModelKind parse_model_kind(std::string_view s) {
  if (s == "cpsnn") return ModelKind::cpsnn;
  if (s == "snn" || s == "snn_fixed" || s == "fixed") return ModelKind::snn_fixed;
  if (s == "adaptive" || s == "snn_adaptive") return ModelKind::snn_adaptive;
  throw ConfigError("unknown model kind '" + std::string(s) + "' (cpsnn|snn|adaptive)");
}

struct ModelHyperparams {
  double alpha_m = 0.9;    // membrane decay
  double alpha_f = 0.9;    // fast-trace decay
  double alpha_s = 0.995;  // slow-trace base decay
  double lambda_f = 0.5;
  double lambda_s = 0.5;
  double theta = 1.0;
  double surrogate_width = 1.0;
  std::size_t channels = 8;
  std::size_t hidden = 64;
  std::size_t classes = 2;
  Ablation ablation = Ablation::full;

  // Warp output is omega_min + (1 - omega_min) * sigmoid(.); 0 is the plain sigmoid.
  double omega_min = 0.0;
  // Stop the reset gate's gradient through the spike (v * d spike / dv term).
  bool detach_reset = false;
  // Adaptive baseline only: v = a v + I instead of v = a v + (1 - a) I.
  bool unscaled_input = false;
  // Std of synaptic weights is init_gain / sqrt(C); readout std is readout_gain / sqrt(H).
  double init_gain = 1.0;
  double readout_gain = 1.0;

  void validate() const {
    auto open_unit = [](double x, const char* name) {
      if (!(x > 0.0 && x < 1.0)) {
        throw ConfigError(std::string(name) + " must lie strictly inside (0,1)");
      }
    };
    open_unit(alpha_m, "alpha_m");
    open_unit(alpha_f, "alpha_f");
    open_unit(alpha_s, "alpha_s");
    if (!(alpha_f < alpha_s)) throw ConfigError("alpha_f must be smaller than alpha_s");
    if (!(lambda_f >= 0.0) || !(lambda_s >= 0.0)) throw ConfigError("mixing coefficients must be >= 0");
    if (!(theta > 0.0)) throw ConfigError("theta must be positive");
    if (!(surrogate_width > 0.0)) throw ConfigError("surrogate_width must be positive");
    if (channels == 0 || hidden == 0 || classes == 0) {
      throw ConfigError("channels, hidden and classes must be positive");
    }
    if (!(omega_min >= 0.0 && omega_min < 1.0)) throw ConfigError("omega_min must lie in [0,1)");
    if (!(init_gain > 0.0)) throw ConfigError("init_gain must be positive");
    if (!(readout_gain >= 0.0)) throw ConfigError("readout_gain must be >= 0");
  }
};

}  // namespace cpsnn
