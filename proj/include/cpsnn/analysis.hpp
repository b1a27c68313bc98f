#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cpsnn/backward.hpp"
#include "cpsnn/baselines.hpp"
#include "cpsnn/common.hpp"
#include "cpsnn/dynamics.hpp"
#include "cpsnn/rng.hpp"
#include "cpsnn/train.hpp"

namespace cpsnn {

/// Warp factors omega_1..omega_T (stored 0-based). 1 is the no-warp limit.
struct WarpSchedule {
  Vector omega;

  std::size_t length() const { return omega.size(); }
  double at(std::size_t j) const { return omega[j - 1]; }  // 1-based, as omega_j

  void validate() const {
    for (double w : omega) {
      if (!(w > 0.0 && w <= 1.0)) throw ContractError("warp schedule entries must lie in (0,1]");
    }
  }
};

/// kappa[t][k] for 0 <= k <= t <= T: weight of input s_k in slow trace z_t.
struct KernelMatrix {
  std::size_t n = 0;  // T + 1
  Vector data;        // n x n, zero above the diagonal

  double operator()(std::size_t t, std::size_t k) const { return data[t * n + k]; }
};

inline Vector warp_prefix_sums(const WarpSchedule& sched) {
  Vector s(sched.length() + 1, 0.0);
  for (std::size_t j = 1; j <= sched.length(); ++j) s[j] = s[j - 1] + sched.at(j);
  return s;
}

// Log-space evaluation: kappa[t][k] = exp((S_t - S_k) ln alpha_s).
inline KernelMatrix kernel_matrix(const WarpSchedule& sched, double alpha_s) {
  if (!(alpha_s > 0.0 && alpha_s < 1.0)) throw ContractError("kernel_matrix: alpha_s outside (0,1)");
  sched.validate();
  const auto S = warp_prefix_sums(sched);
  const double la = std::log(alpha_s);
  KernelMatrix K{S.size(), Vector(S.size() * S.size(), 0.0)};
  for (std::size_t t = 0; t < K.n; ++t) {
    for (std::size_t k = 0; k <= t; ++k) K.data[t * K.n + k] = std::exp((S[t] - S[k]) * la);
  }
  return K;
}

struct KernelBoundsReport {
  double max_lower_violation = 0.0;  // max(alpha_s^{t-k} - kappa, 0)
  double max_upper_violation = 0.0;  // max(kappa - 1, 0)
  double max_diag_error = 0.0;       // |kappa[k][k] - 1|
  double max_telescoping_error = 0.0;

  bool ok(double tol = 1e-12) const {
    return max_lower_violation <= tol && max_upper_violation <= tol && max_diag_error <= tol &&
           max_telescoping_error <= tol;
  }
};

inline KernelBoundsReport check_kernel_bounds(const KernelMatrix& K, const WarpSchedule& sched, double alpha_s) {
  KernelBoundsReport r;
  const double la = std::log(alpha_s);
  for (std::size_t t = 0; t < K.n; ++t) {
    r.max_diag_error = std::max(r.max_diag_error, std::abs(K(t, t) - 1.0));
    for (std::size_t k = 0; k <= t; ++k) {
      const double kap = K(t, k);
      const double fixed = std::exp(static_cast<double>(t - k) * la);
      r.max_lower_violation = std::max(r.max_lower_violation, fixed - kap);
      r.max_upper_violation = std::max(r.max_upper_violation, kap - 1.0);
      if (k < t) {
        const double tele = K(t, k + 1) * std::exp(sched.at(k + 1) * la);
        r.max_telescoping_error = std::max(r.max_telescoping_error, std::abs(kap - tele));
      }
    }
  }
  return r;
}

/// Slow-trace recurrence for one channel; input has T+1 entries s_0..s_T.
inline Vector slow_trace_recurrence(std::span<const double> input, const WarpSchedule& sched, double alpha_s) {
  if (input.size() != sched.length() + 1) throw ConfigError("input must have one more entry than the schedule");
  Vector z(input.size());
  z[0] = input[0];
  const double la = std::log(alpha_s);
  for (std::size_t t = 1; t < input.size(); ++t) z[t] = std::exp(sched.at(t) * la) * z[t - 1] + input[t];
  return z;
}

/// max_t |z_t(recurrence) - sum_k kappa[t][k] s_k|.
inline double verify_trace_expansion(std::span<const double> input, const WarpSchedule& sched, double alpha_s) {
  const auto z = slow_trace_recurrence(input, sched, alpha_s);
  const auto K = kernel_matrix(sched, alpha_s);
  double worst = 0.0;
  for (std::size_t t = 0; t < K.n; ++t) {
    double acc = 0.0;
    for (std::size_t k = 0; k <= t; ++k) acc += K(t, k) * input[k];
    worst = std::max(worst, std::abs(z[t] - acc));
  }
  return worst;
}

/// tau_eff(k, t) = sum_{j=k+1}^{t} omega_j.
inline double effective_time(const WarpSchedule& sched, std::size_t k, std::size_t t) {
  if (k > t) throw ContractError("effective_time: k must not exceed t");
  if (t > sched.length()) throw ContractError("effective_time: t beyond the schedule");
  double s = 0.0;
  for (std::size_t j = k + 1; j <= t; ++j) s += sched.at(j);
  return s;
}

struct NonstationarityWitness {
  std::size_t lag = 0;
  std::size_t t1 = 0, k1 = 0;  // window with the smallest warp sum
  std::size_t t2 = 0, k2 = 0;  // window with the largest warp sum
  double kappa1 = 0.0, kappa2 = 0.0;
  double warp_sum1 = 0.0, warp_sum2 = 0.0;
};

/// Equal-lag windows whose kernel weights differ, chosen to maximise the
/// difference; nullopt iff the schedule is constant (within 1e-12).
inline std::optional<NonstationarityWitness> check_nonstationarity(const WarpSchedule& sched, double alpha_s) {
  if (sched.length() < 2) throw ContractError("check_nonstationarity: need T >= 2");
  const auto [lo, hi] = std::minmax_element(sched.omega.begin(), sched.omega.end());
  if (*hi - *lo <= 1e-12) return std::nullopt;

  const auto S = warp_prefix_sums(sched);
  const double la = std::log(alpha_s);
  const std::size_t T = sched.length();
  NonstationarityWitness best;
  double best_gap = -1.0;
  for (std::size_t lag = 1; lag < T; ++lag) {
    std::size_t kmin = 0, kmax = 0;
    for (std::size_t k = 0; k + lag <= T; ++k) {
      const double w = S[k + lag] - S[k];
      if (w < S[kmin + lag] - S[kmin]) kmin = k;
      if (w > S[kmax + lag] - S[kmax]) kmax = k;
    }
    const double w1 = S[kmin + lag] - S[kmin], w2 = S[kmax + lag] - S[kmax];
    const double k1 = std::exp(w1 * la), k2 = std::exp(w2 * la);
    if (w2 - w1 > 1e-12 && k1 - k2 > best_gap) {
      best_gap = k1 - k2;
      best = {lag, kmin + lag, kmin, kmax + lag, kmax, k1, k2, w1, w2};
    }
  }
  return best;
}

struct FixedDecayFit {
  double alpha_tilde = 0.0;  // the only fixed decay reproducing kappa1 at this lag
  double predicted_kappa2 = 0.0;
  double mismatch = 0.0;  // |predicted_kappa2 - kappa2|
};

inline FixedDecayFit fit_fixed_decay(const NonstationarityWitness& w) {
  FixedDecayFit f;
  f.alpha_tilde = std::pow(w.kappa1, 1.0 / static_cast<double>(w.lag));
  f.predicted_kappa2 = std::pow(f.alpha_tilde, static_cast<double>(w.lag));
  f.mismatch = std::abs(f.predicted_kappa2 - w.kappa2);
  return f;
}

struct SelectiveRetention {
  WarpSchedule schedule;
  double cue_weight = 0.0;         // kappa over the slowed window
  double distractor_weight = 0.0;  // kappa over the unwarped window, same lag
};

/// Two back-to-back windows of length `lag`: the first slowed to `cue_omega`,
/// the second left at omega = 1.
inline SelectiveRetention selective_retention_schedule(double alpha_s, std::size_t lag, double cue_omega) {
  if (lag == 0) throw ContractError("lag must be positive");
  SelectiveRetention r;
  r.schedule.omega.assign(2 * lag, 1.0);
  std::fill(r.schedule.omega.begin(), r.schedule.omega.begin() + static_cast<std::ptrdiff_t>(lag), cue_omega);
  const auto K = kernel_matrix(r.schedule, alpha_s);
  r.cue_weight = K(lag, 0);
  r.distractor_weight = K(2 * lag, lag);
  return r;
}

struct RetentionSchedule {
  WarpSchedule schedule;
  double omega_bar = 0.0;
  std::size_t window = 0;        // L: lags matched to the fixed kernel
  std::size_t crossing_lag = 0;  // first lag with alpha_s^lag < epsilon
};

// First lag at which alpha^lag drops below eps.
inline std::size_t fixed_crossing_lag(double alpha_s, double epsilon) {
  std::size_t lag = static_cast<std::size_t>(std::floor(std::log(epsilon) / std::log(alpha_s)));
  while (std::pow(alpha_s, static_cast<double>(lag)) >= epsilon) ++lag;
  while (lag > 0 && std::pow(alpha_s, static_cast<double>(lag - 1)) < epsilon) --lag;
  return lag;
}

/// omega = 1 for the first L steps (exact fixed-kernel match), then omega_bar
/// spreading the remaining log-weight budget so kappa stays >= epsilon out to
/// twice the fixed kernel's crossing lag.
inline RetentionSchedule construct_retention_schedule(double alpha_s, std::size_t L, double epsilon) {
  if (!(alpha_s > 0.0 && alpha_s < 1.0)) throw ContractError("alpha_s must lie in (0,1)");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw ContractError("epsilon must lie in (0,1)");
  if (L == 0) throw ContractError("L must be at least 1");
  const double budget = std::log(epsilon) / std::log(alpha_s) - static_cast<double>(L);
  if (budget <= 0.0) {
    throw ContractError("infeasible: the fixed kernel already falls below epsilon=" + std::to_string(epsilon) +
                        " within the first L=" + std::to_string(L) +
                        " lags, so no schedule matching it there can retain epsilon beyond L");
  }
  RetentionSchedule r;
  r.window = L;
  r.crossing_lag = fixed_crossing_lag(alpha_s, epsilon);
  const std::size_t horizon = 2 * std::max(r.crossing_lag, L + 1);
  r.omega_bar = std::clamp(budget / static_cast<double>(horizon - L), 1e-6, 1.0);
  r.schedule.omega.assign(horizon, r.omega_bar);
  std::fill(r.schedule.omega.begin(), r.schedule.omega.begin() + static_cast<std::ptrdiff_t>(L), 1.0);
  return r;
}

struct RetentionVerdict {
  double local_match_error = 0.0;  // max_{lag <= L} |kappa - alpha^lag|, from the window start
  bool local_ok = false;
  std::optional<std::size_t> retention_lag;  // lag > L with kappa >= eps > alpha^lag
  double retention_kappa = 0.0;
  double fixed_kappa = 0.0;
  bool retention_ok = false;
};

inline RetentionVerdict verify_retention(const WarpSchedule& sched, double alpha_s, std::size_t L, double epsilon,
                                         double local_tol = 1e-6) {
  const auto K = kernel_matrix(sched, alpha_s);
  RetentionVerdict v;
  for (std::size_t lag = 0; lag <= L && lag < K.n; ++lag) {
    v.local_match_error = std::max(v.local_match_error, std::abs(K(lag, 0) - std::pow(alpha_s, double(lag))));
  }
  v.local_ok = L < K.n && v.local_match_error <= local_tol;
  for (std::size_t lag = L + 1; lag < K.n; ++lag) {
    const double kap = K(lag, 0), fixed = std::pow(alpha_s, static_cast<double>(lag));
    if (kap >= epsilon && fixed < epsilon) {
      v.retention_lag = lag;
      v.retention_kappa = kap;
      v.fixed_kappa = fixed;
      v.retention_ok = true;
      break;
    }
  }
  return v;
}

// Gradient-through-time profile for any recorded tape.
template <class TapeT, class P>
Vector gradient_flow_profile(const TapeT& tape, int label, const P& params, const ModelHyperparams& hp) {
  Adjoints adj;
  backward_sequence(tape, label, params, hp, &adj);
  return profile_from_adjoints(adj);
}

struct ScalingRow {
  std::size_t T = 0, N = 0, C = 0;
  double wall_seconds = 0.0;  // per pass over T steps, best of repeats
  std::size_t state_bytes = 0;
};

struct ScalingGrid {
  std::vector<std::size_t> horizons{1000, 10000, 100000};
  std::vector<std::size_t> hidden{64};
  std::vector<std::size_t> channels{8};
  double spike_rate = 0.05;
  std::uint64_t seed = 7;
  double min_seconds = 0.05;  // keep repeating a pass until this much time was measured
  std::size_t best_of = 3;
};

/// Streams Bernoulli input through a randomly initialised layer and reports wall time and live state size.
inline std::vector<ScalingRow> scaling_probe(const ScalingGrid& grid) {
  if (grid.horizons.empty() || grid.hidden.empty() || grid.channels.empty()) throw ConfigError("empty scaling grid");
  std::vector<ScalingRow> rows;
  for (auto C : grid.channels) {
    for (auto N : grid.hidden) {
      ModelHyperparams hp;
      hp.channels = C;
      hp.hidden = N;
      Rng init(derive_seed(grid.seed, "init"));
      const auto params = init_params<LayerParams>(hp, init);
      for (auto T : grid.horizons) {
        StreamingLayer layer(params, hp);
        Vector s(C);
        double best = 1e300;
        volatile double sink = 0.0;
        for (std::size_t rep = 0; rep < grid.best_of; ++rep) {
          std::size_t passes = 0;
          const auto t0 = std::chrono::steady_clock::now();
          double elapsed = 0.0;
          do {
            layer.reset();
            Rng rng(derive_seed(grid.seed, "data"));
            std::bernoulli_distribution spike(grid.spike_rate);
            for (std::size_t t = 0; t < T; ++t) {
              for (auto& x : s) x = spike(rng) ? 1.0 : 0.0;
              sink = sink + layer.step(s)[0];
            }
            ++passes;
            elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
          } while (elapsed < grid.min_seconds);
          best = std::min(best, elapsed / static_cast<double>(passes));
        }
        rows.push_back({T, N, C, best, layer.state_bytes()});
      }
    }
  }
  return rows;
}

struct TraceDiagnostics {
  std::size_t T = 0, C = 0;
  std::vector<Vector> f, z, z_fixed, omega;  // per step, per channel
};

inline TraceDiagnostics trace_diagnostics(const LayerParams& p, const ModelHyperparams& hp, const SpikeSequence& seq) {
  auto fw = forward_sequence(seq, p, hp, true);
  TraceDiagnostics d;
  d.T = seq.T;
  d.C = seq.C;
  Vector zf(seq.C, 0.0);
  for (const auto& r : fw.tape->steps) {
    for (std::size_t c = 0; c < seq.C; ++c) zf[c] = hp.alpha_s * zf[c] + r.s[c];
    d.f.push_back(r.f);
    d.z.push_back(r.z);
    d.z_fixed.push_back(zf);
    d.omega.push_back(r.omega);
  }
  return d;
}

inline std::string format_number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// Writes (t, channel, f, z, z_fixed) and (t, mean_omega, omega_0..omega_{C-1}) CSVs.
inline void diagnostics_dump(const LayerParams& p, const ModelHyperparams& hp, const SpikeSequence& seq,
                             const std::string& traces_path, const std::string& warp_path) {
  const auto d = trace_diagnostics(p, hp, seq);
  std::ofstream tr(traces_path, std::ios::binary);
  if (!tr) throw DataError("cannot open '" + traces_path + "'");
  tr << "t,channel,f,z,z_fixed\n";
  for (std::size_t t = 0; t < d.T; ++t) {
    for (std::size_t c = 0; c < d.C; ++c) {
      tr << t << ',' << c << ',' << format_number(d.f[t][c]) << ',' << format_number(d.z[t][c]) << ','
         << format_number(d.z_fixed[t][c]) << '\n';
    }
  }
  std::ofstream wp(warp_path, std::ios::binary);
  if (!wp) throw DataError("cannot open '" + warp_path + "'");
  wp << "t,mean_omega";
  for (std::size_t c = 0; c < d.C; ++c) wp << ",omega_" << c;
  wp << '\n';
  for (std::size_t t = 0; t < d.T; ++t) {
    double m = 0.0;
    for (double w : d.omega[t]) m += w;
    wp << t << ',' << format_number(m / static_cast<double>(d.C));
    for (double w : d.omega[t]) wp << ',' << format_number(w);
    wp << '\n';
  }
  if (!tr || !wp) throw DataError("diagnostics write failed");
}

}  // namespace cpsnn
