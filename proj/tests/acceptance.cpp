// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Usage: cpsnn_acceptance [criterion numbers...]   (default: all)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <thread>

#include "cpsnn/cpsnn.hpp"
#include "gradcheck.hpp"
#include "suites.hpp"

using namespace cpsnn;
using namespace cpsnn::testing;

namespace {

// Tolerances and thresholds.
constexpr double kCpsnnMin = 0.90;
constexpr double kFixedMax = 0.65;
constexpr double kGapMin = 0.25;
constexpr double kTrainBudgetSeconds = 15 * 60;
constexpr double kGradTol = 1e-4;
constexpr double kGradBudgetSeconds = 60;
constexpr double kExpansionTol = 1e-10;
constexpr double kTauTol = 1e-12;
constexpr double kLocalTol = 1e-6;
constexpr std::size_t kRetentionLag = 139;
constexpr double kFastTol = 1e-9;
constexpr double kFloorTol = 1e-6;
constexpr double kRatioLo = 5.0, kRatioHi = 20.0;
constexpr double kAblationDrop = 0.1;
constexpr double kNoSlowMax = 0.65;
constexpr std::size_t kSeeds = 3;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void verdict(int id, bool ok, const std::string& detail) {
  std::printf("criterion %d: %s  %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

TaskConfig desk_task() {
  TaskConfig tc;
  tc.channels = 8;
  tc.horizon = 100;
  tc.gap_min = 10;
  tc.gap_max = 60;
  tc.distractor_rate = 0.05;
  tc.n_samples = 2000;
  tc.eval_samples = 500;
  tc.seed = 42;
  return tc;
}

ModelHyperparams desk_model() {
  ModelHyperparams hp;
  hp.channels = 8;
  hp.hidden = 64;
  return hp;
}

TrainingConfig desk_training(std::uint64_t seed, Ablation ablation = Ablation::full) {
  TrainingConfig cfg;
  cfg.epochs = 50;
  cfg.seed = seed;
  cfg.ablation = ablation;
  cfg.threads = std::max(1u, std::thread::hardware_concurrency());
  return cfg;
}

double final_eval(const TrainResult& r) { return r.history.epochs.back().eval_accuracy; }

// Exact posterior under the generator: every consistent (gap, t1, a, b) explains the
// raster with the same likelihood, so P(label | x) is the prior mass of admissible
// spike pairs split by parity. Returns the mean of max(p, 1 - p).
double bayes_ceiling(const Dataset& data, const TaskConfig& tc) {
  const double n_gaps = static_cast<double>(tc.gap_max - tc.gap_min + 1);
  double acc = 0.0;
  for (const auto& seq : data) {
    std::vector<std::pair<std::size_t, std::size_t>> ev;
    for (std::size_t t = 0; t < seq.T; ++t) {
      for (std::size_t c = 0; c < seq.C; ++c) {
        if (seq.at(t, c)) ev.emplace_back(t, c);
      }
    }
    double w[2] = {0.0, 0.0};
    for (const auto& [t, a] : ev) {
      for (const auto& [u, b] : ev) {
        if (u <= t) continue;
        const std::size_t gap = u - t;
        if (gap < tc.gap_min || gap > tc.gap_max) continue;
        w[xor_parity_label(a, b)] += 1.0 / (n_gaps * static_cast<double>(seq.T - gap));
      }
    }
    acc += std::max(w[0], w[1]) / (w[0] + w[1]);
  }
  return acc / static_cast<double>(data.size());
}

std::string first_metrics;  // criterion-1 CPSNN seed 0, reused by criterion 8

void criterion_1() {
  const auto tc = desk_task();
  const auto splits = generate_splits(tc);
  std::printf("info: Bayes-optimal eval accuracy for this task is %.4f\n", bayes_ceiling(splits.eval, tc));
  const auto t0 = Clock::now();
  double acc[3][kSeeds];
  const ModelKind kinds[3] = {ModelKind::cpsnn, ModelKind::snn_fixed, ModelKind::snn_adaptive};
  for (std::size_t s = 0; s < kSeeds; ++s) {
    for (int k = 0; k < 3; ++k) {
      const auto r = train_model(splits.train, splits.eval, kinds[k], desk_model(), desk_training(s));
      acc[k][s] = final_eval(r);
      if (k == 0 && s == 0) first_metrics = metrics_csv(r.history);
      std::printf("  seed %zu %-9s eval accuracy %.4f\n", s, std::string(to_string(kinds[k])).c_str(), acc[k][s]);
      std::fflush(stdout);
    }
  }
  const double elapsed = seconds_since(t0);
  double mean[3];
  for (int k = 0; k < 3; ++k) {
    mean[k] = 0.0;
    for (std::size_t s = 0; s < kSeeds; ++s) mean[k] += acc[k][s] / kSeeds;
  }
  std::size_t between = 0;
  for (std::size_t s = 0; s < kSeeds; ++s) {
    if (acc[2][s] > acc[1][s] && acc[2][s] < acc[0][s]) ++between;
  }
  const bool ok = mean[0] >= kCpsnnMin && mean[1] <= kFixedMax && between >= 2 && mean[0] - mean[1] >= kGapMin &&
                  elapsed <= kTrainBudgetSeconds;
  verdict(1, ok,
          fmt("cpsnn %.4f (>= %.2f), snn %.4f (<= %.2f), adaptive %.4f between in %zu/3 seeds, gap %.4f (>= %.2f), "
              "%.0f s (<= %.0f)",
              mean[0], kCpsnnMin, mean[1], kFixedMax, mean[2], between, mean[0] - mean[1], kGapMin, elapsed,
              kTrainBudgetSeconds));
}

template <class P>
GradCheckResult check_kind(std::uint64_t seed, std::size_t instances) {
  std::mt19937_64 rng(seed);
  GradCheckResult worst;
  for (std::size_t i = 0; i < instances; ++i) {
    const auto in = random_instance(rng);
    const auto p = random_params<P>(in.hp, rng);
    const auto r = grad_check(in.seq, p, in.hp);
    worst.checked += r.checked;
    if (r.max_rel_error >= worst.max_rel_error) {
      const auto checked = worst.checked;
      worst = r;
      worst.checked = checked;
    }
  }
  return worst;
}

void criterion_2() {
  const auto t0 = Clock::now();
  const auto a = check_kind<LayerParams>(101, 50);
  const auto b = check_kind<FixedSnnParams>(102, 50);
  const auto c = check_kind<AdaptiveSnnParams>(103, 50);
  const double elapsed = seconds_since(t0);
  const double worst = std::max({a.max_rel_error, b.max_rel_error, c.max_rel_error});
  verdict(2, worst <= kGradTol && elapsed <= kGradBudgetSeconds,
          fmt("max rel error cpsnn %.2e (%s), snn %.2e (%s), adaptive %.2e (%s), tol %.0e, %zu entries, %.1f s",
              a.max_rel_error, a.worst.c_str(), b.max_rel_error, b.worst.c_str(), c.max_rel_error, c.worst.c_str(),
              kGradTol, a.checked + b.checked + c.checked, elapsed));
}

void criterion_3() {
  const auto k = kernel_suite(100, 1000, 2024);
  const bool ok = k.max_expansion_error <= kExpansionTol && k.max_lower_violation <= 0.0 &&
                  k.max_upper_violation <= 0.0 && k.max_tau_error <= kTauTol;
  verdict(3, ok,
          fmt("expansion %.2e (<= %.0e), lower bound excess %.2e, upper bound excess %.2e, tau_eff %.2e (<= %.0e), "
              "%zu pairs",
              k.max_expansion_error, kExpansionTol, k.max_lower_violation, k.max_upper_violation, k.max_tau_error,
              kTauTol, k.pairs));
}

void criterion_4() {
  const double alpha_s = 0.995, eps = 0.5;
  const std::size_t L = 100;
  const auto rs = construct_retention_schedule(alpha_s, L, eps);
  const auto v = verify_retention(rs.schedule, alpha_s, L, eps, kLocalTol);
  const bool ok = v.local_ok && v.retention_ok && rs.crossing_lag == kRetentionLag && v.retention_lag &&
                  *v.retention_lag >= kRetentionLag;
  verdict(4, ok,
          fmt("local match %.2e (<= %.0e), fixed kernel crosses %.1f at lag %zu (expect %zu), retention at lag %zu: "
              "kappa %.6f vs fixed %.6f",
              v.local_match_error, kLocalTol, eps, rs.crossing_lag, kRetentionLag,
              v.retention_lag ? *v.retention_lag : std::size_t{0}, v.retention_kappa, v.fixed_kappa));
}

void criterion_5() {
  const auto b = boundedness_suite(1000, 77);
  const bool ok = b.max_fast_excess <= kFastTol && b.max_slow_excess <= 0.0 && b.max_floor_excess <= kFloorTol &&
                  b.max_current_excess <= 0.0 && b.runs == 1000;
  verdict(5, ok,
          fmt("%zu runs (%zu floored at omega_min 0.1): fast excess %.2e, slow excess %.2e, floor excess %.2e, current "
              "excess %.2e, max z %.1f",
              b.runs, b.floored_runs, b.max_fast_excess, b.max_slow_excess, b.max_floor_excess, b.max_current_excess,
              b.max_z_seen));
}

void criterion_6() {
  ScalingGrid g;
  g.horizons = {1000, 10000, 100000};
  const auto rows = scaling_probe(g);
  const bool same_state = rows[0].state_bytes == rows[1].state_bytes && rows[1].state_bytes == rows[2].state_bytes;
  const double r1 = rows[1].wall_seconds / rows[0].wall_seconds, r2 = rows[2].wall_seconds / rows[1].wall_seconds;
  const auto in = [](double r) { return r >= kRatioLo && r <= kRatioHi; };
  verdict(6, same_state && in(r1) && in(r2),
          fmt("state bytes %zu/%zu/%zu, time ratios 1e4/1e3 %.2f and 1e5/1e4 %.2f (in [%.0f, %.0f])",
              rows[0].state_bytes, rows[1].state_bytes, rows[2].state_bytes, r1, r2, kRatioLo, kRatioHi));
}

void criterion_7() {
  auto tc = desk_task();
  tc.gap_min = 40;
  tc.gap_max = 60;
  const auto splits = generate_splits(tc);
  std::printf("info: Bayes-optimal eval accuracy at gaps [40, 60] is %.4f\n", bayes_ceiling(splits.eval, tc));
  double full = 0.0, no_warp = 0.0, no_slow = 0.0;
  bool omega_one = true;
  for (std::size_t s = 0; s < kSeeds; ++s) {
    const auto f = train_model(splits.train, splits.eval, ModelKind::cpsnn, desk_model(), desk_training(s));
    const auto w =
        train_model(splits.train, splits.eval, ModelKind::cpsnn, desk_model(), desk_training(s, Ablation::no_warp));
    const auto n =
        train_model(splits.train, splits.eval, ModelKind::cpsnn, desk_model(), desk_training(s, Ablation::no_slow));
    for (const auto& e : w.history.epochs) omega_one = omega_one && e.train_mean_omega == 1.0 && e.eval_mean_omega == 1.0;
    full += final_eval(f) / kSeeds;
    no_warp += final_eval(w) / kSeeds;
    no_slow += final_eval(n) / kSeeds;
    std::printf("  seed %zu full %.4f no-warp %.4f no-slow %.4f\n", s, final_eval(f), final_eval(w), final_eval(n));
    std::fflush(stdout);
  }
  verdict(7, omega_one && full - no_warp >= kAblationDrop && no_slow <= kNoSlowMax,
          fmt("no-warp mean omega == 1: %s, full %.4f, no-warp %.4f (drop %.4f, need >= %.1f), no-slow %.4f (<= %.2f)",
              omega_one ? "yes" : "no", full, no_warp, full - no_warp, kAblationDrop, no_slow, kNoSlowMax));
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void criterion_8() {
  const auto splits = generate_splits(desk_task());
  if (first_metrics.empty()) {
    first_metrics = metrics_csv(train_model(splits.train, splits.eval, ModelKind::cpsnn, desk_model(), desk_training(0)).history);
  }
  const auto again = metrics_csv(train_model(splits.train, splits.eval, ModelKind::cpsnn, desk_model(), desk_training(0)).history);
  const auto dir = std::filesystem::temp_directory_path() / "cpsnn_acceptance";
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "run_a.csv", std::ios::binary) << first_metrics;
  std::ofstream(dir / "run_b.csv", std::ios::binary) << again;
  const auto a = slurp(dir / "run_a.csv"), b = slurp(dir / "run_b.csv");
  verdict(8, !a.empty() && a == b, fmt("metrics CSVs %zu and %zu bytes, identical: %s", a.size(), b.size(), a == b ? "yes" : "no"));
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  const auto want = [&](int id) { return only.empty() || only.count(id) > 0; };
  void (*const runs[])() = {criterion_1, criterion_2, criterion_3, criterion_4,
                            criterion_5, criterion_6, criterion_7, criterion_8};
  // Cheap property checks first so their verdicts show up before the training runs.
  for (int id : {2, 3, 4, 5, 6, 1, 7, 8}) {
    if (!want(id)) continue;
    try {
      runs[id - 1]();
    } catch (const std::exception& e) {
      verdict(id, false, std::string("exception: ") + e.what());
    }
  }
  std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
