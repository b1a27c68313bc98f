// cpsnn_cli: dataset generation, training, evaluation and analysis subcommands.
//
// exit codes: 0 ok, 1 usage/config, 2 data, 3 invariant check failed

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cpsnn/cpsnn.hpp"

using namespace cpsnn;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitInvariant = 3;

// "out/metrics.csv", 2 -> "out/metrics.rep2.csv"
std::string repeat_path(const std::string& path, std::size_t rep, std::size_t repeats) {
  if (repeats <= 1) return path;
  const auto slash = path.find_last_of('/');
  const auto dot = path.find_last_of('.');
  const std::string tag = ".rep" + std::to_string(rep);
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return path + tag;
  return path.substr(0, dot) + tag + path.substr(dot);
}

Vector read_numbers(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open '" + path + "'");
  Vector out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    for (auto& ch : line) {
      if (ch == ',' || ch == ';' || ch == '\t' || ch == '\r') ch = ' ';
    }
    std::istringstream ls(line);
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t used = 0;
        const double x = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        out.push_back(x);
      } catch (const std::exception&) {
        if (lineno == 1 && out.empty()) break;  // header row
        throw DataError(path + ":" + std::to_string(lineno) + ": not a number: '" + tok + "'");
      }
    }
  }
  if (out.empty()) throw DataError("'" + path + "' holds no values");
  return out;
}

double mean_of(const Vector& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

double sd_of(const Vector& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

// ------------------------------------------------------------------ gen

struct GenArgs {
  TaskConfig task;
  std::string out;
};

int run_gen(const GenArgs& a) {
  const auto data = generate_dataset(a.task);
  save_dataset(data, a.out);
  std::size_t ones = 0, gmin = a.task.horizon, gmax = 0;
  for (const auto& s : data) {
    ones += s.label == 1;
    gmin = std::min(gmin, s.meta->gap());
    gmax = std::max(gmax, s.meta->gap());
  }
  std::printf("wrote %zu sequences to %s\n", data.size(), a.out.c_str());
  std::printf("labels: %zu zero / %zu one\n", data.size() - ones, ones);
  if (!data.empty()) std::printf("gap range: [%zu, %zu]\n", gmin, gmax);
  return 0;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string config, train_path, eval_path, dump_config;
  std::string model_kind, ablate, model_out, metrics_out, profile_out;
  std::size_t epochs = 0, repeats = 0, threads = 0;
  std::int64_t seed = -1;
};

RunConfig effective_config(const TrainArgs& a) {
  RunConfig rc = a.config.empty() ? RunConfig{} : load_run_config(a.config);
  if (!a.model_kind.empty()) rc.model_kind = parse_model_kind(a.model_kind);
  if (!a.ablate.empty()) rc.ablation = parse_ablation(a.ablate);
  if (!a.model_out.empty()) rc.outputs.model = a.model_out;
  if (!a.metrics_out.empty()) rc.outputs.metrics = a.metrics_out;
  if (!a.profile_out.empty()) rc.outputs.grad_profile = a.profile_out;
  if (a.epochs) rc.training.epochs = a.epochs;
  if (a.repeats) rc.repeats = a.repeats;
  if (a.threads) rc.training.threads = a.threads;
  if (a.seed >= 0) rc.training.seed = static_cast<std::uint64_t>(a.seed);
  rc.training.ablation = rc.ablation;
  rc.model.ablation = rc.ablation;
  return rc;
}

int run_train(const TrainArgs& a) {
  const RunConfig rc = effective_config(a);
  rc.model.validate();
  rc.training.validate();
  if (rc.repeats == 0) throw ConfigError("repeats must be at least 1");
  if (!a.dump_config.empty()) write_text(a.dump_config, to_json(rc).dump(2) + "\n");

  Dataset train_set, eval_set;
  if (a.train_path.empty() != a.eval_path.empty()) throw ConfigError("--train and --eval go together");
  if (a.train_path.empty()) {
    auto splits = generate_splits(rc.task);
    train_set = std::move(splits.train);
    eval_set = std::move(splits.eval);
  } else {
    train_set = load_dataset(a.train_path);
    eval_set = load_dataset(a.eval_path);
  }

  std::printf("model %s, ablation %s, %zu train / %zu eval sequences\n", std::string(to_string(rc.model_kind)).c_str(),
              std::string(to_string(rc.ablation)).c_str(), train_set.size(), eval_set.size());
  Vector finals;
  for (std::size_t rep = 0; rep < rc.repeats; ++rep) {
    TrainingConfig cfg = rc.training;
    cfg.seed = rc.training.seed + rep;
    const auto r = train_model(train_set, eval_set, rc.model_kind, rc.model, cfg);
    save_model(r.model, repeat_path(rc.outputs.model, rep, rc.repeats));
    write_text(repeat_path(rc.outputs.metrics, rep, rc.repeats), metrics_csv(r.history));
    write_text(repeat_path(rc.outputs.grad_profile, rep, rc.repeats), grad_profile_csv(r.history));
    const auto& last = r.history.epochs.back();
    finals.push_back(last.eval_accuracy);
    std::printf("run %zu (seed %llu): eval accuracy %.4f, eval loss %.4f", rep,
                static_cast<unsigned long long>(cfg.seed), last.eval_accuracy, last.eval_loss);
    if (!std::isnan(last.eval_mean_omega)) std::printf(", mean omega %.4f", last.eval_mean_omega);
    std::printf("\n");
  }
  std::printf("eval accuracy %.4f +- %.4f over %zu run(s)\n", mean_of(finals), sd_of(finals), finals.size());
  return 0;
}

// ----------------------------------------------------------------- eval

struct EvalArgs {
  std::string model_path, data_path, out;
};

int run_eval(const EvalArgs& a) {
  const auto m = load_model(a.model_path);
  const auto data = load_dataset(a.data_path);
  const auto r = evaluate(m, data);
  std::printf("accuracy %.4f over %zu sequences (loss %.4f)\n", r.accuracy, r.n, r.loss);
  std::printf("confusion [true][pred]:\n");
  for (std::size_t i = 0; i < r.confusion.size(); ++i) {
    std::printf("  %zu:", i);
    for (auto c : r.confusion[i]) std::printf(" %zu", c);
    std::printf("\n");
  }
  if (!a.out.empty()) {
    json j{{"accuracy", r.accuracy}, {"loss", r.loss}, {"n", r.n}, {"confusion", r.confusion}};
    if (!std::isnan(r.mean_omega)) j["mean_omega"] = r.mean_omega;
    write_text(a.out, j.dump(2) + "\n");
  }
  return 0;
}

// -------------------------------------------------------------- analyze

struct KernelArgs {
  std::string omega_file, out;
  double alpha_s = 0.995;
};

int run_kernel(const KernelArgs& a) {
  WarpSchedule sched{read_numbers(a.omega_file)};
  try {
    sched.validate();
  } catch (const ContractError& e) {
    throw DataError(a.omega_file + ": " + e.what());
  }
  const auto K = kernel_matrix(sched, a.alpha_s);
  const auto rep = check_kernel_bounds(K, sched, a.alpha_s);
  if (!a.out.empty()) {
    std::ofstream os(a.out, std::ios::binary);
    if (!os) throw DataError("cannot open '" + a.out + "'");
    os << "t,k,kappa,fixed\n";
    for (std::size_t t = 0; t < K.n; ++t) {
      for (std::size_t k = 0; k <= t; ++k) {
        os << t << ',' << k << ',' << format_number(K(t, k)) << ','
           << format_number(std::pow(a.alpha_s, static_cast<double>(t - k))) << '\n';
      }
    }
  }
  constexpr double tol = 1e-12;
  std::printf("T = %zu, alpha_s = %g\n", sched.length(), a.alpha_s);
  std::printf("max lower-bound violation  %.3e\n", rep.max_lower_violation);
  std::printf("max upper-bound violation  %.3e\n", rep.max_upper_violation);
  std::printf("max diagonal error         %.3e\n", rep.max_diag_error);
  std::printf("max telescoping error      %.3e\n", rep.max_telescoping_error);
  const bool ok = rep.max_lower_violation <= tol && rep.max_upper_violation <= tol && rep.max_diag_error <= tol &&
                  rep.max_telescoping_error <= tol;
  std::printf("bounds %s\n", ok ? "hold" : "VIOLATED");
  return ok ? 0 : kExitInvariant;
}

struct RetentionArgs {
  double alpha_s = 0.995, epsilon = 0.5;
  std::size_t L = 100;
  std::string out;
};

int run_retention(const RetentionArgs& a) {
  const auto r = construct_retention_schedule(a.alpha_s, a.L, a.epsilon);
  const auto v = verify_retention(r.schedule, a.alpha_s, a.L, a.epsilon);
  std::printf("alpha_s = %g, L = %zu, epsilon = %g\n", a.alpha_s, a.L, a.epsilon);
  std::printf("fixed kernel drops below epsilon at lag %zu\n", r.crossing_lag);
  std::printf("schedule: omega = 1 for %zu steps, then omega_bar = %.6f (length %zu)\n", r.window, r.omega_bar,
              r.schedule.length());
  std::printf("local match: max error %.3e over lags 0..%zu -> %s\n", v.local_match_error, a.L,
              v.local_ok ? "PASS" : "FAIL");
  if (v.retention_lag) {
    std::printf("retention: lag %zu, kappa %.6f >= %g > fixed %.6f -> PASS\n", *v.retention_lag, v.retention_kappa,
                a.epsilon, v.fixed_kappa);
  } else {
    std::printf("retention: no lag beyond L keeps kappa >= epsilon -> FAIL\n");
  }
  if (!a.out.empty()) {
    const auto K = kernel_matrix(r.schedule, a.alpha_s);
    std::ofstream os(a.out, std::ios::binary);
    if (!os) throw DataError("cannot open '" + a.out + "'");
    os << "lag,omega,kappa,fixed\n";
    for (std::size_t lag = 0; lag < K.n; ++lag) {
      os << lag << ',' << format_number(lag ? r.schedule.at(lag) : 1.0) << ',' << format_number(K(lag, 0)) << ','
         << format_number(std::pow(a.alpha_s, static_cast<double>(lag))) << '\n';
    }
  }
  return v.local_ok && v.retention_ok ? 0 : kExitInvariant;
}

struct ModelSource {
  std::string model_path, model_kind = "cpsnn", data_path;
  std::int64_t seed = 0;
  std::size_t index = 0, samples = 32;
};

TrainedModel load_or_init(const ModelSource& s) {
  if (!s.model_path.empty()) return load_model(s.model_path);
  return init_model(parse_model_kind(s.model_kind), ModelHyperparams{}, static_cast<std::uint64_t>(s.seed));
}

Dataset source_data(const ModelSource& s, const ModelHyperparams& hp) {
  if (!s.data_path.empty()) return load_dataset(s.data_path);
  TaskConfig tc;
  tc.channels = hp.channels;
  tc.n_samples = std::max<std::size_t>(s.samples, s.index + 1);
  tc.seed = derive_seed(static_cast<std::uint64_t>(s.seed), "data");
  return generate_dataset(tc);
}

int run_gradflow(const ModelSource& s, const std::string& out) {
  const auto m = load_or_init(s);
  auto data = source_data(s, m.hp);
  check_dataset(data, m.hp, "gradflow");
  if (data.size() > s.samples) data.resize(s.samples);
  Vector acc;
  for (const auto& seq : data) {
    const auto prof = std::visit(
        [&](const auto& p) {
          auto fw = model_forward(seq, p, m.hp, true);
          return gradient_flow_profile(*fw.tape, seq.label, p, m.hp);
        },
        m.params);
    if (acc.empty()) acc.assign(prof.size(), 0.0);
    if (prof.size() != acc.size()) throw DataError("gradflow needs sequences of one horizon");
    for (std::size_t t = 0; t < prof.size(); ++t) acc[t] += prof[t] / static_cast<double>(data.size());
  }
  std::ostringstream os;
  os << "t,grad_magnitude\n";
  for (std::size_t t = 0; t < acc.size(); ++t) os << t << ',' << format_number(acc[t]) << '\n';
  write_text(out, os.str());
  std::printf("%s: mean |dL/d state| over %zu sequences, t = 0: %.4e, t = %zu: %.4e -> %s\n",
              std::string(to_string(m.kind)).c_str(), data.size(), acc.front(), acc.size() - 1, acc.back(),
              out.c_str());
  return 0;
}

int run_traces(const ModelSource& s, const std::string& traces_out, const std::string& warp_out) {
  const auto m = load_or_init(s);
  if (m.kind != ModelKind::cpsnn) throw ConfigError("traces needs a cpsnn model");
  const auto data = source_data(s, m.hp);
  if (s.index >= data.size()) throw DataError("sequence index out of range");
  diagnostics_dump(std::get<LayerParams>(m.params), m.hp, data[s.index], traces_out, warp_out);
  std::printf("wrote %s and %s\n", traces_out.c_str(), warp_out.c_str());
  return 0;
}

struct ScalingArgs {
  std::vector<std::size_t> horizons{1000, 10000, 100000};
  std::vector<std::size_t> hidden{64}, channels{8};
  std::int64_t seed = 7;
  std::string out;
};

int run_scaling(const ScalingArgs& a) {
  ScalingGrid g;
  g.horizons = a.horizons;
  g.hidden = a.hidden;
  g.channels = a.channels;
  g.seed = static_cast<std::uint64_t>(a.seed);
  const auto rows = scaling_probe(g);
  std::ostringstream os;
  os << "T,N,C,wall_seconds,state_bytes\n";
  for (const auto& r : rows) {
    os << r.T << ',' << r.N << ',' << r.C << ',' << format_number(r.wall_seconds) << ',' << r.state_bytes << '\n';
  }
  std::cout << os.str();
  if (!a.out.empty()) write_text(a.out, os.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spiking networks with time-warped slow traces: data, training and analysis"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "generate a long-gap temporal XOR dataset (JSONL)");
  gen_cmd->add_option("--channels", gen.task.channels, "input channels")->capture_default_str();
  gen_cmd->add_option("--horizon", gen.task.horizon, "sequence length T")->capture_default_str();
  gen_cmd->add_option("--gap-min", gen.task.gap_min)->capture_default_str();
  gen_cmd->add_option("--gap-max", gen.task.gap_max)->capture_default_str();
  gen_cmd->add_option("--rate", gen.task.distractor_rate, "distractor spike probability")->capture_default_str();
  gen_cmd->add_option("--n", gen.task.n_samples, "number of sequences")->capture_default_str();
  gen_cmd->add_option("--seed", gen.task.seed)->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "output path")->required();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train a model and write snapshot + metrics");
  train_cmd->add_option("--model", tr.model_kind, "cpsnn | snn | adaptive")
      ->check(CLI::IsMember({"cpsnn", "snn", "adaptive"}));
  train_cmd->add_option("--ablate", tr.ablate, "none | no-warp | no-slow | no-fast")
      ->check(CLI::IsMember({"none", "no-warp", "no-slow", "no-fast"}));
  train_cmd->add_option("--config", tr.config, "JSON run config")->check(CLI::ExistingFile);
  train_cmd->add_option("--train", tr.train_path, "training JSONL (generated from the task config if omitted)");
  train_cmd->add_option("--eval", tr.eval_path, "evaluation JSONL");
  train_cmd->add_option("--model-out", tr.model_out);
  train_cmd->add_option("--metrics-out", tr.metrics_out);
  train_cmd->add_option("--profile-out", tr.profile_out, "per-timestep gradient magnitude CSV");
  train_cmd->add_option("--epochs", tr.epochs);
  train_cmd->add_option("--seed", tr.seed, "training seed (init + shuffle)");
  train_cmd->add_option("--repeats", tr.repeats, "independent runs at seed, seed+1, ...");
  train_cmd->add_option("--threads", tr.threads, "per-batch worker threads (results are identical)");
  train_cmd->add_option("--dump-config", tr.dump_config, "write the effective config as JSON");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "accuracy and confusion counts of a saved model");
  eval_cmd->add_option("--model", ev.model_path, "model snapshot")->required();
  eval_cmd->add_option("--data", ev.data_path, "JSONL dataset")->required();
  eval_cmd->add_option("--out", ev.out, "JSON report");

  auto* an = app.add_subcommand("analyze", "kernel / retention / gradflow / scaling / traces");
  an->require_subcommand(1);

  KernelArgs ka;
  auto* k_cmd = an->add_subcommand("kernel", "kernel matrix of a warp schedule and its bounds");
  k_cmd->add_option("--omega-file", ka.omega_file, "omega_1..omega_T, one per line or comma separated")->required();
  k_cmd->add_option("--alpha-s", ka.alpha_s)->capture_default_str();
  k_cmd->add_option("--out", ka.out, "kernel CSV (t,k,kappa,fixed)");

  RetentionArgs ra;
  auto* r_cmd = an->add_subcommand("retention", "construct and verify a long-retention schedule");
  r_cmd->add_option("--alpha-s", ra.alpha_s)->capture_default_str();
  r_cmd->add_option("--L", ra.L, "lags over which the fixed kernel must be matched")->capture_default_str();
  r_cmd->add_option("--epsilon", ra.epsilon)->capture_default_str();
  r_cmd->add_option("--out", ra.out, "schedule CSV (lag,omega,kappa,fixed)");

  ModelSource gs;
  std::string gf_out = "gradflow.csv";
  auto* g_cmd = an->add_subcommand("gradflow", "mean per-timestep gradient magnitude");
  g_cmd->add_option("--model-file", gs.model_path, "snapshot (fresh init if omitted)");
  g_cmd->add_option("--model", gs.model_kind, "kind for a fresh init")->check(CLI::IsMember({"cpsnn", "snn", "adaptive"}));
  g_cmd->add_option("--data", gs.data_path);
  g_cmd->add_option("--samples", gs.samples)->capture_default_str();
  g_cmd->add_option("--seed", gs.seed);
  g_cmd->add_option("--out", gf_out)->capture_default_str();

  ScalingArgs sa;
  auto* s_cmd = an->add_subcommand("scaling", "streaming wall time and state size against horizon");
  s_cmd->add_option("--horizons", sa.horizons)->delimiter(',')->capture_default_str();
  s_cmd->add_option("--hidden", sa.hidden)->delimiter(',')->capture_default_str();
  s_cmd->add_option("--channels", sa.channels)->delimiter(',')->capture_default_str();
  s_cmd->add_option("--seed", sa.seed);
  s_cmd->add_option("--out", sa.out);

  ModelSource ts;
  std::string traces_out = "traces.csv", warp_out = "warp.csv";
  auto* t_cmd = an->add_subcommand("traces", "fast/slow traces and warp factors for one sequence");
  t_cmd->add_option("--model-file", ts.model_path, "cpsnn snapshot (fresh init if omitted)");
  t_cmd->add_option("--data", ts.data_path);
  t_cmd->add_option("--index", ts.index, "sequence index")->capture_default_str();
  t_cmd->add_option("--seed", ts.seed);
  t_cmd->add_option("--traces-out", traces_out)->capture_default_str();
  t_cmd->add_option("--warp-out", warp_out)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen_cmd) return run_gen(gen);
    if (*train_cmd) return run_train(tr);
    if (*eval_cmd) return run_eval(ev);
    if (*k_cmd) return run_kernel(ka);
    if (*r_cmd) return run_retention(ra);
    if (*g_cmd) return run_gradflow(gs, gf_out);
    if (*s_cmd) return run_scaling(sa);
    if (*t_cmd) return run_traces(ts, traces_out, warp_out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const InvariantError& e) {
    std::cerr << "invariant violated: " << e.what() << '\n';
    return kExitInvariant;
  } catch (const std::exception& e) {
    // DataError, NumericError, I/O
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
