#pragma once

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <variant>

#include <json.hpp>

#include "cpsnn/analysis.hpp"
#include "cpsnn/hyperparams.hpp"
#include "cpsnn/tasks.hpp"
#include "cpsnn/train.hpp"

namespace cpsnn {

using json = nlohmann::ordered_json;

inline constexpr int kModelFormatVersion = 1;

// ---------------------------------------------------------------------------
// Config sections. Every reader rejects keys it does not know.

inline void reject_unknown_keys(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  std::set<std::string> ok(known.begin(), known.end());
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!ok.count(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
  }
}

template <class T>
void read_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline json to_json(const ModelHyperparams& hp) {
  return {{"alpha_m", hp.alpha_m},
          {"alpha_f", hp.alpha_f},
          {"alpha_s", hp.alpha_s},
          {"lambda_f", hp.lambda_f},
          {"lambda_s", hp.lambda_s},
          {"theta", hp.theta},
          {"surrogate_width", hp.surrogate_width},
          {"channels", hp.channels},
          {"hidden", hp.hidden},
          {"classes", hp.classes},
          {"ablation", std::string(to_string(hp.ablation))},
          {"omega_min", hp.omega_min},
          {"detach_reset", hp.detach_reset},
          {"unscaled_input", hp.unscaled_input},
          {"init_gain", hp.init_gain},
          {"readout_gain", hp.readout_gain}};
}

inline ModelHyperparams hyperparams_from_json(const json& j) {
  reject_unknown_keys(j,
                      {"alpha_m", "alpha_f", "alpha_s", "lambda_f", "lambda_s", "theta", "surrogate_width",
                       "channels", "hidden", "classes", "ablation", "omega_min", "detach_reset", "unscaled_input",
                       "init_gain", "readout_gain"},
                      "model");
  ModelHyperparams hp;
  read_if(j, "alpha_m", hp.alpha_m);
  read_if(j, "alpha_f", hp.alpha_f);
  read_if(j, "alpha_s", hp.alpha_s);
  read_if(j, "lambda_f", hp.lambda_f);
  read_if(j, "lambda_s", hp.lambda_s);
  read_if(j, "theta", hp.theta);
  read_if(j, "surrogate_width", hp.surrogate_width);
  read_if(j, "channels", hp.channels);
  read_if(j, "hidden", hp.hidden);
  read_if(j, "classes", hp.classes);
  if (j.contains("ablation")) hp.ablation = parse_ablation(j["ablation"].get<std::string>());
  read_if(j, "omega_min", hp.omega_min);
  read_if(j, "detach_reset", hp.detach_reset);
  read_if(j, "unscaled_input", hp.unscaled_input);
  read_if(j, "init_gain", hp.init_gain);
  read_if(j, "readout_gain", hp.readout_gain);
  return hp;
}

inline json to_json(const TrainingConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"beta1", c.beta1},           {"beta2", c.beta2},
          {"epsilon", c.epsilon},             {"clip_norm", c.clip_norm},   {"epochs", c.epochs},
          {"batch_size", c.batch_size},       {"seed", c.seed},             {"train_mixing", c.train_mixing},
          {"threads", c.threads},             {"profile_samples", c.profile_samples}};
}

inline TrainingConfig training_from_json(const json& j) {
  reject_unknown_keys(j,
                      {"learning_rate", "beta1", "beta2", "epsilon", "clip_norm", "epochs", "batch_size", "seed",
                       "train_mixing", "threads", "profile_samples"},
                      "training");
  TrainingConfig c;
  read_if(j, "learning_rate", c.learning_rate);
  read_if(j, "beta1", c.beta1);
  read_if(j, "beta2", c.beta2);
  read_if(j, "epsilon", c.epsilon);
  read_if(j, "clip_norm", c.clip_norm);
  read_if(j, "epochs", c.epochs);
  read_if(j, "batch_size", c.batch_size);
  read_if(j, "seed", c.seed);
  read_if(j, "train_mixing", c.train_mixing);
  read_if(j, "threads", c.threads);
  read_if(j, "profile_samples", c.profile_samples);
  return c;
}

inline json to_json(const TaskConfig& c) {
  return {{"channels", c.channels},   {"horizon", c.horizon},
          {"gap_min", c.gap_min},     {"gap_max", c.gap_max},
          {"distractor_rate", c.distractor_rate}, {"n_samples", c.n_samples},
          {"eval_samples", c.eval_samples}, {"seed", c.seed}};
}

inline TaskConfig task_from_json(const json& j) {
  reject_unknown_keys(j, {"channels", "horizon", "gap_min", "gap_max", "distractor_rate", "n_samples", "eval_samples", "seed"},
                      "task");
  TaskConfig c;
  read_if(j, "channels", c.channels);
  read_if(j, "horizon", c.horizon);
  read_if(j, "gap_min", c.gap_min);
  read_if(j, "gap_max", c.gap_max);
  read_if(j, "distractor_rate", c.distractor_rate);
  read_if(j, "n_samples", c.n_samples);
  read_if(j, "eval_samples", c.eval_samples);
  read_if(j, "seed", c.seed);
  return c;
}

struct OutputPaths {
  std::string model = "model.json";
  std::string metrics = "metrics.csv";
  std::string grad_profile = "gradprofile.csv";
};

/// Complete, JSON-round-trippable description of a run.
struct RunConfig {
  ModelKind model_kind = ModelKind::cpsnn;
  Ablation ablation = Ablation::full;
  ModelHyperparams model;
  TrainingConfig training;
  TaskConfig task;
  OutputPaths outputs;
  std::size_t repeats = 3;
};

inline json to_json(const RunConfig& rc) {
  return {{"model_kind", std::string(to_string(rc.model_kind))},
          {"ablation", std::string(to_string(rc.ablation))},
          {"repeats", rc.repeats},
          {"model", to_json(rc.model)},
          {"training", to_json(rc.training)},
          {"task", to_json(rc.task)},
          {"outputs",
           {{"model", rc.outputs.model}, {"metrics", rc.outputs.metrics}, {"grad_profile", rc.outputs.grad_profile}}}};
}

inline RunConfig run_config_from_json(const json& j) {
  reject_unknown_keys(j, {"model_kind", "ablation", "repeats", "model", "training", "task", "outputs"}, "config");
  RunConfig rc;
  if (j.contains("model_kind")) rc.model_kind = parse_model_kind(j["model_kind"].get<std::string>());
  if (j.contains("ablation")) rc.ablation = parse_ablation(j["ablation"].get<std::string>());
  read_if(j, "repeats", rc.repeats);
  if (j.contains("model")) rc.model = hyperparams_from_json(j["model"]);
  if (j.contains("training")) rc.training = training_from_json(j["training"]);
  if (j.contains("task")) rc.task = task_from_json(j["task"]);
  if (j.contains("outputs")) {
    const auto& o = j["outputs"];
    reject_unknown_keys(o, {"model", "metrics", "grad_profile"}, "outputs");
    read_if(o, "model", rc.outputs.model);
    read_if(o, "metrics", rc.outputs.metrics);
    read_if(o, "grad_profile", rc.outputs.grad_profile);
  }
  return rc;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open config '" + path + "'");
  try {
    return run_config_from_json(json::parse(is));
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Model snapshot: {"format":"cpsnn-model","version":1,"kind":..,"hyperparams":{..},
//                  "tensors":{"W":{"shape":[r,c],"data":[..]},..}}

inline json model_to_json(const TrainedModel& m) {
  json tensors = json::object();
  std::visit(
      [&](const auto& p) {
        for_each_tensor(p, [&](const char* name, const Tensor& t) {
          tensors[name] = {{"shape", {t.rows, t.cols}}, {"data", t.data}};
        });
      },
      m.params);
  return {{"format", "cpsnn-model"},
          {"version", kModelFormatVersion},
          {"kind", std::string(to_string(m.kind))},
          {"hyperparams", to_json(m.hp)},
          {"tensors", tensors}};
}

inline TrainedModel model_from_json(const json& j) {
  if (j.value("format", std::string()) != "cpsnn-model") throw DataError("not a cpsnn model snapshot");
  const int version = j.value("version", -1);
  if (version != kModelFormatVersion) {
    throw DataError("model snapshot format version " + std::to_string(version) + " is not supported (expected " +
                    std::to_string(kModelFormatVersion) + ")");
  }
  TrainedModel m;
  m.kind = parse_model_kind(j.at("kind").get<std::string>());
  m.hp = hyperparams_from_json(j.at("hyperparams"));
  m.hp.validate();
  switch (m.kind) {
    case ModelKind::cpsnn: m.params = LayerParams::zeros(m.hp); break;
    case ModelKind::snn_fixed: m.params = FixedSnnParams::zeros(m.hp); break;
    case ModelKind::snn_adaptive: m.params = AdaptiveSnnParams::zeros(m.hp); break;
  }
  const auto& tensors = j.at("tensors");
  std::visit(
      [&](auto& p) {
        for_each_tensor(p, [&](const char* name, Tensor& t) {
          if (!tensors.contains(name)) throw DataError(std::string("model snapshot is missing tensor '") + name + "'");
          const auto& e = tensors[name];
          const auto shape = e.at("shape").get<std::vector<std::size_t>>();
          if (shape.size() != 2 || shape[0] != t.rows || shape[1] != t.cols) {
            throw DataError(std::string("tensor '") + name + "' has a shape inconsistent with the hyperparameters");
          }
          auto data = e.at("data").get<Vector>();
          if (data.size() != t.size()) throw DataError(std::string("tensor '") + name + "' has the wrong element count");
          t.data = std::move(data);
        });
      },
      m.params);
  return m;
}

inline void save_model(const TrainedModel& m, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open '" + path + "' for writing");
  os << model_to_json(m).dump(1) << '\n';
}

inline TrainedModel load_model(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open model '" + path + "'");
  try {
    return model_from_json(json::parse(is));
  } catch (const json::exception& e) {
    throw DataError("model '" + path + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Metrics CSVs

inline std::string metrics_csv(const TrainingHistory& h) {
  std::ostringstream os;
  os << "epoch,split,loss,accuracy,grad_norm,mean_omega\n";
  for (const auto& e : h.epochs) {
    os << e.epoch << ",train," << format_number(e.train_loss) << ',' << format_number(e.train_accuracy) << ','
       << format_number(e.grad_norm) << ',' << format_number(e.train_mean_omega) << '\n';
    os << e.epoch << ",eval," << format_number(e.eval_loss) << ',' << format_number(e.eval_accuracy) << ",nan,"
       << format_number(e.eval_mean_omega) << '\n';
  }
  return os.str();
}

inline std::string grad_profile_csv(const TrainingHistory& h) {
  std::ostringstream os;
  os << "epoch,t,grad_magnitude\n";
  for (const auto& e : h.epochs) {
    for (std::size_t t = 0; t < e.grad_profile.size(); ++t) {
      os << e.epoch << ',' << t << ',' << format_number(e.grad_profile[t]) << '\n';
    }
  }
  return os.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open '" + path + "' for writing");
  os << text;
  if (!os) throw DataError("write to '" + path + "' failed");
}

}  // namespace cpsnn
