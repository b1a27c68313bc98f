#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "cpsnn/cpsnn.hpp"

using namespace cpsnn;

TEST(Config, DefaultsMatchPublishedValues) {
  const RunConfig rc;
  EXPECT_EQ(rc.model.alpha_f, 0.9);
  EXPECT_EQ(rc.model.alpha_s, 0.995);
  EXPECT_EQ(rc.model.lambda_f, 0.5);
  EXPECT_EQ(rc.model.lambda_s, 0.5);
  EXPECT_EQ(rc.training.learning_rate, 1e-2);
  EXPECT_EQ(rc.training.clip_norm, 1.0);
  EXPECT_EQ(rc.repeats, 3u);
}

TEST(Config, RoundTrip) {
  RunConfig rc;
  rc.model_kind = ModelKind::snn_adaptive;
  rc.ablation = Ablation::no_fast;
  rc.model.hidden = 17;
  rc.model.omega_min = 0.1;
  rc.model.unscaled_input = true;
  rc.training.epochs = 7;
  rc.training.seed = 99;
  rc.training.train_mixing = true;
  rc.task.gap_min = 40;
  rc.task.distractor_rate = 0.01;
  rc.outputs.metrics = "out/m.csv";
  rc.repeats = 5;
  const auto j = to_json(rc);
  const auto back = run_config_from_json(json::parse(j.dump()));
  EXPECT_EQ(to_json(back).dump(), j.dump());
}

TEST(Config, UnknownKeysRejected) {
  EXPECT_THROW(run_config_from_json(json::parse(R"({"modle":{}})")), ConfigError);
  EXPECT_THROW(run_config_from_json(json::parse(R"({"model":{"alpha":0.9}})")), ConfigError);
  EXPECT_THROW(run_config_from_json(json::parse(R"({"training":{"lr":0.1}})")), ConfigError);
  EXPECT_THROW(run_config_from_json(json::parse(R"({"task":{"gap":3}})")), ConfigError);
  EXPECT_THROW(run_config_from_json(json::parse(R"({"outputs":{"log":"x"}})")), ConfigError);
}

TEST(Config, PartialDocumentKeepsDefaults) {
  const auto rc = run_config_from_json(json::parse(R"({"model_kind":"snn","training":{"epochs":3}})"));
  EXPECT_EQ(rc.model_kind, ModelKind::snn_fixed);
  EXPECT_EQ(rc.training.epochs, 3u);
  EXPECT_EQ(rc.training.batch_size, 32u);
  EXPECT_EQ(rc.model.hidden, 64u);
}

TEST(Config, BadValuesRejected) {
  EXPECT_THROW(run_config_from_json(json::parse(R"({"model_kind":"lstm"})")), ConfigError);
  EXPECT_THROW(run_config_from_json(json::parse(R"({"ablation":"no-everything"})")), ConfigError);
  EXPECT_ANY_THROW(run_config_from_json(json::parse(R"({"training":{"epochs":"many"}})")));
}

TEST(Snapshot, RoundTripAllKinds) {
  ModelHyperparams hp;
  hp.hidden = 5;
  hp.omega_min = 0.05;
  for (auto kind : {ModelKind::cpsnn, ModelKind::snn_fixed, ModelKind::snn_adaptive}) {
    const auto m = init_model(kind, hp, 3);
    const auto back = model_from_json(json::parse(model_to_json(m).dump()));
    EXPECT_EQ(back.kind, kind);
    EXPECT_EQ(back.params, m.params);
    EXPECT_EQ(to_json(back.hp).dump(), to_json(m.hp).dump());
  }
}

TEST(Snapshot, VersionMismatchIsExplicit) {
  auto j = model_to_json(init_model(ModelKind::cpsnn, ModelHyperparams{}, 0));
  j["version"] = 2;
  try {
    model_from_json(j);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
}

TEST(Snapshot, ShapeMismatchRejected) {
  auto j = model_to_json(init_model(ModelKind::snn_fixed, ModelHyperparams{}, 0));
  j["tensors"]["W"]["shape"] = {3, 3};
  EXPECT_THROW(model_from_json(j), DataError);
  auto k = model_to_json(init_model(ModelKind::snn_fixed, ModelHyperparams{}, 0));
  k["tensors"].erase("W_out");
  EXPECT_THROW(model_from_json(k), DataError);
}

TEST(Snapshot, FileRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "cpsnn_tests";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "model.json").string();
  const auto m = init_model(ModelKind::cpsnn, ModelHyperparams{}, 8);
  save_model(m, path);
  EXPECT_EQ(load_model(path).params, m.params);
  EXPECT_THROW(load_model((dir / "missing.json").string()), DataError);
}

TEST(Metrics, CsvSchema) {
  TrainingHistory h;
  EpochMetrics e;
  e.epoch = 1;
  e.train_loss = 0.5;
  e.eval_loss = 0.6;
  e.train_accuracy = 0.75;
  e.eval_accuracy = 0.7;
  e.grad_norm = 0.1;
  e.train_mean_omega = 1.0;
  e.eval_mean_omega = 1.0;
  e.grad_profile = {0.25, 0.5};
  h.epochs = {e, e};
  h.epochs[1].epoch = 2;
  std::istringstream is(metrics_csv(h));
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(is, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 5u);
  EXPECT_EQ(lines[0], "epoch,split,loss,accuracy,grad_norm,mean_omega");
  EXPECT_EQ(lines[1], "1,train,0.5,0.75,0.10000000000000001,1");
  EXPECT_EQ(lines[2], "1,eval,0.59999999999999998,0.69999999999999996,nan,1");
  EXPECT_EQ(grad_profile_csv(h), "epoch,t,grad_magnitude\n1,0,0.25\n1,1,0.5\n2,0,0.25\n2,1,0.5\n");
}
