#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cpsnn/cpsnn.hpp"

using namespace cpsnn;

namespace {

// Single-tensor parameter pack for exercising the generic helpers.
struct Scalar {
  Tensor x = Tensor::vector(1);
};

template <class P, class F>
  requires std::same_as<std::remove_const_t<P>, Scalar>
void for_each_tensor(P& p, F&& f) {
  f("x", p.x);
}

Scalar scalar(double v) {
  Scalar s;
  s.x[0] = v;
  return s;
}

}  // namespace

TEST(Clip, BelowThresholdUnchanged) {
  ModelHyperparams hp;
  hp.channels = 2;
  hp.hidden = 2;
  auto g = LayerParams::zeros(hp);
  g.W(0, 0) = 0.3;
  g.W(1, 1) = 0.4;  // norm 0.5
  const auto c = clip_gradients(g, 1.0);
  EXPECT_EQ(c.W, g.W);
}

TEST(Clip, ScalesSingleTensor) { EXPECT_DOUBLE_EQ(clip_gradients(scalar(2.0), 1.0).x[0], 1.0); }

TEST(Clip, RandomGradientsEndAtOrBelowThreshold) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 5.0);
  ModelHyperparams hp;
  for (int rep = 0; rep < 20; ++rep) {
    auto g = LayerParams::zeros(hp);
    for_each_tensor(g, [&](const char*, Tensor& t) {
      for (double& x : t.data) x = n(rng);
    });
    const auto c = clip_gradients(g, 1.0);
    EXPECT_LE(global_norm(c), 1.0 + 1e-12);
    // clipping twice changes nothing
    const auto cc = clip_gradients(c, 1.0);
    for_each_tensor(cc, [&](const char* name, const Tensor& t) {
      std::string s = name;
      Tensor ref;
      for_each_tensor(c, [&](const char* nm, const Tensor& u) {
        if (s == nm) ref = u;
      });
      for (std::size_t k = 0; k < t.size(); ++k) EXPECT_NEAR(t.data[k], ref.data[k], 1e-15);
    });
  }
}

TEST(Adam, FirstStepMagnitudeIsLearningRate) {
  for (double g : {0.3, -7.0, 1e-3}) {
    auto p = scalar(1.0);
    auto st = AdamState<Scalar>::zeros_like(p);
    adam_step(p, scalar(g), st, AdamConfig{}, 1);
    EXPECT_NEAR(std::abs(p.x[0] - 1.0), 1e-2, 1e-6) << g;
    EXPECT_EQ(p.x[0] < 1.0, g > 0.0);
  }
}

TEST(Adam, ZeroGradientLeavesParams) {
  auto p = scalar(0.25);
  auto st = AdamState<Scalar>::zeros_like(p);
  for (std::size_t k = 1; k <= 10; ++k) adam_step(p, scalar(0.0), st, AdamConfig{}, k);
  EXPECT_EQ(p.x[0], 0.25);
}

TEST(Adam, ConstantGradientSteps) {
  // Both bias-corrected updates equal lr * g / (|g| + eps) = 0.0099999996666666778 for g = 0.3.
  auto p = scalar(0.0);
  auto st = AdamState<Scalar>::zeros_like(p);
  adam_step(p, scalar(0.3), st, AdamConfig{}, 1);
  const double first = -p.x[0];
  adam_step(p, scalar(0.3), st, AdamConfig{}, 2);
  const double second = -p.x[0] - first;
  EXPECT_NEAR(first, 0.0099999996666666778, 1e-15);
  EXPECT_NEAR(second, 0.0099999996666666778, 1e-15);
  EXPECT_LE(second, first + 1e-9);
}

TEST(Adam, StepZeroRejected) {
  auto p = scalar(0.0);
  auto st = AdamState<Scalar>::zeros_like(p);
  EXPECT_THROW(adam_step(p, scalar(1.0), st, AdamConfig{}, 0), ContractError);
}

TEST(Params, CountsMatchShapes) {
  ModelHyperparams hp;  // C = 8, H = 64
  EXPECT_EQ(parameter_count(LayerParams::zeros(hp)), 64u * 8 + 8 * 16 + 8 + 2 * 64 + 2 + 2);
  EXPECT_EQ(parameter_count(FixedSnnParams::zeros(hp)), 64u * 8 + 2 * 64 + 2);
  EXPECT_EQ(parameter_count(AdaptiveSnnParams::zeros(hp)), 64u * 8 + 64 * 8 + 64 + 2 * 64 + 2);
}
