// Copyright 2026 The fsqz Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "fsqz/nn.hpp"
#include "test_util.hpp"

namespace fsqz {
namespace {

using testing::random_batch;
using testing::random_labels;
using testing::random_state;

ModelSpec spec_of(std::vector<std::size_t> sizes, std::uint64_t seed = 1) {
  ModelSpec s;
  s.layer_sizes = std::move(sizes);
  s.seed = seed;
  return s;
}

TEST(Init, SingleLayerShapeAndZeroBias) {
  const ModelSpec spec = spec_of({4, 3}, 7);
  const ModelState m = init_model(spec);
  EXPECT_EQ(m.param_count(), 15u);
  EXPECT_EQ(spec.param_count(), 15u);
  ASSERT_EQ(m.layers.size(), 1u);
  EXPECT_EQ(m.layers[0].weight.rows, 3u);
  EXPECT_EQ(m.layers[0].weight.cols, 4u);
  for (float b : m.layers[0].bias) EXPECT_EQ(b, 0.0f);
}

TEST(Init, DeterministicPerSeed) {
  EXPECT_EQ(init_model(spec_of({8, 16, 4}, 11)), init_model(spec_of({8, 16, 4}, 11)));
  EXPECT_NE(init_model(spec_of({8, 16, 4}, 11)), init_model(spec_of({8, 16, 4}, 12)));
}

TEST(Init, HeVariance) {
  const ModelState m = init_model(spec_of({200, 100, 10}, 5));
  for (const auto& l : m.layers) {
    double ss = 0.0;
    for (float w : l.weight.data) ss += static_cast<double>(w) * w;
    const double var = ss / static_cast<double>(l.weight.data.size());
    const double want = 2.0 / static_cast<double>(l.weight.cols);
    EXPECT_GT(var, want / 3.0);
    EXPECT_LT(var, want * 3.0);
  }
}

TEST(Spec, ValidateRejectsDegenerate) {
  EXPECT_THROW(spec_of({4}).validate(), ConfigError);
  EXPECT_THROW(spec_of({4, 0, 3}).validate(), ConfigError);
  EXPECT_NO_THROW(spec_of({4, 3}).validate());
}

TEST(Forward, ZeroModelGivesZeroLogits) {
  const ModelSpec spec = spec_of({5, 7, 3});
  const ModelState m = zeros_like_spec<float>(spec);
  const Matrix<float> logits = forward(m, random_batch(4, 5, 1));
  for (float v : logits.data) EXPECT_EQ(v, 0.0f);
}

TEST(Forward, IdentityLayer) {
  const ModelSpec spec = spec_of({3, 3});
  ModelState m = zeros_like_spec<float>(spec);
  for (std::size_t i = 0; i < 3; ++i) m.layers[0].weight(i, i) = 1.0f;
  const Matrix<float> x = random_batch(5, 3, 2);
  EXPECT_EQ(forward(m, x).data, x.data);
}

TEST(Forward, MatchesStraightLineOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const ModelSpec spec = spec_of({6, 9, 5, 4});
    const ModelState m = random_state(spec, seed);
    const Matrix<float> x = random_batch(7, 6, seed + 100);
    const auto flat = flatten(m);
    const std::vector<double> p(flat.begin(), flat.end());
    const testing::ShadowNet net{spec.layer_sizes};
    const Matrix<float> logits = forward(m, x);
    for (std::size_t r = 0; r < x.rows; ++r) {
      const auto want = net.logits(p, x.row(r));
      for (std::size_t c = 0; c < want.size(); ++c) EXPECT_EQ(logits(r, c), static_cast<float>(want[c]));
    }
  }
}

TEST(Forward, ShapeMismatchThrows) {
  const ModelState m = init_model(spec_of({4, 3}));
  EXPECT_THROW(forward(m, random_batch(2, 5, 1)), ShapeError);
}

TEST(Loss, UniformLogitsGiveLogC) {
  const ModelSpec spec = spec_of({4, 10});
  const ModelState m = zeros_like_spec<float>(spec);
  const auto x = random_batch(8, 4, 3);
  const auto y = random_labels(8, 10, 4);
  EXPECT_NEAR(loss_and_grad(m, x, y).loss, std::log(10.0), 1e-12);
  EXPECT_NEAR(mean_loss(m, x, y), std::log(10.0), 1e-12);
}

TEST(Loss, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const ModelSpec spec = spec_of({5, 8, 4});
    const ModelState m = random_state(spec, seed);
    const auto x = random_batch(6, 5, seed + 1000);
    const auto y = random_labels(6, 4, seed + 2000);
    const auto lg = loss_and_grad(m, x, y);
    const auto fd = testing::finite_difference(spec, flatten(m), x, y);
    const auto analytic = flatten(lg.grad);
    EXPECT_LT(testing::gradient_relative_error(spec, analytic, fd), 1e-4) << "seed " << seed;
  }
}

TEST(Loss, MeanLossAgreesWithLossAndGrad) {
  const ModelSpec spec = spec_of({5, 8, 4});
  const ModelState m = random_state(spec, 9);
  const auto x = random_batch(6, 5, 10);
  const auto y = random_labels(6, 4, 11);
  EXPECT_EQ(mean_loss(m, x, y), loss_and_grad(m, x, y).loss);
}

TEST(Loss, DuplicatedBatchLeavesMeanUnchanged) {
  const ModelSpec spec = spec_of({5, 8, 4});
  const ModelState m = random_state(spec, 21);
  const auto x = random_batch(6, 5, 22);
  const auto y = random_labels(6, 4, 23);
  Matrix<float> x2(12, 5);
  std::vector<int> y2(12);
  for (std::size_t r = 0; r < 12; ++r) {
    std::copy(x.row(r % 6).begin(), x.row(r % 6).end(), x2.row(r).begin());
    y2[r] = y[r % 6];
  }
  const auto a = loss_and_grad(m, x, y);
  const auto b = loss_and_grad(m, x2, y2);
  EXPECT_NEAR(a.loss, b.loss, 1e-12);
  const auto ga = flatten(a.grad);
  const auto gb = flatten(b.grad);
  for (std::size_t i = 0; i < ga.size(); ++i) EXPECT_NEAR(ga[i], gb[i], 1e-12);
}

TEST(Loss, RejectsBadInput) {
  const ModelState m = init_model(spec_of({4, 3}));
  const std::vector<int> none;
  EXPECT_THROW(loss_and_grad(m, Matrix<float>(0, 4), none), DataError);
  const std::vector<int> bad{3};
  EXPECT_THROW(loss_and_grad(m, random_batch(1, 4, 1), bad), DataError);
  const std::vector<int> neg{-1};
  EXPECT_THROW(loss_and_grad(m, random_batch(1, 4, 1), neg), DataError);
  const std::vector<int> two{0, 1};
  EXPECT_THROW(loss_and_grad(m, random_batch(1, 4, 1), two), ShapeError);
}

ModelState scalar_model(float w) {
  ModelState m = zeros_like_spec<float>(spec_of({1, 1}));
  m.layers[0].weight(0, 0) = w;
  return m;
}

Gradient scalar_grad(double g) {
  Gradient grad = zeros_like_spec<double>(spec_of({1, 1}));
  grad.layers[0].weight(0, 0) = g;
  return grad;
}

TEST(Sgd, PlainStep) {
  ModelState m = scalar_model(1.0f);
  auto opt = OptimizerState::fresh(0.1, 0.0, 2);
  sgd_step(m, opt, scalar_grad(2.0));
  EXPECT_FLOAT_EQ(m.layers[0].weight(0, 0), 0.8f);
}

TEST(Sgd, MomentumTwoSteps) {
  ModelState m = scalar_model(0.0f);
  auto opt = OptimizerState::fresh(1.0, 0.9, 2);
  sgd_step(m, opt, scalar_grad(1.0));
  EXPECT_FLOAT_EQ(m.layers[0].weight(0, 0), -1.0f);
  sgd_step(m, opt, scalar_grad(1.0));
  EXPECT_DOUBLE_EQ(opt.velocity[0], 1.9);
  EXPECT_FLOAT_EQ(m.layers[0].weight(0, 0), -2.9f);
}

TEST(Sgd, ZeroGradientDecaysVelocity) {
  ModelState m = scalar_model(0.0f);
  auto opt = OptimizerState::fresh(1.0, 0.5, 2);
  opt.velocity[0] = 1.0;
  sgd_step(m, opt, scalar_grad(0.0));
  EXPECT_DOUBLE_EQ(opt.velocity[0], 0.5);
  EXPECT_FLOAT_EQ(m.layers[0].weight(0, 0), -0.5f);
}

TEST(Sgd, NonFiniteGradientIsRefusedWithoutSideEffects) {
  for (double bad : {NAN, INFINITY, -INFINITY}) {
    ModelState m = scalar_model(1.0f);
    auto opt = OptimizerState::fresh(0.1, 0.9, 2);
    Gradient g = scalar_grad(1.0);
    g.layers[0].bias[0] = bad;
    EXPECT_THROW(sgd_step(m, opt, g), NumericError);
    EXPECT_EQ(m.layers[0].weight(0, 0), 1.0f);
    EXPECT_EQ(opt.velocity[0], 0.0);
  }
}

TEST(Sgd, FreshRejectsBadHyperparameters) {
  EXPECT_THROW(OptimizerState::fresh(-0.1, 0.0, 1), ConfigError);
  EXPECT_THROW(OptimizerState::fresh(0.1, 1.0, 1), ConfigError);
}

TEST(Flatten, LengthAndOrder) {
  const ModelSpec spec = spec_of({1, 2});
  ModelState m = zeros_like_spec<float>(spec);
  m.layers[0].weight(0, 0) = 1;
  m.layers[0].weight(1, 0) = 2;
  m.layers[0].bias = {3, 4};
  EXPECT_EQ(flatten(m), (ParamVector{1, 2, 3, 4}));
}

TEST(Flatten, RoundTripOverRandomSpecs) {
  Rng rng(77);
  for (int t = 0; t < 100; ++t) {
    std::vector<std::size_t> sizes(2 + rng() % 3);
    for (auto& s : sizes) s = 1 + rng() % 9;
    const ModelSpec spec = spec_of(sizes);
    const ModelState m = random_state(spec, rng());
    const ParamVector flat = flatten(m);
    ASSERT_EQ(flat.size(), spec.param_count());
    EXPECT_EQ(unflatten(spec, flat), m);
  }
}

TEST(Flatten, LengthMismatchThrows) {
  const ModelSpec spec = spec_of({2, 2});
  EXPECT_THROW(unflatten(spec, ParamVector(5)), ShapeError);
  EXPECT_THROW(unflatten(spec, ParamVector(7)), ShapeError);
}

TEST(Predict, TiesGoToLowestClass) {
  const ModelState m = zeros_like_spec<float>(spec_of({2, 4}));
  for (int p : predict(m, random_batch(5, 2, 1))) EXPECT_EQ(p, 0);
}

TEST(Training, LossDecreasesOnSeparableData) {
  // Two well separated Gaussian clusters, full-batch gradient descent.
  const ModelSpec spec = spec_of({2, 8, 2}, 3);
  Matrix<float> x(40, 2);
  std::vector<int> y(40);
  Rng rng(4);
  for (std::size_t r = 0; r < 40; ++r) {
    y[r] = static_cast<int>(r % 2);
    x(r, 0) = static_cast<float>((y[r] ? 2.0 : -2.0) + 0.3 * standard_normal(rng));
    x(r, 1) = static_cast<float>((y[r] ? -1.0 : 1.0) + 0.3 * standard_normal(rng));
  }
  ModelState m = init_model(spec);
  auto opt = OptimizerState::fresh(0.05, 0.0, m.param_count());
  std::vector<double> losses;
  for (int step = 0; step < 50; ++step) {
    const auto lg = loss_and_grad(m, x, y);
    losses.push_back(lg.loss);
    sgd_step(m, opt, lg.grad);
  }
  std::vector<double> smooth;
  for (std::size_t i = 0; i + 5 <= losses.size(); ++i)
    smooth.push_back(std::accumulate(losses.begin() + i, losses.begin() + i + 5, 0.0) / 5.0);
  for (std::size_t i = 1; i < smooth.size(); ++i) EXPECT_LE(smooth[i], smooth[i - 1]);
  EXPECT_LT(losses.back(), losses.front());
}

}  // namespace
}  // namespace fsqz
