/*
 *  Copyright 2026 The slacast Authors
 *
 *  Licensed under the Apache License, Version 2.0 (the "License");
 *  you may not use this file except in compliance with the License.
 *  You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 *  Unless required by applicable law or agreed to in writing, software
 *  distributed under the License is distributed on an "AS IS" BASIS,
 *  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 *  See the License for the specific language governing permissions and
 *  limitations under the License.
 */

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "slacast/layers.hpp"
#include "support/gradcheck.hpp"

namespace slacast {
namespace {

using ag::Var;
using namespace layers;
using testing::check_gradients;
using testing::random_tensor;
using testing::weighted_sum;

constexpr double kTolerance = 1e-4;

TEST(Dense, HandComputed) {
  Var x = Var::constant(Tensor(Shape{2}, {1.0, 2.0}));
  Var w = Var::constant(Tensor(Shape{2, 3}, {1, 0, -1, 2, 1, 0.5}));
  Var b = Var::constant(Tensor(Shape{3}, {0.5, 0, -1}));
  const Tensor y = dense(x, w, b).value();
  EXPECT_EQ(y, Tensor(Shape{3}, {5.5, 2.0, -1.0}));
}

TEST(Dense, RejectsMismatch) {
  Var x = Var::constant(Tensor(Shape{3}));
  Var w = Var::constant(Tensor(Shape{2, 3}));
  Var b = Var::constant(Tensor(Shape{3}));
  EXPECT_THROW(dense(x, w, b), std::invalid_argument);
}

TEST(BatchNorm, ConstantFieldMapsToBeta) {
  Tensor x(Shape{2, 3, 3});
  for (std::size_t i = 0; i < 9; ++i) {
    x[i] = 4.0;
    x[9 + i] = -1.5;
  }
  Var gamma = Var::constant(Tensor(Shape{2}, {2.0, 3.0}));
  Var beta = Var::constant(Tensor(Shape{2}, {0.25, -0.75}));
  const BatchStats s = batch_statistics(std::span<const Tensor>(&x, 1));
  const Tensor y = batchnorm(Var::constant(x), gamma, beta, s).value();
  for (std::size_t i = 0; i < 9; ++i) {
    EXPECT_DOUBLE_EQ(y[i], 0.25);
    EXPECT_DOUBLE_EQ(y[9 + i], -0.75);
  }
}

TEST(BatchNorm, UnitStatisticsDivideBySqrtOnePlusEpsilon) {
  Rng rng(2);
  const Tensor x = random_tensor({1, 4, 4}, rng);
  BatchStats s{Tensor(Shape{1}, 0.0), Tensor(Shape{1}, 1.0)};
  Var one = Var::constant(Tensor(Shape{1}, 1.0));
  Var zero = Var::constant(Tensor(Shape{1}, 0.0));
  const Tensor y = batchnorm(Var::constant(x), one, zero, s).value();
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_NEAR(y[i], x[i] / std::sqrt(1.0 + 1e-3), 1e-15);
  }
}

TEST(BatchNorm, BatchStatisticsIgnoreMaskedCells) {
  Tensor x(Shape{1, 2, 2}, {1.0, 3.0, 100.0, -50.0});
  Tensor mask(Shape{4}, {1, 1, 0, 0});
  const BatchStats s = batch_statistics(std::span<const Tensor>(&x, 1), &mask);
  EXPECT_DOUBLE_EQ(s.mean[0], 2.0);
  EXPECT_DOUBLE_EQ(s.var[0], 1.0);
  Var one = Var::constant(Tensor(Shape{1}, 1.0));
  Var zero = Var::constant(Tensor(Shape{1}, 0.0));
  const Tensor y = batchnorm(Var::constant(x), one, zero, s, &mask).value();
  EXPECT_EQ(y[2], 0.0);
  EXPECT_EQ(y[3], 0.0);
}

TEST(BatchNorm, InferModeWithFreshStatisticsIsNearIdentity) {
  Rng rng(3);
  const Tensor x = random_tensor({2, 3, 3}, rng);
  Tensor rm(Shape{2}, 0.0), rv(Shape{2}, 1.0);
  Var one = Var::constant(Tensor(Shape{2}, 1.0));
  Var zero = Var::constant(Tensor(Shape{2}, 0.0));
  const Tensor y = batchnorm_input(Var::constant(x), one, zero, rm, rv, Mode::infer).value();
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i], x[i], 1e-3);
  EXPECT_EQ(rm, Tensor(Shape{2}, 0.0));
}

TEST(BatchNorm, TrainModeUpdatesRunningStatistics) {
  Tensor x(Shape{1, 1, 2}, {1.0, 3.0});
  Tensor rm(Shape{1}, 0.0), rv(Shape{1}, 1.0);
  Var one = Var::constant(Tensor(Shape{1}, 1.0));
  Var zero = Var::constant(Tensor(Shape{1}, 0.0));
  batchnorm_input(Var::constant(x), one, zero, rm, rv, Mode::train);
  EXPECT_NEAR(rm[0], 0.01 * 2.0, 1e-15);
  EXPECT_NEAR(rv[0], 0.99 + 0.01 * 1.0, 1e-15);
}

TEST(BatchNorm, RejectsFullyMaskedInput) {
  Tensor x(Shape{1, 2, 2}, 1.0);
  Tensor mask(Shape{4}, 0.0);
  EXPECT_THROW(batch_statistics(std::span<const Tensor>(&x, 1), &mask),
               std::invalid_argument);
}

TEST(Dropout, ZeroRateKeepsEverything) {
  EXPECT_EQ(recurrent_dropout_mask(Shape{50}, 0.0, 7), Tensor(Shape{50}, 1.0));
}

TEST(Dropout, DropFractionAndScale) {
  const Tensor m = recurrent_dropout_mask(Shape{100000}, 0.8, 11);
  std::size_t zeros = 0;
  for (double v : m.values()) {
    if (v == 0.0) {
      ++zeros;
    } else {
      EXPECT_NEAR(v, 5.0, 1e-12);
    }
  }
  const double fraction = static_cast<double>(zeros) / 1e5;
  EXPECT_GE(fraction, 0.79);
  EXPECT_LE(fraction, 0.81);
}

TEST(Dropout, SameSeedSameMask) {
  EXPECT_EQ(recurrent_dropout_mask(Shape{64}, 0.5, 42),
            recurrent_dropout_mask(Shape{64}, 0.5, 42));
  EXPECT_FALSE(recurrent_dropout_mask(Shape{64}, 0.5, 42) ==
               recurrent_dropout_mask(Shape{64}, 0.5, 43));
}

TEST(Dropout, RejectsRateOfOne) {
  EXPECT_THROW(recurrent_dropout_mask(Shape{4}, 1.0, 1), std::invalid_argument);
  EXPECT_THROW(recurrent_dropout_mask(Shape{4}, -0.1, 1), std::invalid_argument);
}

LstmWeights random_lstm(std::size_t n_in, std::size_t u, Rng& rng, double range = 0.5) {
  return {Var::parameter(random_tensor({n_in, 4 * u}, rng, -range, range)),
          Var::parameter(random_tensor({u, 4 * u}, rng, -range, range)),
          Var::parameter(random_tensor({4 * u}, rng, -range, range))};
}

ConvLstmWeights random_convlstm(std::size_t c_in, std::size_t u, std::size_t k, Rng& rng,
                                double range = 0.3) {
  return {Var::parameter(random_tensor({4 * u, c_in, k, k}, rng, -range, range)),
          Var::parameter(random_tensor({4 * u, u, k, k}, rng, -range, range)),
          Var::parameter(random_tensor({4 * u}, rng, -range, range))};
}

TEST(Lstm, ZeroWeightsZeroStateGiveZeroOutput) {
  LstmWeights w{Var::constant(Tensor(Shape{3, 8})), Var::constant(Tensor(Shape{2, 8})),
                Var::constant(Tensor(Shape{8}))};
  const auto s = lstm_step(Var::constant(Tensor(Shape{3}, 1.0)), RecurrentState::zeros({2}), w);
  EXPECT_EQ(s.h.value(), Tensor(Shape{2}));
  EXPECT_EQ(s.c.value(), Tensor(Shape{2}));
}

TEST(Lstm, SaturatedGatesCarryCandidate) {
  const std::size_t u = 3;
  LstmWeights w{Var::constant(Tensor(Shape{1, 4 * u})), Var::constant(Tensor(Shape{u, 4 * u})),
                Var::constant(Tensor(Shape{4 * u}, 50.0))};
  const auto s = lstm_step(Var::constant(Tensor(Shape{1})), RecurrentState::zeros({u}), w);
  for (std::size_t i = 0; i < u; ++i) {
    EXPECT_NEAR(s.c.value()[i], 1.0, 1e-12);
    EXPECT_NEAR(s.h.value()[i], std::tanh(1.0), 1e-12);
  }
}

TEST(Lstm, HardSigmoidGateValues) {
  // i = f = o = 0.5 + 0.2·z, candidate tanh(z), with z = bias
  LstmWeights w{Var::constant(Tensor(Shape{1, 4})), Var::constant(Tensor(Shape{1, 4})),
                Var::constant(Tensor(Shape{4}, {1.0, 0.5, 0.3, -1.0}))};
  RecurrentState s0{Var::constant(Tensor(Shape{1})), Var::constant(Tensor(Shape{1}, 2.0))};
  const auto s = lstm_step(Var::constant(Tensor(Shape{1})), s0, w);
  const double c = 0.6 * 2.0 + 0.7 * std::tanh(0.3);
  EXPECT_NEAR(s.c.value()[0], c, 1e-15);
  EXPECT_NEAR(s.h.value()[0], 0.3 * std::tanh(c), 1e-15);
}

TEST(Lstm, RejectsInconsistentShapes) {
  Rng rng(5);
  LstmWeights w = random_lstm(3, 2, rng);
  EXPECT_THROW(lstm_step(Var::constant(Tensor(Shape{4})), RecurrentState::zeros({2}), w),
               std::invalid_argument);
  EXPECT_THROW(lstm_step(Var::constant(Tensor(Shape{3})), RecurrentState::zeros({3}), w),
               std::invalid_argument);
}

TEST(ConvLstm, ZeroWeightsGiveZeroOutput) {
  ConvLstmWeights w{Var::constant(Tensor(Shape{8, 1, 3, 3})),
                    Var::constant(Tensor(Shape{8, 2, 3, 3})), Var::constant(Tensor(Shape{8}))};
  const auto s = convlstm_step(Var::constant(Tensor(Shape{1, 4, 4}, 1.0)),
                               RecurrentState::zeros({2, 4, 4}), w);
  EXPECT_EQ(s.h.value(), Tensor(Shape{2, 4, 4}));
}

TEST(ConvLstm, OneByOneGridMatchesLstm) {
  Rng rng(6);
  const std::size_t c_in = 3, u = 4, k = 3;
  for (int trial = 0; trial < 10; ++trial) {
    ConvLstmWeights cw = random_convlstm(c_in, u, k, rng, 1.0);
    // only the centre tap sees a 1×1 same-padded field
    Tensor wi(Shape{c_in, 4 * u}), wh(Shape{u, 4 * u});
    for (std::size_t g = 0; g < 4 * u; ++g) {
      for (std::size_t c = 0; c < c_in; ++c) wi(c, g) = cw.input_kernels.value()[(g * c_in + c) * 9 + 4];
      for (std::size_t c = 0; c < u; ++c) wh(c, g) = cw.recurrent_kernels.value()[(g * u + c) * 9 + 4];
    }
    LstmWeights lw{Var::constant(wi), Var::constant(wh), Var::constant(cw.bias.value())};
    Tensor x = random_tensor({c_in}, rng), h = random_tensor({u}, rng), c = random_tensor({u}, rng);
    const auto a = convlstm_step(Var::constant(x.reshaped({c_in, 1, 1})),
                                 {Var::constant(h.reshaped({u, 1, 1})),
                                  Var::constant(c.reshaped({u, 1, 1}))},
                                 cw);
    const auto b = lstm_step(Var::constant(x), {Var::constant(h), Var::constant(c)}, lw);
    for (std::size_t i = 0; i < u; ++i) {
      EXPECT_NEAR(a.h.value()[i], b.h.value()[i], 1e-12);
      EXPECT_NEAR(a.c.value()[i], b.c.value()[i], 1e-12);
    }
  }
}

TEST(ConvLstm, ParameterCountForFortyUnitsOverThirtyTwoChannels) {
  Rng rng(7);
  ConvLstmWeights w = random_convlstm(32, 40, 3, rng);
  EXPECT_EQ(w.input_kernels.value().size() + w.recurrent_kernels.value().size() +
                w.bias.value().size(),
            103840u);
}

TEST(ConvLstm, RejectsSpatialMismatch) {
  Rng rng(8);
  ConvLstmWeights w = random_convlstm(1, 2, 3, rng);
  EXPECT_THROW(convlstm_step(Var::constant(Tensor(Shape{1, 4, 4})),
                             RecurrentState::zeros({2, 4, 5}), w),
               std::invalid_argument);
}

TEST(Initialisers, OrthogonalHasOrthonormalRows) {
  Rng rng(9);
  for (Shape shape : {Shape{8, 32}, Shape{32, 8}, Shape{16, 16}}) {
    const Tensor q = orthogonal(shape, rng);
    const std::size_t r = shape[0], c = shape[1];
    const bool rows = r <= c;
    const std::size_t n = rows ? r : c;
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = 0; b < n; ++b) {
        double d = 0.0;
        for (std::size_t k = 0; k < (rows ? c : r); ++k) {
          d += rows ? q(a, k) * q(b, k) : q(k, a) * q(k, b);
        }
        EXPECT_NEAR(d, a == b ? 1.0 : 0.0, 1e-12);
      }
    }
  }
}

TEST(Initialisers, GlorotBounds) {
  Rng rng(10);
  const Tensor t = glorot_uniform(Shape{20, 40}, 20, 40, rng);
  EXPECT_LE(max_abs(t), std::sqrt(6.0 / 60.0));
  EXPECT_GT(max_abs(t), 0.9 * std::sqrt(6.0 / 60.0));
}

class LayerGradients : public ::testing::TestWithParam<int> {};

TEST_P(LayerGradients, Dense) {
  Rng rng(1000 + GetParam());
  Var x = Var::parameter(random_tensor({5}, rng));
  Var w = Var::parameter(random_tensor({5, 3}, rng));
  Var b = Var::parameter(random_tensor({3}, rng));
  const Tensor r = random_tensor({3}, rng);
  auto loss = [&] { return weighted_sum(dense(x, w, b), r); };
  EXPECT_LT(check_gradients({x, w, b}, loss).max_rel_error, kTolerance);
}

TEST_P(LayerGradients, BatchNormTrainMode) {
  Rng rng(1100 + GetParam());
  Var x = Var::parameter(random_tensor({2, 3, 4}, rng));
  Var gamma = Var::parameter(random_tensor({2}, rng, 0.5, 1.5));
  Var beta = Var::parameter(random_tensor({2}, rng));
  Tensor mask(Shape{12}, 1.0);
  mask[0] = mask[5] = 0.0;
  const Tensor r = random_tensor({24}, rng);
  auto loss = [&] {
    Tensor rm(Shape{2}), rv(Shape{2}, 1.0);
    return weighted_sum(batchnorm_input(x, gamma, beta, rm, rv, Mode::train, &mask), r);
  };
  EXPECT_LT(check_gradients({x, gamma, beta}, loss).max_rel_error, kTolerance);
}

TEST_P(LayerGradients, LstmThreeStepChain) {
  Rng rng(1200 + GetParam());
  LstmWeights w = random_lstm(3, 2, rng);
  std::vector<Var> xs;
  for (int t = 0; t < 3; ++t) xs.push_back(Var::parameter(random_tensor({3}, rng)));
  const Tensor r = random_tensor({2}, rng);
  const DropoutMasks masks{recurrent_dropout_mask(Shape{3}, 0.3, 1),
                           recurrent_dropout_mask(Shape{2}, 0.3, 2)};
  auto loss = [&] {
    RecurrentState s = RecurrentState::zeros({2});
    for (const Var& x : xs) s = lstm_step(x, s, w, GetParam() % 2 ? &masks : nullptr);
    return weighted_sum(s.h, r);
  };
  EXPECT_LT(check_gradients({w.input, w.recurrent, w.bias, xs[0], xs[1], xs[2]}, loss)
                .max_rel_error,
            kTolerance);
}

TEST_P(LayerGradients, ConvLstmThreeStepChain) {
  Rng rng(1300 + GetParam());
  ConvLstmWeights w = random_convlstm(2, 2, 3, rng);
  std::vector<Var> xs;
  for (int t = 0; t < 3; ++t) xs.push_back(Var::parameter(random_tensor({2, 3, 3}, rng)));
  const Tensor r = random_tensor({18}, rng);
  auto loss = [&] {
    RecurrentState s = RecurrentState::zeros({2, 3, 3});
    for (const Var& x : xs) s = convlstm_step(x, s, w);
    return weighted_sum(s.h, r);
  };
  EXPECT_LT(check_gradients({w.input_kernels, w.recurrent_kernels, w.bias, xs[0]}, loss)
                .max_rel_error,
            kTolerance);
}

INSTANTIATE_TEST_SUITE_P(RandomInstances, LayerGradients, ::testing::Range(0, 5));

}  // namespace
}  // namespace slacast
