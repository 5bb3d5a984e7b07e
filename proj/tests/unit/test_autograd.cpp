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

#include <gtest/gtest.h>

#include "slacast/autograd.hpp"
#include "support/gradcheck.hpp"

namespace slacast {
namespace {

using ag::Var;
using testing::check_gradients;
using testing::random_tensor;
using testing::weighted_sum;

constexpr double kTolerance = 1e-4;

TEST(Autograd, ConstantsCarryNoGradient) {
  Var c = Var::constant(Tensor(Shape{2}, 1.0));
  Var p = Var::parameter(Tensor(Shape{2}, 2.0));
  Var out = ag::mul(c, p);
  EXPECT_TRUE(out.requires_grad());
  EXPECT_FALSE(ag::mul(c, c).requires_grad());
}

TEST(Autograd, BackwardRequiresScalarRoot) {
  Var p = Var::parameter(Tensor(Shape{2}, 1.0));
  EXPECT_THROW(ag::backward(ag::scale(p, 2.0)), std::invalid_argument);
}

TEST(Autograd, GradientsAccumulateUntilCleared) {
  Var p = Var::parameter(Tensor(Shape{1}, 3.0));
  ag::backward(ag::mul(p, p));
  EXPECT_DOUBLE_EQ(p.grad()[0], 6.0);
  ag::backward(ag::mul(p, p));
  EXPECT_DOUBLE_EQ(p.grad()[0], 12.0);
  p.zero_grad();
  EXPECT_FALSE(p.has_grad());
}

TEST(Autograd, SharedSubexpressionCountedOnce) {
  Var p = Var::parameter(Tensor(Shape{1}, 2.0));
  Var q = ag::mul(p, p);          // p²
  ag::backward(ag::add(q, q));    // 2p²
  EXPECT_DOUBLE_EQ(p.grad()[0], 8.0);
}

TEST(Autograd, NoGradGuardStopsRecording) {
  Var p = Var::parameter(Tensor(Shape{1}, 2.0));
  ag::NoGradGuard guard;
  EXPECT_FALSE(ag::mul(p, p).requires_grad());
}

TEST(Autograd, ForwardBackwardLeavesParametersUnchanged) {
  Rng rng(1);
  Var a = Var::parameter(random_tensor({3, 4}, rng));
  Var b = Var::parameter(random_tensor({4, 2}, rng));
  const Tensor a0 = a.value(), b0 = b.value();
  ag::backward(weighted_sum(ag::matmul(a, b), random_tensor({6}, rng)));
  EXPECT_EQ(a.value(), a0);
  EXPECT_EQ(b.value(), b0);
}

class OpGradients : public ::testing::TestWithParam<int> {};

TEST_P(OpGradients, Elementwise) {
  Rng rng(100 + GetParam());
  Var a = Var::parameter(random_tensor({2, 3}, rng));
  Var b = Var::parameter(random_tensor({2, 3}, rng));
  const Tensor r = random_tensor({6}, rng);
  auto loss = [&] {
    return weighted_sum(ag::scale(ag::sub(ag::mul(a, b), ag::add(a, b)), 0.7), r);
  };
  EXPECT_LT(check_gradients({a, b}, loss).max_rel_error, kTolerance);
}

TEST_P(OpGradients, Activations) {
  Rng rng(200 + GetParam());
  for (Activation kind : {Activation::relu, Activation::tanh, Activation::hard_sigmoid}) {
    Var x = Var::parameter(random_tensor({7}, rng, -3.0, 3.0));
    const Tensor r = random_tensor({7}, rng);
    auto loss = [&] { return weighted_sum(ag::activation(x, kind), r); };
    EXPECT_LT(check_gradients({x}, loss).max_rel_error, kTolerance);
  }
}

TEST_P(OpGradients, MatmulReshapeSlice) {
  Rng rng(300 + GetParam());
  Var a = Var::parameter(random_tensor({3, 4}, rng));
  Var b = Var::parameter(random_tensor({4, 5}, rng));
  const Tensor r = random_tensor({6}, rng);
  auto loss = [&] {
    Var m = ag::reshape(ag::matmul(a, b), Shape{5, 3});
    return weighted_sum(ag::slice(m, 1, 2), r);
  };
  EXPECT_LT(check_gradients({a, b}, loss).max_rel_error, kTolerance);
}

TEST_P(OpGradients, Conv2d) {
  Rng rng(400 + GetParam());
  for (std::size_t stride : {1u, 2u}) {
    for (Padding pad : {Padding::same, Padding::valid}) {
      Var x = Var::parameter(random_tensor({2, 5, 6}, rng));
      Var k = Var::parameter(random_tensor({3, 2, 3, 3}, rng));
      Var b = Var::parameter(random_tensor({3}, rng));
      const Tensor probe = slacast::conv2d(x.value(), k.value(), b.value(), stride, pad);
      const Tensor r = random_tensor({probe.size()}, rng);
      auto loss = [&] { return weighted_sum(ag::conv2d(x, k, b, stride, pad), r); };
      EXPECT_LT(check_gradients({x, k, b}, loss).max_rel_error, kTolerance);
    }
  }
}

TEST_P(OpGradients, Conv2dWithoutBias) {
  Rng rng(450 + GetParam());
  Var x = Var::parameter(random_tensor({1, 4, 4}, rng));
  Var k = Var::parameter(random_tensor({2, 1, 3, 3}, rng));
  const Tensor r = random_tensor({32}, rng);
  auto loss = [&] { return weighted_sum(ag::conv2d(x, k, Var(), 1, Padding::same), r); };
  EXPECT_LT(check_gradients({x, k}, loss).max_rel_error, kTolerance);
}

TEST_P(OpGradients, Deconv2d) {
  Rng rng(500 + GetParam());
  Var x = Var::parameter(random_tensor({3, 2, 2}, rng));
  Var k = Var::parameter(random_tensor({3, 2, 4, 4}, rng));
  Var b = Var::parameter(random_tensor({2}, rng));
  const Tensor r = random_tensor({2 * 8 * 8}, rng);
  auto loss = [&] { return weighted_sum(ag::deconv2d(x, k, b, 4), r); };
  EXPECT_LT(check_gradients({x, k, b}, loss).max_rel_error, kTolerance);
}

TEST_P(OpGradients, Maxpool) {
  Rng rng(600 + GetParam());
  Var x = Var::parameter(random_tensor({2, 8, 8}, rng));
  const Tensor r = random_tensor({8}, rng);
  auto loss = [&] { return weighted_sum(ag::maxpool2d(x, 4, 4), r); };
  EXPECT_LT(check_gradients({x}, loss).max_rel_error, kTolerance);
}

INSTANTIATE_TEST_SUITE_P(RandomInstances, OpGradients, ::testing::Range(0, 5));

}  // namespace
}  // namespace slacast
