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

// Central finite-difference gradient checks for the test suites.

#ifndef SLACAST_TESTS_GRADCHECK_HPP
#define SLACAST_TESTS_GRADCHECK_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "slacast/autograd.hpp"
#include "slacast/random.hpp"
#include "slacast/tensor.hpp"

namespace slacast::testing {

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::string worst;  // "leaf[i]" of the largest error
};

/// Compares backward() against (f(x+h) − f(x−h)) / 2h for every coordinate of
/// every leaf. `loss` rebuilds the graph from the leaves' current values and
/// must return a scalar. Per-coordinate error is |a − n| / max(|a|, |n|, 1e-6).
inline GradCheck check_gradients(std::vector<ag::Var> leaves,
                                 const std::function<ag::Var()>& loss, double h = 1e-5) {
  for (auto& leaf : leaves) leaf.zero_grad();
  ag::backward(loss());
  std::vector<Tensor> analytic;
  for (const auto& leaf : leaves) {
    analytic.push_back(leaf.has_grad() ? leaf.grad() : Tensor(leaf.shape()));
  }
  GradCheck result;
  ag::NoGradGuard no_grad;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    Tensor& value = leaves[l].mutable_value();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      value[i] = saved + h;
      const double up = loss().value()[0];
      value[i] = saved - h;
      const double down = loss().value()[0];
      value[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[l][i];
      const double err =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst = "leaf " + std::to_string(l) + "[" + std::to_string(i) + "]";
      }
    }
  }
  for (auto& leaf : leaves) leaf.zero_grad();
  return result;
}

/// Σ r·out with fixed random weights r, so every output coordinate matters.
inline ag::Var weighted_sum(const ag::Var& out, const Tensor& weights) {
  return ag::matmul(ag::reshape(out, Shape{1, out.value().size()}),
                    ag::Var::constant(weights.reshaped(Shape{weights.size(), 1})));
}

}  // namespace slacast::testing

#endif  // SLACAST_TESTS_GRADCHECK_HPP
