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

#ifndef SLACAST_OPTIM_HPP
#define SLACAST_OPTIM_HPP

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "slacast/autograd.hpp"
#include "slacast/tensor.hpp"

namespace slacast::optim {

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

/// One Adam update. All gradients are checked before any parameter moves, so
/// a refused step leaves parameters and state untouched.
inline void adam_step(std::span<Tensor* const> params,
                      std::span<const Tensor* const> grads, AdamState& state,
                      double lr) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument("adam_step: " + std::to_string(params.size()) +
                                " parameters but " + std::to_string(grads.size()) +
                                " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i]->shape() != params[i]->shape()) {
      throw std::invalid_argument("adam_step: gradient " +
                                  to_string(grads[i]->shape()) +
                                  " does not match parameter " +
                                  to_string(params[i]->shape()) + " at index " +
                                  std::to_string(i));
    }
    if (!grads[i]->all_finite()) {
      throw std::domain_error("adam_step: non-finite gradient for parameter " +
                              std::to_string(i) + "; step refused");
    }
  }
  if (state.m.empty()) {
    for (const Tensor* p : params) {
      state.m.emplace_back(p->shape());
      state.v.emplace_back(p->shape());
    }
  } else if (state.m.size() != params.size()) {
    throw std::invalid_argument("adam_step: optimizer state tracks " +
                                std::to_string(state.m.size()) + " parameters");
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = *grads[i];
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
      const double m_hat = m[k] / correction1;
      const double v_hat = v[k] / correction2;
      p[k] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

/// Step decay: base_lr · factor^⌊epoch/interval⌋.
struct TrainSchedule {
  std::size_t epochs = 150;
  double base_lr = 1e-3;
  double decay_factor = 0.5;
  std::size_t decay_interval = 50;
};

inline double lr_at_epoch(const TrainSchedule& schedule, std::size_t epoch) {
  if (epoch >= schedule.epochs) {
    throw std::out_of_range("epoch " + std::to_string(epoch) +
                            " outside schedule of " +
                            std::to_string(schedule.epochs) + " epochs");
  }
  const std::size_t interval = schedule.decay_interval ? schedule.decay_interval : 1;
  return schedule.base_lr *
         std::pow(schedule.decay_factor, static_cast<double>(epoch / interval));
}

// ---------------------------------------------------------------------------
// masked mean squared error

namespace detail {

inline double mask_total(const Tensor& pred, const Tensor& truth,
                         const Tensor& mask) {
  pred.require_same_shape(truth, "masked_mse");
  if (mask.size() != pred.size()) {
    throw std::invalid_argument("masked_mse: mask " + to_string(mask.shape()) +
                                " does not match prediction " +
                                to_string(pred.shape()));
  }
  double total = 0.0;
  for (double m : mask.values()) total += m;
  if (total <= 0.0) throw std::invalid_argument("masked_mse: mask selects no cells");
  return total;
}

}  // namespace detail

/// Σ mask·(pred−truth)² / Σ mask.
inline double masked_mse(const Tensor& pred, const Tensor& truth,
                         const Tensor& mask) {
  const double total = detail::mask_total(pred, truth, mask);
  double se = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - truth[i];
    se += mask[i] * d * d;
  }
  return se / total;
}

/// Differentiable form; only pred receives a gradient.
inline ag::Var masked_mse(const ag::Var& pred, const Tensor& truth,
                          const Tensor& mask) {
  const double total = detail::mask_total(pred.value(), truth, mask);
  Tensor loss = Tensor::scalar(masked_mse(pred.value(), truth, mask));
  return ag::make_result(std::move(loss), {pred},
                         [truth, mask, total](ag::Node& self) {
                           ag::Node& p = *self.parents[0];
                           Tensor g(p.value.shape());
                           const double s = 2.0 * self.grad[0] / total;
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             g[i] = s * mask[i] * (p.value[i] - truth[i]);
                           }
                           p.accumulate(std::move(g));
                         });
}

}  // namespace slacast::optim

#endif  // SLACAST_OPTIM_HPP
