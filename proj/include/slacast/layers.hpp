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

#ifndef SLACAST_LAYERS_HPP
#define SLACAST_LAYERS_HPP

#include <Eigen/QR>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "slacast/autograd.hpp"
#include "slacast/primitives.hpp"
#include "slacast/random.hpp"
#include "slacast/tensor.hpp"

namespace slacast::layers {

using ag::Var;

// ---------------------------------------------------------------------------
// dense

/// weightsᵀ·input + bias, no activation.
inline Var dense(const Var& input, const Var& weights, const Var& bias) {
  const Shape& w = weights.shape();
  if (input.value().rank() != 1 || w.size() != 2 || w[0] != input.shape()[0] ||
      bias.value().rank() != 1 || bias.shape()[0] != w[1]) {
    throw std::invalid_argument("dense: input " + to_string(input.shape()) +
                                ", weights " + to_string(w) + ", bias " +
                                to_string(bias.shape()) + " do not agree");
  }
  Var row = ag::reshape(input, Shape{1, w[0]});
  Var out = ag::reshape(ag::matmul(row, weights), Shape{w[1]});
  return ag::add(out, bias);
}

// ---------------------------------------------------------------------------
// batch normalisation of the network input

enum class Mode { train, infer };

inline constexpr double kBatchNormEpsilon = 1e-3;
inline constexpr double kBatchNormMomentum = 0.99;

struct BatchStats {
  Tensor mean;  // [C]
  Tensor var;   // [C], biased
};

namespace detail {

inline std::size_t valid_cells(const Tensor* mask, std::size_t plane) {
  if (!mask) return plane;
  std::size_t n = 0;
  for (double m : mask->values()) n += m != 0.0;
  return n;
}

inline void check_mask(const Tensor* mask, std::size_t plane) {
  if (mask && mask->size() != plane) {
    throw std::invalid_argument("batchnorm: mask of shape " +
                                to_string(mask->shape()) +
                                " does not cover a plane of " +
                                std::to_string(plane) + " cells");
  }
}

}  // namespace detail

/// Per-channel mean and variance over every non-masked cell of every frame.
/// Frames are [C,H,W]; the mask is one H×W plane shared by all channels.
inline BatchStats batch_statistics(std::span<const Tensor> frames,
                                   const Tensor* mask = nullptr) {
  if (frames.empty()) throw std::invalid_argument("batchnorm: empty batch");
  const std::size_t channels = frames[0].dim(0);
  const std::size_t plane = frames[0].size() / channels;
  detail::check_mask(mask, plane);
  const std::size_t per_frame = detail::valid_cells(mask, plane);
  if (per_frame == 0) {
    throw std::invalid_argument("batchnorm: no non-masked cells to normalise");
  }
  const double n = static_cast<double>(per_frame * frames.size());
  BatchStats s{Tensor(Shape{channels}), Tensor(Shape{channels})};
  for (std::size_t c = 0; c < channels; ++c) {
    double total = 0.0;
    for (const Tensor& f : frames) {
      f.require_same_shape(frames[0], "batchnorm");
      for (std::size_t i = 0; i < plane; ++i) {
        if (!mask || (*mask)[i] != 0.0) total += f[c * plane + i];
      }
    }
    const double mu = total / n;
    double sq = 0.0;
    for (const Tensor& f : frames) {
      for (std::size_t i = 0; i < plane; ++i) {
        if (!mask || (*mask)[i] != 0.0) {
          const double d = f[c * plane + i] - mu;
          sq += d * d;
        }
      }
    }
    s.mean[c] = mu;
    s.var[c] = sq / n;
  }
  return s;
}

inline void update_running_stats(Tensor& running_mean, Tensor& running_var,
                                 const BatchStats& batch,
                                 double momentum = kBatchNormMomentum) {
  for (std::size_t c = 0; c < running_mean.size(); ++c) {
    running_mean[c] = momentum * running_mean[c] + (1.0 - momentum) * batch.mean[c];
    running_var[c] = momentum * running_var[c] + (1.0 - momentum) * batch.var[c];
  }
}

namespace detail {

/// Shared forward/backward for both batchnorm flavours. With `coupled` the
/// statistics are treated as functions of x (train mode); otherwise they are
/// constants.
inline Var batchnorm_node(const Var& x, const Var& gamma, const Var& beta,
                          const BatchStats& stats, const Tensor* mask,
                          double eps, bool coupled) {
  const std::size_t channels = x.shape()[0];
  const std::size_t plane = x.value().size() / channels;
  check_mask(mask, plane);
  if (gamma.value().size() != channels || beta.value().size() != channels) {
    throw std::invalid_argument("batchnorm: gamma/beta must have " +
                                std::to_string(channels) + " entries");
  }
  Tensor mask_t = mask ? *mask : Tensor(Shape{plane}, 1.0);
  const double n = static_cast<double>(valid_cells(mask, plane));
  Tensor normalized(x.shape());
  Tensor out(x.shape());
  std::vector<double> inv_std(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    inv_std[c] = 1.0 / std::sqrt(stats.var[c] + eps);
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t k = c * plane + i;
      if (mask_t[i] == 0.0) continue;
      normalized[k] = (x.value()[k] - stats.mean[c]) * inv_std[c];
      out[k] = normalized[k] * gamma.value()[c] + beta.value()[c];
    }
  }
  return ag::make_result(
      std::move(out), {x, gamma, beta},
      [normalized = std::move(normalized), inv_std = std::move(inv_std),
       mask_t = std::move(mask_t), channels, plane, n, coupled](ag::Node& self) {
        ag::Node& px = *self.parents[0];
        ag::Node& pg = *self.parents[1];
        ag::Node& pb = *self.parents[2];
        Tensor dg(pg.value.shape()), db(pb.value.shape()), dx(px.value.shape());
        for (std::size_t c = 0; c < channels; ++c) {
          for (std::size_t i = 0; i < plane; ++i) {
            if (mask_t[i] == 0.0) continue;
            const std::size_t k = c * plane + i;
            dg[c] += self.grad[k] * normalized[k];
            db[c] += self.grad[k];
          }
          const double scale = pg.value[c] * inv_std[c];
          for (std::size_t i = 0; i < plane; ++i) {
            if (mask_t[i] == 0.0) continue;
            const std::size_t k = c * plane + i;
            dx[k] = coupled ? scale * (self.grad[k] - db[c] / n -
                                       normalized[k] * dg[c] / n)
                            : scale * self.grad[k];
          }
        }
        if (px.requires_grad) px.accumulate(std::move(dx));
        if (pg.requires_grad) pg.accumulate(std::move(dg));
        if (pb.requires_grad) pb.accumulate(std::move(db));
      });
}

}  // namespace detail

/// (x−μ)/√(σ²+ε)·γ+β with fixed statistics. Masked cells come out as zero.
inline Var batchnorm(const Var& x, const Var& gamma, const Var& beta,
                     const BatchStats& stats, const Tensor* mask = nullptr,
                     double eps = kBatchNormEpsilon) {
  return detail::batchnorm_node(x, gamma, beta, stats, mask, eps, false);
}

/// Input batch normalisation of one [C,H,W] batch. Train mode normalises with
/// the batch's own statistics (and differentiates through them), then folds
/// them into the running statistics; infer mode uses the running statistics.
inline Var batchnorm_input(const Var& x, const Var& gamma, const Var& beta,
                           Tensor& running_mean, Tensor& running_var, Mode mode,
                           const Tensor* mask = nullptr,
                           double eps = kBatchNormEpsilon,
                           double momentum = kBatchNormMomentum) {
  if (mode == Mode::infer) {
    return batchnorm(x, gamma, beta, BatchStats{running_mean, running_var}, mask,
                     eps);
  }
  const Tensor& xv = x.value();
  BatchStats stats = batch_statistics(std::span<const Tensor>(&xv, 1), mask);
  update_running_stats(running_mean, running_var, stats, momentum);
  return detail::batchnorm_node(x, gamma, beta, stats, mask, eps, true);
}

// ---------------------------------------------------------------------------
// recurrent dropout

/// Bernoulli keep-mask scaled by 1/(1−rate). One mask is drawn per sequence
/// and reused at every step.
inline Tensor recurrent_dropout_mask(const Shape& shape, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw std::invalid_argument("dropout rate must lie in [0, 1), got " +
                                std::to_string(rate));
  }
  Tensor mask(shape, 1.0);
  if (rate == 0.0) return mask;
  const double keep_scale = 1.0 / (1.0 - rate);
  for (double& v : mask.values()) v = rng.uniform() < rate ? 0.0 : keep_scale;
  return mask;
}

inline Tensor recurrent_dropout_mask(const Shape& shape, double rate,
                                     std::uint64_t seed) {
  Rng rng(seed);
  return recurrent_dropout_mask(shape, rate, rng);
}

struct DropoutMasks {
  Tensor input;      // applied to x before the input transformation
  Tensor recurrent;  // applied to h before the recurrent transformation
};

// ---------------------------------------------------------------------------
// recurrent cells

struct RecurrentState {
  Var h;
  Var c;

  static RecurrentState zeros(const Shape& shape) {
    return {Var::constant(Tensor(shape)), Var::constant(Tensor(shape))};
  }
};

/// Gate order inside the 4u pre-activation block: input, forget, candidate,
/// output. Gates use the hard sigmoid, candidate and output transform tanh.
inline RecurrentState gate_update(const Var& z, const Var& c, std::size_t units) {
  Var i = ag::activation(ag::slice(z, 0, units), Activation::hard_sigmoid);
  Var f = ag::activation(ag::slice(z, units, units), Activation::hard_sigmoid);
  Var g = ag::activation(ag::slice(z, 2 * units, units), Activation::tanh);
  Var o = ag::activation(ag::slice(z, 3 * units, units), Activation::hard_sigmoid);
  Var c_next = ag::add(ag::mul(f, c), ag::mul(i, g));
  Var h_next = ag::mul(o, ag::activation(c_next, Activation::tanh));
  return {h_next, c_next};
}

struct LstmWeights {
  Var input;      // [n_in, 4u]
  Var recurrent;  // [u, 4u]
  Var bias;       // [4u]

  std::size_t units() const { return recurrent.shape()[0]; }
};

inline RecurrentState lstm_step(const Var& x, const RecurrentState& state,
                                const LstmWeights& w,
                                const DropoutMasks* dropout = nullptr) {
  const std::size_t u = w.units();
  const std::size_t n_in = x.value().size();
  if (x.value().rank() != 1 || w.input.shape() != Shape{n_in, 4 * u} ||
      w.recurrent.shape() != Shape{u, 4 * u} || w.bias.shape() != Shape{4 * u} ||
      state.h.shape() != Shape{u} || state.c.shape() != Shape{u}) {
    throw std::invalid_argument(
        "lstm_step: x " + to_string(x.shape()) + ", W " +
        to_string(w.input.shape()) + ", U " + to_string(w.recurrent.shape()) +
        ", b " + to_string(w.bias.shape()) + ", h " + to_string(state.h.shape()) +
        ", c " + to_string(state.c.shape()) + " are inconsistent");
  }
  Var xin = x;
  Var hin = state.h;
  if (dropout) {
    if (!dropout->input.empty()) xin = ag::mul(xin, Var::constant(dropout->input));
    if (!dropout->recurrent.empty()) {
      hin = ag::mul(hin, Var::constant(dropout->recurrent));
    }
  }
  Var zx = ag::reshape(ag::matmul(ag::reshape(xin, Shape{1, n_in}), w.input),
                       Shape{4 * u});
  Var zh = ag::reshape(ag::matmul(ag::reshape(hin, Shape{1, u}), w.recurrent),
                       Shape{4 * u});
  return gate_update(ag::add(ag::add(zx, zh), w.bias), state.c, u);
}

struct ConvLstmWeights {
  Var input_kernels;      // [4u, C_in, k, k]
  Var recurrent_kernels;  // [4u, u, k, k]
  Var bias;               // [4u]

  std::size_t units() const { return recurrent_kernels.shape()[1]; }
};

/// lstm_step with every matrix product replaced by a same-padded convolution.
inline RecurrentState convlstm_step(const Var& x, const RecurrentState& state,
                                    const ConvLstmWeights& w,
                                    const DropoutMasks* dropout = nullptr) {
  const std::size_t u = w.units();
  const Shape& xs = x.shape();
  const Shape& hs = state.h.shape();
  if (xs.size() != 3 || hs.size() != 3 || xs[1] != hs[1] || xs[2] != hs[2]) {
    throw std::invalid_argument("convlstm_step: input " + to_string(xs) +
                                " and state " + to_string(hs) +
                                " disagree on spatial extent");
  }
  if (hs[0] != u || state.c.shape() != hs || w.bias.shape() != Shape{4 * u} ||
      w.recurrent_kernels.shape()[0] != 4 * u ||
      w.input_kernels.shape()[0] != 4 * u) {
    throw std::invalid_argument("convlstm_step: state " + to_string(hs) +
                                " does not match kernels " +
                                to_string(w.recurrent_kernels.shape()));
  }
  Var xin = x;
  Var hin = state.h;
  if (dropout) {
    if (!dropout->input.empty()) xin = ag::mul(xin, Var::constant(dropout->input));
    if (!dropout->recurrent.empty()) {
      hin = ag::mul(hin, Var::constant(dropout->recurrent));
    }
  }
  Var zx = ag::conv2d(xin, w.input_kernels, w.bias, 1, Padding::same);
  Var zh = ag::conv2d(hin, w.recurrent_kernels, Var(), 1, Padding::same);
  return gate_update(ag::add(zx, zh), state.c, u);
}

// ---------------------------------------------------------------------------
// initialisers

/// Uniform in ±√(6/(fan_in+fan_out)).
inline Tensor glorot_uniform(const Shape& shape, std::size_t fan_in,
                             std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(shape);
  for (double& v : t.values()) v = rng.uniform(-limit, limit);
  return t;
}

/// Matrix with orthonormal rows (rows ≤ cols) or columns (rows > cols),
/// flattened into `shape` whose leading extent is `rows`.
inline Tensor orthogonal(const Shape& shape, Rng& rng) {
  const std::size_t rows = shape[0];
  const std::size_t cols = element_count(shape) / rows;
  const std::size_t tall = std::max(rows, cols), narrow = std::min(rows, cols);
  slacast::detail::RowMatrix a(tall, narrow);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
  Eigen::HouseholderQR<slacast::detail::RowMatrix> qr(a);
  slacast::detail::RowMatrix q =
      qr.householderQ() * slacast::detail::RowMatrix::Identity(tall, narrow);
  const auto r = qr.matrixQR();
  for (std::size_t j = 0; j < narrow; ++j) {
    if (r(j, j) < 0) q.col(j) *= -1.0;
  }
  Tensor t(shape);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      t[i * cols + j] = rows >= cols ? q(i, j) : q(j, i);
    }
  }
  return t;
}

}  // namespace slacast::layers

#endif  // SLACAST_LAYERS_HPP
