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

// Forward and backward kernels for the numeric primitives. Everything here is
// a pure function of its arguments; the autograd layer (autograd.hpp) wires
// the backward functions into a tape.

#ifndef SLACAST_PRIMITIVES_HPP
#define SLACAST_PRIMITIVES_HPP

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "slacast/tensor.hpp"

namespace slacast {

namespace detail {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixView = Eigen::Map<RowMatrix>;
using ConstMatrixView = Eigen::Map<const RowMatrix>;

inline ConstMatrixView view(const Tensor& t, std::size_t rows,
                            std::size_t cols) {
  return ConstMatrixView(t.data(), static_cast<Eigen::Index>(rows),
                         static_cast<Eigen::Index>(cols));
}
inline MatrixView view(Tensor& t, std::size_t rows, std::size_t cols) {
  return MatrixView(t.data(), static_cast<Eigen::Index>(rows),
                    static_cast<Eigen::Index>(cols));
}

inline void require_rank(const Tensor& t, std::size_t rank, const char* op,
                         const char* arg) {
  if (t.rank() != rank) {
    throw std::invalid_argument(std::string(op) + ": " + arg + " must have rank " +
                                std::to_string(rank) + ", got shape " +
                                to_string(t.shape()));
  }
}

}  // namespace detail

enum class Padding { same, valid };

/// Index arithmetic shared by convolution, its transpose, and im2col.
struct ConvGeometry {
  std::size_t channels = 0;
  std::size_t in_h = 0, in_w = 0;
  std::size_t k_h = 0, k_w = 0;
  std::size_t stride = 1;
  std::size_t pad_top = 0, pad_left = 0;
  std::size_t out_h = 0, out_w = 0;

  std::size_t patch_size() const { return channels * k_h * k_w; }
  std::size_t out_cells() const { return out_h * out_w; }
};

inline ConvGeometry conv_geometry(std::size_t channels, std::size_t in_h,
                                  std::size_t in_w, std::size_t k_h,
                                  std::size_t k_w, std::size_t stride,
                                  Padding padding) {
  if (stride < 1) throw std::invalid_argument("convolution stride must be >= 1");
  ConvGeometry g;
  g.channels = channels;
  g.in_h = in_h;
  g.in_w = in_w;
  g.k_h = k_h;
  g.k_w = k_w;
  g.stride = stride;
  if (padding == Padding::same) {
    g.out_h = (in_h + stride - 1) / stride;
    g.out_w = (in_w + stride - 1) / stride;
    const std::size_t need_h = (g.out_h - 1) * stride + k_h;
    const std::size_t need_w = (g.out_w - 1) * stride + k_w;
    g.pad_top = need_h > in_h ? (need_h - in_h) / 2 : 0;
    g.pad_left = need_w > in_w ? (need_w - in_w) / 2 : 0;
  } else {
    if (k_h > in_h || k_w > in_w) {
      throw std::invalid_argument(
          "kernel " + std::to_string(k_h) + "x" + std::to_string(k_w) +
          " exceeds unpadded input " + std::to_string(in_h) + "x" +
          std::to_string(in_w));
    }
    g.out_h = (in_h - k_h) / stride + 1;
    g.out_w = (in_w - k_w) / stride + 1;
  }
  return g;
}

/// Unfolds [C,H,W] into [C*kH*kW, outH*outW]; out-of-range taps read zero.
inline Tensor im2col(const double* input, const ConvGeometry& g) {
  Tensor cols(Shape{g.patch_size(), g.out_cells()});
  double* dst = cols.data();
  for (std::size_t c = 0; c < g.channels; ++c) {
    const double* plane = input + c * g.in_h * g.in_w;
    for (std::size_t ki = 0; ki < g.k_h; ++ki) {
      for (std::size_t kj = 0; kj < g.k_w; ++kj) {
        for (std::size_t oi = 0; oi < g.out_h; ++oi) {
          const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(oi * g.stride + ki) -
                                    static_cast<std::ptrdiff_t>(g.pad_top);
          const bool row_ok = ii >= 0 && ii < static_cast<std::ptrdiff_t>(g.in_h);
          for (std::size_t oj = 0; oj < g.out_w; ++oj) {
            const std::ptrdiff_t jj =
                static_cast<std::ptrdiff_t>(oj * g.stride + kj) -
                static_cast<std::ptrdiff_t>(g.pad_left);
            *dst++ = (row_ok && jj >= 0 && jj < static_cast<std::ptrdiff_t>(g.in_w))
                         ? plane[ii * static_cast<std::ptrdiff_t>(g.in_w) + jj]
                         : 0.0;
          }
        }
      }
    }
  }
  return cols;
}

/// Adjoint of im2col: scatters-adds columns back into [C,H,W].
inline void col2im(const Tensor& cols, const ConvGeometry& g, double* output) {
  const double* src = cols.data();
  for (std::size_t c = 0; c < g.channels; ++c) {
    double* plane = output + c * g.in_h * g.in_w;
    for (std::size_t ki = 0; ki < g.k_h; ++ki) {
      for (std::size_t kj = 0; kj < g.k_w; ++kj) {
        for (std::size_t oi = 0; oi < g.out_h; ++oi) {
          const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(oi * g.stride + ki) -
                                    static_cast<std::ptrdiff_t>(g.pad_top);
          const bool row_ok = ii >= 0 && ii < static_cast<std::ptrdiff_t>(g.in_h);
          for (std::size_t oj = 0; oj < g.out_w; ++oj, ++src) {
            const std::ptrdiff_t jj =
                static_cast<std::ptrdiff_t>(oj * g.stride + kj) -
                static_cast<std::ptrdiff_t>(g.pad_left);
            if (row_ok && jj >= 0 && jj < static_cast<std::ptrdiff_t>(g.in_w)) {
              plane[ii * static_cast<std::ptrdiff_t>(g.in_w) + jj] += *src;
            }
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// matmul

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_rank(a, 2, "matmul", "a");
  detail::require_rank(b, 2, "matmul", "b");
  if (a.dim(1) != b.dim(0)) {
    throw std::invalid_argument("matmul: inner extents of " + to_string(a.shape()) +
                                " and " + to_string(b.shape()) + " disagree");
  }
  Tensor out(Shape{a.dim(0), b.dim(1)});
  detail::view(out, a.dim(0), b.dim(1)).noalias() =
      detail::view(a, a.dim(0), a.dim(1)) * detail::view(b, b.dim(0), b.dim(1));
  require_finite(out, "matmul");
  return out;
}

struct MatmulGrads {
  Tensor a, b;
};

/// ∂/∂a = g·bᵀ, ∂/∂b = aᵀ·g.
inline MatmulGrads matmul_backward(const Tensor& a, const Tensor& b,
                                   const Tensor& grad_out) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  MatmulGrads g{Tensor(a.shape()), Tensor(b.shape())};
  const auto go = detail::view(grad_out, m, n);
  detail::view(g.a, m, k).noalias() = go * detail::view(b, k, n).transpose();
  detail::view(g.b, k, n).noalias() = detail::view(a, m, k).transpose() * go;
  return g;
}

// ---------------------------------------------------------------------------
// conv2d: cross-correlation, kernels laid out [C_out, C_in, kH, kW]

inline ConvGeometry conv2d_geometry(const Tensor& input, const Tensor& kernels,
                                    std::size_t stride, Padding padding) {
  detail::require_rank(input, 3, "conv2d", "input");
  detail::require_rank(kernels, 4, "conv2d", "kernels");
  if (kernels.dim(1) != input.dim(0)) {
    throw std::invalid_argument("conv2d: kernels " + to_string(kernels.shape()) +
                                " expect " + std::to_string(kernels.dim(1)) +
                                " input channels but input " +
                                to_string(input.shape()) + " has " +
                                std::to_string(input.dim(0)));
  }
  return conv_geometry(input.dim(0), input.dim(1), input.dim(2), kernels.dim(2),
                       kernels.dim(3), stride, padding);
}

inline Tensor conv2d(const Tensor& input, const Tensor& kernels,
                     const Tensor& bias, std::size_t stride, Padding padding) {
  const ConvGeometry g = conv2d_geometry(input, kernels, stride, padding);
  const std::size_t c_out = kernels.dim(0);
  if (bias.size() != c_out) {
    throw std::invalid_argument("conv2d: bias " + to_string(bias.shape()) +
                                " does not match " + std::to_string(c_out) +
                                " output channels");
  }
  const Tensor cols = im2col(input.data(), g);
  Tensor out(Shape{c_out, g.out_h, g.out_w});
  auto o = detail::view(out, c_out, g.out_cells());
  o.noalias() = detail::view(kernels, c_out, g.patch_size()) *
                detail::view(cols, g.patch_size(), g.out_cells());
  for (std::size_t c = 0; c < c_out; ++c) o.row(c).array() += bias[c];
  require_finite(out, "conv2d");
  return out;
}

struct ConvGrads {
  Tensor input, kernels, bias;
};

inline ConvGrads conv2d_backward(const Tensor& input, const Tensor& kernels,
                                 const Tensor& grad_out, std::size_t stride,
                                 Padding padding) {
  const ConvGeometry g = conv2d_geometry(input, kernels, stride, padding);
  const std::size_t c_out = kernels.dim(0);
  const Tensor cols = im2col(input.data(), g);
  const auto go = detail::view(grad_out, c_out, g.out_cells());

  ConvGrads grads{Tensor(input.shape()), Tensor(kernels.shape()),
                  Tensor(Shape{c_out})};
  detail::view(grads.kernels, c_out, g.patch_size()).noalias() =
      go * detail::view(cols, g.patch_size(), g.out_cells()).transpose();
  for (std::size_t c = 0; c < c_out; ++c) grads.bias[c] = go.row(c).sum();

  Tensor dcols(Shape{g.patch_size(), g.out_cells()});
  detail::view(dcols, g.patch_size(), g.out_cells()).noalias() =
      detail::view(kernels, c_out, g.patch_size()).transpose() * go;
  col2im(dcols, g, grads.input.data());
  return grads;
}

// ---------------------------------------------------------------------------
// deconv2d: transposed convolution, kernels laid out [C_in, C_out, kH, kW].
// Output extent is (h-1)*stride + k; with k == stride that is h*stride and
// the kernel footprints tile the output without overlap.

inline ConvGeometry deconv2d_geometry(const Tensor& input, const Tensor& kernels,
                                      std::size_t stride) {
  detail::require_rank(input, 3, "deconv2d", "input");
  detail::require_rank(kernels, 4, "deconv2d", "kernels");
  if (stride < 1) throw std::invalid_argument("deconv2d: stride must be >= 1");
  if (kernels.dim(0) != input.dim(0)) {
    throw std::invalid_argument("deconv2d: kernels " + to_string(kernels.shape()) +
                                " expect " + std::to_string(kernels.dim(0)) +
                                " input channels but input " +
                                to_string(input.shape()) + " has " +
                                std::to_string(input.dim(0)));
  }
  ConvGeometry g;
  g.channels = kernels.dim(1);
  g.k_h = kernels.dim(2);
  g.k_w = kernels.dim(3);
  g.stride = stride;
  g.out_h = input.dim(1);
  g.out_w = input.dim(2);
  g.in_h = (input.dim(1) - 1) * stride + g.k_h;
  g.in_w = (input.dim(2) - 1) * stride + g.k_w;
  return g;
}

inline Tensor deconv2d(const Tensor& input, const Tensor& kernels,
                       const Tensor& bias, std::size_t stride) {
  const ConvGeometry g = deconv2d_geometry(input, kernels, stride);
  const std::size_t c_in = input.dim(0);
  const std::size_t c_out = g.channels;
  if (bias.size() != c_out) {
    throw std::invalid_argument("deconv2d: bias " + to_string(bias.shape()) +
                                " does not match " + std::to_string(c_out) +
                                " output channels");
  }
  Tensor cols(Shape{g.patch_size(), g.out_cells()});
  detail::view(cols, g.patch_size(), g.out_cells()).noalias() =
      detail::view(kernels, c_in, g.patch_size()).transpose() *
      detail::view(input, c_in, g.out_cells());
  Tensor out(Shape{c_out, g.in_h, g.in_w});
  col2im(cols, g, out.data());
  const std::size_t plane = g.in_h * g.in_w;
  for (std::size_t c = 0; c < c_out; ++c) {
    for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] += bias[c];
  }
  require_finite(out, "deconv2d");
  return out;
}

inline ConvGrads deconv2d_backward(const Tensor& input, const Tensor& kernels,
                                   const Tensor& grad_out, std::size_t stride) {
  const ConvGeometry g = deconv2d_geometry(input, kernels, stride);
  const std::size_t c_in = input.dim(0);
  const std::size_t c_out = g.channels;
  const Tensor gcols = im2col(grad_out.data(), g);
  const auto gc = detail::view(gcols, g.patch_size(), g.out_cells());

  ConvGrads grads{Tensor(input.shape()), Tensor(kernels.shape()),
                  Tensor(Shape{c_out})};
  detail::view(grads.input, c_in, g.out_cells()).noalias() =
      detail::view(kernels, c_in, g.patch_size()) * gc;
  detail::view(grads.kernels, c_in, g.patch_size()).noalias() =
      detail::view(input, c_in, g.out_cells()) * gc.transpose();
  const std::size_t plane = g.in_h * g.in_w;
  for (std::size_t c = 0; c < c_out; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < plane; ++i) s += grad_out[c * plane + i];
    grads.bias[c] = s;
  }
  return grads;
}

// ---------------------------------------------------------------------------
// maxpool2d

struct PoolResult {
  Tensor output;
  /// Flat input index of each output cell's maximum.
  std::vector<std::size_t> argmax;
};

inline PoolResult maxpool2d(const Tensor& input, std::size_t k,
                            std::size_t stride) {
  detail::require_rank(input, 3, "maxpool2d", "input");
  if (k < 1 || stride < 1) {
    throw std::invalid_argument("maxpool2d: window and stride must be >= 1");
  }
  const std::size_t channels = input.dim(0), h = input.dim(1), w = input.dim(2);
  auto check_extent = [&](std::size_t extent, const char* axis) {
    if (extent < k || (extent - k) % stride != 0) {
      std::size_t fixed = std::max(extent, k);
      while ((fixed - k) % stride != 0) ++fixed;
      throw std::invalid_argument(
          std::string("maxpool2d: ") + axis + " extent " + std::to_string(extent) +
          " does not tile with window " + std::to_string(k) + " stride " +
          std::to_string(stride) + "; pad by " + std::to_string(fixed - extent) +
          " to " + std::to_string(fixed));
    }
  };
  check_extent(h, "height");
  check_extent(w, "width");
  const std::size_t oh = (h - k) / stride + 1, ow = (w - k) / stride + 1;

  PoolResult r{Tensor(Shape{channels, oh, ow}), {}};
  r.argmax.resize(channels * oh * ow);
  std::size_t o = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t oi = 0; oi < oh; ++oi) {
      for (std::size_t oj = 0; oj < ow; ++oj, ++o) {
        std::size_t best = (c * h + oi * stride) * w + oj * stride;
        double best_v = input[best];
        for (std::size_t ki = 0; ki < k; ++ki) {
          for (std::size_t kj = 0; kj < k; ++kj) {
            const std::size_t idx = (c * h + oi * stride + ki) * w + oj * stride + kj;
            // strict comparison keeps the first index on ties
            if (input[idx] > best_v) {
              best_v = input[idx];
              best = idx;
            }
          }
        }
        r.output[o] = best_v;
        r.argmax[o] = best;
      }
    }
  }
  return r;
}

inline Tensor maxpool2d_backward(const Tensor& grad_out,
                                 const std::vector<std::size_t>& argmax,
                                 const Shape& input_shape) {
  Tensor grad(input_shape);
  for (std::size_t o = 0; o < argmax.size(); ++o) grad[argmax[o]] += grad_out[o];
  return grad;
}

// ---------------------------------------------------------------------------
// activations

enum class Activation { relu, tanh, hard_sigmoid };

inline double activate(double x, Activation kind) {
  switch (kind) {
    case Activation::relu:
      return x > 0.0 ? x : 0.0;
    case Activation::tanh:
      return std::tanh(x);
    case Activation::hard_sigmoid:
      return std::clamp(0.2 * x + 0.5, 0.0, 1.0);
  }
  return x;
}

/// Derivative given the pre-activation x and the activation value y.
inline double activation_slope(double x, double y, Activation kind) {
  switch (kind) {
    case Activation::relu:
      return x > 0.0 ? 1.0 : 0.0;
    case Activation::tanh:
      return 1.0 - y * y;
    case Activation::hard_sigmoid:
      return (x > -2.5 && x < 2.5) ? 0.2 : 0.0;
  }
  return 1.0;
}

inline Tensor activate(const Tensor& x, Activation kind) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = activate(x[i], kind);
  return y;
}

}  // namespace slacast

#endif  // SLACAST_PRIMITIVES_HPP
