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

#ifndef SLACAST_TENSOR_HPP
#define SLACAST_TENSOR_HPP

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace slacast {

using Shape = std::vector<std::size_t>;

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

inline std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

/// Dense row-major array of doubles with shape metadata.
///
/// Every extent is positive and the number of stored values always equals the
/// product of the extents. Tensors are plain values: copy to share, mutate
/// only through the non-const accessors while the tensor is being built.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(checked_count(shape_), fill) {}

  Tensor(Shape shape, const std::vector<double>& values)
      : shape_(std::move(shape)), data_(values.begin(), values.end()) {
    if (data_.size() != checked_count(shape_)) {
      throw std::invalid_argument("tensor of shape " + to_string(shape_) +
                                  " needs " +
                                  std::to_string(element_count(shape_)) +
                                  " values, got " +
                                  std::to_string(data_.size()));
    }
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
  static Tensor scalar(double v) { return Tensor(Shape{1}, v); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  double& operator()(std::size_t i, std::size_t j) {
    return data_[i * shape_[1] + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * shape_[1] + j];
  }
  double& operator()(std::size_t c, std::size_t i, std::size_t j) {
    return data_[(c * shape_[1] + i) * shape_[2] + j];
  }
  double operator()(std::size_t c, std::size_t i, std::size_t j) const {
    return data_[(c * shape_[1] + i) * shape_[2] + j];
  }
  double& operator()(std::size_t n, std::size_t c, std::size_t i,
                     std::size_t j) {
    return data_[((n * shape_[1] + c) * shape_[2] + i) * shape_[3] + j];
  }
  double operator()(std::size_t n, std::size_t c, std::size_t i,
                    std::size_t j) const {
    return data_[((n * shape_[1] + c) * shape_[2] + i) * shape_[3] + j];
  }

  /// Same values, new extents; the element count must match.
  Tensor reshaped(Shape shape) const& {
    Tensor out = *this;
    out.reshape(std::move(shape));
    return out;
  }
  Tensor reshaped(Shape shape) && {
    reshape(std::move(shape));
    return std::move(*this);
  }
  void reshape(Shape shape) {
    if (checked_count(shape) != data_.size()) {
      throw std::invalid_argument("cannot reshape " + to_string(shape_) +
                                  " to " + to_string(shape));
    }
    shape_ = std::move(shape);
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const noexcept {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  Tensor& operator+=(const Tensor& other) {
    require_same_shape(other, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
  }
  Tensor& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }

  void require_same_shape(const Tensor& other, const char* what) const {
    if (shape_ != other.shape_) {
      throw std::invalid_argument(std::string(what) + ": shapes " +
                                  to_string(shape_) + " and " +
                                  to_string(other.shape_) + " differ");
    }
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  static std::size_t checked_count(const Shape& shape) {
    if (shape.empty()) throw std::invalid_argument("tensor shape is empty");
    for (std::size_t extent : shape) {
      if (extent == 0) {
        throw std::invalid_argument("tensor shape " + to_string(shape) +
                                    " has a zero extent");
      }
    }
    return element_count(shape);
  }

  Shape shape_;
  // Eigen's vectorised kernels peel a different number of leading elements
  // depending on buffer alignment, which changes rounding; fixed alignment
  // keeps results bit-reproducible from run to run.
  std::vector<double, Eigen::aligned_allocator<double>> data_;
};

inline double dot(const Tensor& a, const Tensor& b) {
  a.require_same_shape(b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return s;
}

inline double max_abs(const Tensor& a) {
  double m = 0.0;
  for (double v : a.values()) m = std::max(m, std::abs(v));
  return m;
}

inline void require_finite(const Tensor& t, const char* producer) {
  if (!t.all_finite()) {
    throw std::domain_error(std::string(producer) +
                            " produced a non-finite value for shape " +
                            to_string(t.shape()));
  }
}

}  // namespace slacast

#endif  // SLACAST_TENSOR_HPP
