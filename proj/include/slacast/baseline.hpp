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

// Per-cell harmonic regression: offset, trend, acceleration, annual and
// semiannual sine/cosine, with t in months from the first training month.

#ifndef SLACAST_BASELINE_HPP
#define SLACAST_BASELINE_HPP

#include <array>
#include <cstddef>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "slacast/data.hpp"

namespace slacast {

inline constexpr std::size_t kHarmonicTerms = 7;
inline constexpr std::array<const char*, kHarmonicTerms> kHarmonicNames{
    "a0", "a1", "a2", "s1", "c1", "s2", "c2"};

struct HarmonicModel {
  std::size_t height = 0, width = 0;
  std::vector<std::uint8_t> mask;
  std::vector<HarmonicCoefficients> coefficients;  // one per cell; zeros on land
  YearMonth origin{};                              // t = 0
  float lat0 = 0.0f, lon0 = 0.0f, dlat = 0.25f, dlon = 0.25f;
  float fill = kFillValue;

  std::size_t cells() const { return height * width; }
  const HarmonicCoefficients& at(std::size_t y, std::size_t x) const {
    return coefficients[y * width + x];
  }

  /// lon,lat,a0,...,c2 for every ocean cell.
  void write_csv(std::ostream& out) const {
    out << "lon,lat";
    for (const char* n : kHarmonicNames) out << ',' << n;
    out << '\n';
    out.precision(17);
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        const std::size_t i = y * width + x;
        if (!mask[i]) continue;
        out << lon0 + static_cast<double>(x) * dlon << ','
            << lat0 + static_cast<double>(y) * dlat;
        for (double c : coefficients[i]) out << ',' << c;
        out << '\n';
      }
    }
  }
};

/// Least-squares fit of every ocean cell. The polynomial columns use t
/// centred on the training span and scaled to [-1, 1]; coefficients are mapped
/// back to the raw month axis before returning.
inline HarmonicModel fit_baseline(const GridSeries& train) {
  const std::size_t n = train.months();
  if (n < kHarmonicTerms) {
    throw std::invalid_argument("baseline fit needs at least 7 months, got " +
                                std::to_string(n));
  }
  const double centre = 0.5 * static_cast<double>(n - 1);
  const double scale = centre;

  Eigen::MatrixXd design(static_cast<Eigen::Index>(n), kHarmonicTerms);
  for (std::size_t t = 0; t < n; ++t) {
    const auto raw = harmonic_basis(static_cast<double>(t));
    const double u = (static_cast<double>(t) - centre) / scale;
    const auto r = static_cast<Eigen::Index>(t);
    design(r, 0) = 1.0;
    design(r, 1) = u;
    design(r, 2) = u * u;
    for (std::size_t k = 3; k < kHarmonicTerms; ++k) {
      design(r, static_cast<Eigen::Index>(k)) = raw[k];
    }
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < static_cast<Eigen::Index>(kHarmonicTerms)) {
    throw std::invalid_argument("baseline design matrix is rank deficient (rank " +
                                std::to_string(qr.rank()) + " of 7)");
  }

  std::vector<std::size_t> ocean;
  for (std::size_t i = 0; i < train.cells(); ++i) {
    if (train.ocean(i)) ocean.push_back(i);
  }
  if (ocean.empty()) throw std::invalid_argument("baseline fit: no ocean cells");
  Eigen::MatrixXd rhs(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(ocean.size()));
  for (std::size_t t = 0; t < n; ++t) {
    const auto f = train.month(t);
    for (std::size_t j = 0; j < ocean.size(); ++j) {
      rhs(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) = f[ocean[j]];
    }
  }
  const Eigen::MatrixXd beta = qr.solve(rhs);

  HarmonicModel m;
  m.height = train.height();
  m.width = train.width();
  m.mask.assign(train.mask().begin(), train.mask().end());
  m.coefficients.assign(train.cells(), HarmonicCoefficients{});
  m.origin = train.epoch;
  m.lat0 = train.lat0;
  m.lon0 = train.lon0;
  m.dlat = train.dlat;
  m.dlon = train.dlon;
  m.fill = train.fill;
  for (std::size_t j = 0; j < ocean.size(); ++j) {
    const auto col = static_cast<Eigen::Index>(j);
    // b0 + b1·u + b2·u², u = (t − c)/s
    const double b0 = beta(0, col), b1 = beta(1, col), b2 = beta(2, col);
    HarmonicCoefficients& c = m.coefficients[ocean[j]];
    c[0] = b0 - b1 * centre / scale + b2 * centre * centre / (scale * scale);
    c[1] = b1 / scale - 2.0 * b2 * centre / (scale * scale);
    c[2] = b2 / (scale * scale);
    for (std::size_t k = 3; k < kHarmonicTerms; ++k) {
      c[k] = beta(static_cast<Eigen::Index>(k), col);
    }
  }
  return m;
}

/// Evaluates the model for `count` months starting `first_month` months after
/// the fit origin (negative values reach back before it).
inline GridSeries predict_baseline(const HarmonicModel& model, long first_month,
                                   std::size_t count) {
  GridSeries out(count, model.height, model.width);
  std::copy(model.mask.begin(), model.mask.end(), out.mask().begin());
  out.lat0 = model.lat0;
  out.lon0 = model.lon0;
  out.dlat = model.dlat;
  out.dlon = model.dlon;
  out.fill = model.fill;
  out.epoch = model.origin.plus(first_month);
  for (std::size_t t = 0; t < count; ++t) {
    const auto basis = harmonic_basis(static_cast<double>(first_month) + static_cast<double>(t));
    auto f = out.month(t);
    for (std::size_t i = 0; i < model.cells(); ++i) {
      if (!model.mask[i]) {
        f[i] = model.fill;
        continue;
      }
      double v = 0.0;
      for (std::size_t k = 0; k < kHarmonicTerms; ++k) v += model.coefficients[i][k] * basis[k];
      f[i] = v;
    }
  }
  return out;
}

}  // namespace slacast

#endif  // SLACAST_BASELINE_HPP
