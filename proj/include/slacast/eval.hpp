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

// RMSE scoring per partition and per cell, the per-kind feeding protocols, and
// PPM heatmaps.
//
// The scalar RMSE pools every ocean cell-month: sqrt(Σ (p−y)² / N). It is not
// the mean of the per-cell map.

#ifndef SLACAST_EVAL_HPP
#define SLACAST_EVAL_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "slacast/baseline.hpp"
#include "slacast/data.hpp"
#include "slacast/models.hpp"
#include "slacast/parallel.hpp"

namespace slacast {

struct RmseResult {
  double scalar = 0.0;  // m
  GridSeries map;       // one month, per-cell RMSE in m, fill on land
};

inline RmseResult rmse(const GridSeries& pred, const GridSeries& truth) {
  if (!pred.same_grid(truth) || pred.months() != truth.months()) {
    throw std::invalid_argument(
        "rmse: prediction " + std::to_string(pred.months()) + "x" +
        std::to_string(pred.height()) + "x" + std::to_string(pred.width()) +
        " does not match truth " + std::to_string(truth.months()) + "x" +
        std::to_string(truth.height()) + "x" + std::to_string(truth.width()) +
        " (or the masks differ)");
  }
  if (truth.ocean_cells() == 0) throw std::invalid_argument("rmse: no ocean cells");
  RmseResult r{0.0, truth.empty_like(1)};
  r.map.epoch = truth.epoch;
  std::vector<double> cell_se(truth.cells(), 0.0);
  for (std::size_t t = 0; t < truth.months(); ++t) {
    const auto p = pred.month(t);
    const auto y = truth.month(t);
    for (std::size_t i = 0; i < truth.cells(); ++i) {
      if (!truth.ocean(i)) continue;
      const double d = p[i] - y[i];
      cell_se[i] += d * d;
    }
  }
  double total = 0.0;
  auto map = r.map.month(0);
  const double months = static_cast<double>(truth.months());
  for (std::size_t i = 0; i < truth.cells(); ++i) {
    if (!truth.ocean(i)) continue;
    total += cell_se[i];
    map[i] = std::sqrt(cell_se[i] / months);
  }
  r.scalar = std::sqrt(total / (months * static_cast<double>(truth.ocean_cells())));
  return r;
}

// ---------------------------------------------------------------------------
// reports

struct PartitionScore {
  std::string name;
  MonthRange range;            // partition months within the full series
  std::size_t first_scored = 0;  // first month index with a prediction
  std::size_t true_inputs = 0;   // distinct true months fed to the model
  double rmse = 0.0;             // m
  GridSeries forecast;           // scored months only
  GridSeries map;                // per-cell RMSE
  std::size_t predicted() const { return range.end() - first_scored; }
};

struct EvalReport {
  std::string model;
  std::vector<PartitionScore> partitions;

  const PartitionScore& partition(const std::string& name) const {
    for (const auto& p : partitions) {
      if (p.name == name) return p;
    }
    throw std::out_of_range("report has no partition named " + name);
  }

  /// model,partition,rmse_m followed by the protocol bookkeeping.
  void write_csv(std::ostream& out, const YearMonth& epoch) const {
    out << "model,partition,rmse_m,first_predicted,predicted_months,true_input_months\n";
    out.precision(9);
    for (const auto& p : partitions) {
      out << model << ',' << p.name << ',' << p.rmse << ','
          << to_string(epoch.plus(static_cast<long>(p.first_scored))) << ','
          << p.predicted() << ',' << p.true_inputs << '\n';
    }
  }
};

inline constexpr std::array<const char*, 3> kPartitionNames{"train", "val", "test"};

struct EvalOptions {
  std::size_t warmup = 12;  // true months replayed before each month-ahead forecast
  std::size_t cycles = 0;   // closed-loop cycles per partition; 0 covers the partition
};

namespace detail {

inline PartitionScore score(std::string name, const MonthRange& range, std::size_t first,
                            std::size_t true_inputs, GridSeries forecast,
                            const GridSeries& series) {
  const GridSeries truth = series.slice_months(first, forecast.months());
  RmseResult r = rmse(forecast, truth);
  return {std::move(name), range, first, true_inputs, r.scalar, std::move(forecast),
          std::move(r.map)};
}

inline void require_length(const char* name, std::size_t have, std::size_t need,
                           const char* why) {
  if (have < need) {
    throw std::invalid_argument(std::string(name) + " partition has " +
                                std::to_string(have) + " usable months; " + why +
                                " needs at least " + std::to_string(need));
  }
}

inline PartitionScore month_ahead(const Model& model, const GridSeries& series,
                                  const MonthRange& range, const char* name,
                                  std::size_t warmup) {
  const std::size_t first = std::max<std::size_t>(range.begin, 1);
  require_length(name, range.end() > first ? range.end() - first : 0, 1,
                 "a month-ahead forecast");
  const std::size_t count = range.end() - first;
  const Tensor mask = mask_tensor(series);
  GridSeries forecast = series.slice_months(first, count);
  parallel_for(count, [&](std::size_t k) {
    const std::size_t target = first + k;
    const std::size_t begin = target > warmup ? target - warmup : 0;
    std::vector<Tensor> frames;
    for (std::size_t t = begin; t < target; ++t) {
      frames.push_back(frame_tensor(series, t, model.normalizer));
    }
    const auto out = infer(model, frames, mask);
    write_month(forecast, k, out.back(), model.normalizer);
  });
  const std::size_t inputs_begin = first > warmup ? first - warmup : 0;
  return score(name, range, first, range.end() - 1 - inputs_begin, std::move(forecast),
               series);
}

inline PartitionScore sequence_windows(const Model& model, const GridSeries& series,
                                       const MonthRange& range, const char* name) {
  const std::size_t len = model.config().sequence_length();
  const std::size_t first = std::max(range.begin, len);
  require_length(name, range.end() > first ? range.end() - first : 0, 1,
                 "a sequence forecast after one true window");
  const std::size_t count = range.end() - first;
  const std::size_t windows = (count + len - 1) / len;
  const Tensor mask = mask_tensor(series);
  GridSeries forecast = series.slice_months(first, count);
  parallel_for(windows, [&](std::size_t w) {
    const std::size_t begin = first - len + w * len;
    std::vector<Tensor> frames;
    for (std::size_t t = begin; t < begin + len; ++t) {
      frames.push_back(frame_tensor(series, t, model.normalizer));
    }
    const auto out = infer(model, frames, mask);
    for (std::size_t j = 0; j < len && w * len + j < count; ++j) {
      write_month(forecast, w * len + j, out[j], model.normalizer);
    }
  });
  return score(name, range, first, windows * len, std::move(forecast), series);
}

inline PartitionScore closed_loop(const Model& model, const GridSeries& series,
                                  const MonthRange& range, const char* name,
                                  std::size_t max_cycles) {
  const std::size_t len = model.config().sequence_length();
  require_length(name, range.count, len + 1, "a true seed window plus one forecast month");
  const std::size_t first = range.begin + len;
  std::size_t cycles = (range.end() - first + len - 1) / len;
  if (max_cycles > 0) cycles = std::min(cycles, max_cycles);
  const std::size_t count = std::min(cycles * len, range.end() - first);
  const Forecast fc = rollout_closed_loop(model, series.slice_months(range.begin, len), cycles);
  GridSeries forecast = fc.fields.slice_months(0, count);
  return score(name, range, first, fc.true_inputs.size(), std::move(forecast), series);
}

}  // namespace detail

/// Scores a trained model on every partition with the feeding cadence of its
/// kind: month-ahead kinds replay `warmup` true months before each target;
/// seq_lstm consumes one true window per 9 predicted months; seq_lstm_p seeds
/// once from the first 9 months of each partition and then feeds back its own
/// predictions. Months without enough history before them (the start of the
/// series) are skipped, not padded.
inline EvalReport evaluate_protocol(const Model& model, ModelKind kind,
                                    const GridSeries& series,
                                    const std::array<MonthRange, 3>& ranges,
                                    const EvalOptions& options = {}) {
  detail::require_grid(model, series);
  const bool sequence_model = is_sequence_kind(model.config().kind);
  if (sequence_model != is_sequence_kind(kind)) {
    throw std::invalid_argument("cannot evaluate a " + to_string(model.config().kind) +
                                " model with the " + to_string(kind) + " protocol");
  }
  EvalReport report{to_string(kind), {}};
  for (std::size_t p = 0; p < 3; ++p) {
    const char* name = kPartitionNames[p];
    switch (kind) {
      case ModelKind::lstm:
      case ModelKind::cnn_convlstm:
        report.partitions.push_back(
            detail::month_ahead(model, series, ranges[p], name, options.warmup));
        break;
      case ModelKind::seq_lstm:
        report.partitions.push_back(detail::sequence_windows(model, series, ranges[p], name));
        break;
      case ModelKind::seq_lstm_p:
        report.partitions.push_back(
            detail::closed_loop(model, series, ranges[p], name, options.cycles));
        break;
    }
  }
  return report;
}

inline EvalReport evaluate_protocol(const Model& model, const GridSeries& series,
                                    const std::array<MonthRange, 3>& ranges,
                                    const EvalOptions& options = {}) {
  return evaluate_protocol(model, model.config().kind, series, ranges, options);
}

/// The regression is fitted to the training partition and extrapolated over
/// the whole series; no true month enters after the fit.
inline EvalReport evaluate_baseline(const HarmonicModel& fitted, const GridSeries& series,
                                    const std::array<MonthRange, 3>& ranges) {
  const long origin = series.epoch.months_since(fitted.origin);
  EvalReport report{"baseline", {}};
  for (std::size_t p = 0; p < 3; ++p) {
    GridSeries forecast = predict_baseline(
        fitted, origin + static_cast<long>(ranges[p].begin), ranges[p].count);
    report.partitions.push_back(detail::score(kPartitionNames[p], ranges[p], ranges[p].begin,
                                              p == 0 ? ranges[0].count : 0,
                                              std::move(forecast), series));
  }
  return report;
}

inline EvalReport evaluate_baseline(const GridSeries& series,
                                    const std::array<MonthRange, 3>& ranges) {
  return evaluate_baseline(
      fit_baseline(series.slice_months(ranges[0].begin, ranges[0].count)), series, ranges);
}

/// Consecutive train/val/test ranges of the given month counts.
inline std::array<MonthRange, 3> month_ranges(const GridSeries& series, std::size_t train,
                                              std::size_t val, std::size_t test) {
  if (train == 0 || val == 0 || test == 0) {
    throw std::invalid_argument("every partition needs at least one month");
  }
  if (train + val + test != series.months()) {
    throw std::invalid_argument("split covers " + std::to_string(train + val + test) +
                                " months but the series has " +
                                std::to_string(series.months()));
  }
  return {MonthRange{0, train}, MonthRange{train, val}, MonthRange{train + val, test}};
}

// ---------------------------------------------------------------------------
// heatmaps

struct Pixmap {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, top row first

  std::array<std::uint8_t, 3> pixel(std::size_t row, std::size_t col) const {
    const std::size_t i = 3 * (row * width + col);
    return {rgb[i], rgb[i + 1], rgb[i + 2]};
  }

  /// Binary PPM (P6).
  void write(std::ostream& out) const {
    out << "P6\n" << width << ' ' << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(rgb.data()),
              static_cast<std::streamsize>(rgb.size()));
  }
  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    write(out);
  }
};

inline constexpr std::uint8_t kLandGray = 128;

/// Blue at `lo`, white at the midpoint, red at `hi`; values outside are
/// clamped.
inline std::array<std::uint8_t, 3> diverging_color(double v, double lo, double hi) {
  const double s = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
  auto level = [](double a) { return static_cast<std::uint8_t>(std::lround(255.0 * a)); };
  if (s < 0.5) {
    const std::uint8_t c = level(s / 0.5);
    return {c, c, 255};
  }
  const std::uint8_t c = level((1.0 - s) / 0.5);
  return {255, c, c};
}

/// One pixel per cell with north at the top.
inline Pixmap render_heatmap(const GridSeries& field, std::size_t month = 0,
                             double lo = -0.3, double hi = 0.3) {
  if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi)) {
    throw std::invalid_argument("heatmap bounds must be finite with min < max, got [" +
                                std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
  if (month >= field.months()) {
    throw std::out_of_range("month " + std::to_string(month) + " outside series of " +
                            std::to_string(field.months()));
  }
  Pixmap img{field.width(), field.height(), {}};
  img.rgb.resize(3 * field.cells());
  const auto f = field.month(month);
  const bool flip = field.dlat > 0.0f;  // row 0 is the southern edge
  for (std::size_t y = 0; y < field.height(); ++y) {
    const std::size_t row = flip ? field.height() - 1 - y : y;
    for (std::size_t x = 0; x < field.width(); ++x) {
      const std::size_t i = y * field.width() + x;
      std::array<std::uint8_t, 3> c{kLandGray, kLandGray, kLandGray};
      if (field.ocean(i)) {
        if (!std::isfinite(f[i])) {
          throw std::invalid_argument("heatmap: non-finite value at cell " + std::to_string(i));
        }
        c = diverging_color(f[i], lo, hi);
      }
      std::copy(c.begin(), c.end(), img.rgb.begin() + static_cast<std::ptrdiff_t>(3 * (row * img.width + x)));
    }
  }
  return img;
}

}  // namespace slacast

#endif  // SLACAST_EVAL_HPP
