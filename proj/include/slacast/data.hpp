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

#ifndef SLACAST_DATA_HPP
#define SLACAST_DATA_HPP

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "slacast/binary_io.hpp"
#include "slacast/random.hpp"

namespace slacast {

inline constexpr float kFillValue = -9999.0f;

struct YearMonth {
  int year = 1993;
  int month = 1;  // 1..12

  YearMonth plus(long months) const {
    const long index = static_cast<long>(year) * 12 + (month - 1) + months;
    const long y = index >= 0 ? index / 12 : (index - 11) / 12;
    return {static_cast<int>(y), static_cast<int>(index - y * 12) + 1};
  }
  long months_since(const YearMonth& origin) const {
    return (static_cast<long>(year) - origin.year) * 12 + (month - origin.month);
  }
  friend bool operator==(const YearMonth&, const YearMonth&) = default;
};

inline std::string to_string(const YearMonth& ym) {
  std::ostringstream os;
  os << ym.year << '-' << (ym.month < 10 ? "0" : "") << ym.month;
  return os.str();
}

/// Time-ordered stack of 2-D SLA fields in meters, month-major then row-major,
/// plus an ocean mask (1 = ocean, 0 = land). Land cells hold `fill` in every
/// month; ocean cells are finite. Values are held in double precision and
/// quantised to single precision only by save_slag().
class GridSeries {
 public:
  GridSeries() = default;
  GridSeries(std::size_t months, std::size_t height, std::size_t width)
      : months_(months), height_(height), width_(width),
        values_(months * height * width, 0.0), mask_(height * width, 1) {
    if (months == 0 || height == 0 || width == 0) {
      throw std::invalid_argument("grid series extents must be positive");
    }
  }

  std::size_t months() const { return months_; }
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t cells() const { return height_ * width_; }

  double& at(std::size_t t, std::size_t y, std::size_t x) {
    return values_[(t * height_ + y) * width_ + x];
  }
  double at(std::size_t t, std::size_t y, std::size_t x) const {
    return values_[(t * height_ + y) * width_ + x];
  }
  std::span<double> month(std::size_t t) {
    return std::span<double>(values_).subspan(t * cells(), cells());
  }
  std::span<const double> month(std::size_t t) const {
    return std::span<const double>(values_).subspan(t * cells(), cells());
  }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  std::span<std::uint8_t> mask() { return mask_; }
  std::span<const std::uint8_t> mask() const { return mask_; }
  bool ocean(std::size_t cell) const { return mask_[cell] != 0; }
  std::size_t ocean_cells() const {
    std::size_t n = 0;
    for (auto m : mask_) n += m != 0;
    return n;
  }

  /// Writes the fill value into every land cell of every month.
  void apply_mask() {
    for (std::size_t t = 0; t < months_; ++t) {
      auto f = month(t);
      for (std::size_t i = 0; i < cells(); ++i) {
        if (!mask_[i]) f[i] = fill;
      }
    }
  }

  void validate() const {
    if (values_.size() != months_ * cells() || mask_.size() != cells()) {
      throw std::logic_error("grid series storage does not match its extents");
    }
    for (std::size_t t = 0; t < months_; ++t) {
      auto f = month(t);
      for (std::size_t i = 0; i < cells(); ++i) {
        if (mask_[i] ? !std::isfinite(f[i]) : f[i] != static_cast<double>(fill)) {
          throw std::invalid_argument(
              std::string(mask_[i] ? "non-finite ocean value" : "land cell without fill") +
              " at month " + std::to_string(t) + ", cell " + std::to_string(i));
        }
      }
    }
  }

  bool same_grid(const GridSeries& other) const {
    return height_ == other.height_ && width_ == other.width_ &&
           std::equal(mask_.begin(), mask_.end(), other.mask_.begin());
  }

  /// Months [begin, begin+count) with the epoch shifted accordingly.
  GridSeries slice_months(std::size_t begin, std::size_t count) const {
    if (count == 0 || begin + count > months_) {
      throw std::out_of_range("month range [" + std::to_string(begin) + ", " +
                              std::to_string(begin + count) + ") outside series of " +
                              std::to_string(months_) + " months");
    }
    GridSeries out = empty_like(count);
    out.epoch = epoch.plus(static_cast<long>(begin));
    std::copy_n(values_.begin() + static_cast<std::ptrdiff_t>(begin * cells()),
                count * cells(), out.values_.begin());
    return out;
  }

  /// Same grid and metadata, `months` zero-valued months.
  GridSeries empty_like(std::size_t months) const {
    GridSeries out(months, height_, width_);
    out.copy_metadata(*this);
    out.apply_mask();
    return out;
  }

  void copy_metadata(const GridSeries& src) {
    lat0 = src.lat0;
    lon0 = src.lon0;
    dlat = src.dlat;
    dlon = src.dlon;
    epoch = src.epoch;
    fill = src.fill;
    mask_.assign(src.mask_.begin(), src.mask_.end());
  }

  float lat0 = 0.0f, lon0 = 0.0f;
  float dlat = 0.25f, dlon = 0.25f;
  YearMonth epoch{};
  float fill = kFillValue;

 private:
  std::size_t months_ = 0, height_ = 0, width_ = 0;
  std::vector<double> values_;
  std::vector<std::uint8_t> mask_;
};

// ---------------------------------------------------------------------------
// SLAG files
//
//   "SLAG" | u16 version=1 | u32 T,H,W | f32 lat0,lon0,dlat,dlon |
//   i16 epoch year | u8 epoch month | f32 fill | H·W mask bytes |
//   T·H·W f32, month-major then row-major. All integers little-endian.

inline constexpr char kSlagMagic[] = "SLAG";
inline constexpr std::uint16_t kSlagVersion = 1;
inline constexpr std::size_t kSlagHeaderBytes = 41;

inline io::ByteWriter encode_slag(const GridSeries& s) {
  io::ByteWriter w;
  w.bytes(kSlagMagic);
  w.u16(kSlagVersion);
  w.u32(static_cast<std::uint32_t>(s.months()));
  w.u32(static_cast<std::uint32_t>(s.height()));
  w.u32(static_cast<std::uint32_t>(s.width()));
  w.f32(s.lat0);
  w.f32(s.lon0);
  w.f32(s.dlat);
  w.f32(s.dlon);
  w.i16(static_cast<std::int16_t>(s.epoch.year));
  w.u8(static_cast<std::uint8_t>(s.epoch.month));
  w.f32(s.fill);
  for (auto m : s.mask()) w.u8(m ? 1 : 0);
  for (std::size_t t = 0; t < s.months(); ++t) {
    auto f = s.month(t);
    for (std::size_t i = 0; i < s.cells(); ++i) {
      w.f32(s.ocean(i) ? static_cast<float>(f[i]) : s.fill);
    }
  }
  return w;
}

inline void save_slag(const GridSeries& s, const std::filesystem::path& path) {
  encode_slag(s).write_file(path);
}

inline GridSeries decode_slag(io::ByteReader r) {
  const std::string magic = r.bytes(4, "magic");
  if (magic != kSlagMagic) throw io::FormatError("bad magic, expected SLAG", 0);
  const std::size_t version_at = r.offset();
  const std::uint16_t version = r.u16("version");
  if (version != kSlagVersion) {
    throw io::FormatError("unsupported SLAG version " + std::to_string(version),
                          version_at);
  }
  const std::size_t t = r.u32("T"), h = r.u32("H"), w = r.u32("W");
  if (t == 0 || h == 0 || w == 0) throw io::FormatError("zero extent in header", 6);
  GridSeries s(t, h, w);
  s.lat0 = r.f32("lat0");
  s.lon0 = r.f32("lon0");
  s.dlat = r.f32("dlat");
  s.dlon = r.f32("dlon");
  s.epoch.year = r.i16("epoch year");
  const std::size_t month_at = r.offset();
  s.epoch.month = r.u8("epoch month");
  if (s.epoch.month < 1 || s.epoch.month > 12) {
    throw io::FormatError("epoch month " + std::to_string(s.epoch.month) +
                              " outside 1..12",
                          month_at);
  }
  s.fill = r.f32("fill");

  const std::size_t expected = kSlagHeaderBytes + h * w + t * h * w * 4;
  if (r.size() != expected) {
    throw io::FormatError("SLAG size mismatch: expected " + std::to_string(expected) +
                              " bytes, file has " + std::to_string(r.size()),
                          std::min(r.size(), expected));
  }
  auto mask = s.mask();
  for (std::size_t i = 0; i < h * w; ++i) {
    const std::size_t at = r.offset();
    const std::uint8_t m = r.u8("mask");
    if (m > 1) throw io::FormatError("mask byte must be 0 or 1", at);
    mask[i] = m;
  }
  for (std::size_t k = 0; k < t; ++k) {
    auto f = s.month(k);
    for (std::size_t i = 0; i < h * w; ++i) {
      const std::size_t at = r.offset();
      const float v = r.f32("values");
      if (mask[i]) {
        if (!std::isfinite(v)) throw io::FormatError("non-finite ocean value", at);
      } else if (!(v == s.fill || (std::isnan(v) && std::isnan(s.fill)))) {
        throw io::FormatError("mask violation: land cell holds a value other than fill",
                              at);
      }
      f[i] = mask[i] ? static_cast<double>(v) : static_cast<double>(s.fill);
    }
  }
  return s;
}

inline GridSeries load_slag(const std::filesystem::path& path) {
  return decode_slag(io::ByteReader::from_file(path));
}

// ---------------------------------------------------------------------------
// partitions

struct YearRange {
  int first = 0;
  int last = -1;  // inclusive; last < first means empty
  bool empty() const { return last < first; }
  std::size_t months() const { return empty() ? 0 : 12u * (last - first + 1); }
};

struct SplitSpec {
  YearRange train, val, test;

  /// Consecutive ranges of the given lengths starting at first_year.
  static SplitSpec from_counts(int first_year, int train_years, int val_years,
                               int test_years) {
    SplitSpec s;
    s.train = {first_year, first_year + train_years - 1};
    s.val = {s.train.last + 1, s.train.last + val_years};
    s.test = {s.val.last + 1, s.val.last + test_years};
    return s;
  }

  /// Parses "a/b/c" year counts.
  static SplitSpec parse(const std::string& text, int first_year) {
    int a = 0, b = 0, c = 0;
    char s1 = 0, s2 = 0;
    std::istringstream in(text);
    if (!(in >> a >> s1 >> b >> s2 >> c) || s1 != '/' || s2 != '/' || !in.eof()) {
      throw std::invalid_argument("split must look like train/val/test years, got '" +
                                  text + "'");
    }
    return from_counts(first_year, a, b, c);
  }
};

struct MonthRange {
  std::size_t begin = 0;
  std::size_t count = 0;
  std::size_t end() const { return begin + count; }
};

/// Month index ranges (train, val, test) of `spec` within `series`.
inline std::array<MonthRange, 3> partition_ranges(const GridSeries& series,
                                                  const SplitSpec& spec) {
  const std::array<std::pair<const char*, YearRange>, 3> parts{
      {{"training", spec.train}, {"validation", spec.val}, {"test", spec.test}}};
  for (const auto& [name, r] : parts) {
    if (r.empty()) throw std::invalid_argument(std::string(name) + " partition is empty");
  }
  for (std::size_t i = 1; i < 3; ++i) {
    const int expect = parts[i - 1].second.last + 1;
    if (parts[i].second.first != expect) {
      throw std::invalid_argument(
          std::string(parts[i].second.first < expect ? "overlap" : "gap") +
          " between " + parts[i - 1].first + " and " + parts[i].first + " partitions");
    }
  }
  if (series.epoch.month != 1 || series.epoch.year != spec.train.first) {
    throw std::invalid_argument("series starts " + to_string(series.epoch) +
                                " but the split starts January " +
                                std::to_string(spec.train.first));
  }
  const std::size_t total =
      spec.train.months() + spec.val.months() + spec.test.months();
  if (total != series.months()) {
    throw std::invalid_argument("split covers " + std::to_string(total) +
                                " months but the series has " +
                                std::to_string(series.months()));
  }
  return {MonthRange{0, spec.train.months()},
          MonthRange{spec.train.months(), spec.val.months()},
          MonthRange{spec.train.months() + spec.val.months(), spec.test.months()}};
}

struct Partitions {
  GridSeries train, val, test;
};

inline Partitions split(const GridSeries& series, const SplitSpec& spec) {
  const auto r = partition_ranges(series, spec);
  return {series.slice_months(r[0].begin, r[0].count),
          series.slice_months(r[1].begin, r[1].count),
          series.slice_months(r[2].begin, r[2].count)};
}

/// Joins consecutive pieces of one grid back into a single series.
inline GridSeries concat(std::span<const GridSeries> parts) {
  if (parts.empty()) throw std::invalid_argument("concat: nothing to join");
  std::size_t months = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (!parts[i].same_grid(parts[0])) {
      throw std::invalid_argument("concat: piece " + std::to_string(i) +
                                  " is on a different grid");
    }
    if (parts[i].epoch != parts[0].epoch.plus(static_cast<long>(months))) {
      throw std::invalid_argument("concat: piece " + std::to_string(i) +
                                  " does not follow its predecessor");
    }
    months += parts[i].months();
  }
  GridSeries out = parts[0].empty_like(months);
  std::size_t t0 = 0;
  for (const GridSeries& p : parts) {
    std::copy(p.values().begin(), p.values().end(),
              out.values().begin() + static_cast<std::ptrdiff_t>(t0 * out.cells()));
    t0 += p.months();
  }
  return out;
}

// ---------------------------------------------------------------------------
// normalisation

/// Global mean/std over ocean cells.
struct Normalizer {
  double mean = 0.0;
  double std = 1.0;

  static Normalizer fit(const GridSeries& s) {
    double total = 0.0;
    std::size_t n = 0;
    for (std::size_t t = 0; t < s.months(); ++t) {
      auto f = s.month(t);
      for (std::size_t i = 0; i < s.cells(); ++i) {
        if (s.ocean(i)) {
          total += f[i];
          ++n;
        }
      }
    }
    if (n == 0) throw std::invalid_argument("normalize: series has no ocean cells");
    const double mu = total / static_cast<double>(n);
    double sq = 0.0;
    for (std::size_t t = 0; t < s.months(); ++t) {
      auto f = s.month(t);
      for (std::size_t i = 0; i < s.cells(); ++i) {
        if (s.ocean(i)) sq += (f[i] - mu) * (f[i] - mu);
      }
    }
    const double sd = std::sqrt(sq / static_cast<double>(n));
    // rounding leaves a residue of order 1e-17·|μ| on constant fields
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mu)))) {
      throw std::invalid_argument("normalize: zero variance");
    }
    return {mu, sd};
  }

  double forward(double meters) const { return (meters - mean) / std; }
  double inverse(double z) const { return z * std + mean; }
};

namespace detail {
template <class F>
GridSeries map_ocean(const GridSeries& s, F&& f) {
  GridSeries out = s;
  for (std::size_t t = 0; t < s.months(); ++t) {
    auto m = out.month(t);
    for (std::size_t i = 0; i < s.cells(); ++i) {
      if (s.ocean(i)) m[i] = f(m[i]);
    }
  }
  return out;
}
}  // namespace detail

inline std::pair<GridSeries, Normalizer> normalize(const GridSeries& s) {
  const Normalizer n = Normalizer::fit(s);
  return {detail::map_ocean(s, [&](double v) { return n.forward(v); }), n};
}

inline GridSeries denormalize(const GridSeries& s, const Normalizer& n) {
  return detail::map_ocean(s, [&](double v) { return n.inverse(v); });
}

// ---------------------------------------------------------------------------
// CSV export of one cell

inline void write_cell_csv(const GridSeries& s, std::size_t y, std::size_t x,
                           std::ostream& out) {
  if (y >= s.height() || x >= s.width()) {
    throw std::out_of_range("cell (" + std::to_string(y) + ", " + std::to_string(x) +
                            ") outside the grid");
  }
  out << "year,month,sla_m\n";
  out.precision(9);
  for (std::size_t t = 0; t < s.months(); ++t) {
    const YearMonth ym = s.epoch.plus(static_cast<long>(t));
    out << ym.year << ',' << ym.month << ',' << s.at(t, y, x) << '\n';
  }
}

// ---------------------------------------------------------------------------
// synthetic fields

enum class SynthKind { harmonic, wave, mixed };

inline SynthKind parse_synth_kind(const std::string& name) {
  if (name == "harmonic") return SynthKind::harmonic;
  if (name == "wave") return SynthKind::wave;
  if (name == "mixed") return SynthKind::mixed;
  throw std::invalid_argument("unknown synthetic kind '" + name +
                              "' (harmonic, wave, mixed)");
}

/// Per-cell coefficients in the basis
/// [1, t, t², sin(2πt/12), cos(2πt/12), sin(4πt/12), cos(4πt/12)], t in months.
using HarmonicCoefficients = std::array<double, 7>;

inline std::array<double, 7> harmonic_basis(double t) {
  const double w = 2.0 * std::numbers::pi / 12.0;
  return {1.0, t, t * t, std::sin(w * t), std::cos(w * t), std::sin(2 * w * t),
          std::cos(2 * w * t)};
}

struct SynthOptions {
  SynthKind kind = SynthKind::mixed;
  std::size_t height = 32, width = 32, months = 120;
  std::uint64_t seed = 1;
  double offset = 0.05;      // m
  double trend = 3e-4;       // m/month
  double acceleration = 1e-6;  // m/month²
  double annual = 0.08;      // m
  double semiannual = 0.03;  // m
  double wave = 0.1;         // m
  double noise = 0.0;        // m, std of the correlated noise
  bool land = false;
  YearMonth epoch{1993, 1};
  float lat0 = -15.0f, lon0 = 110.0f, dlat = 0.25f, dlon = 0.25f;
};

struct SyntheticSeries {
  GridSeries series;
  std::vector<HarmonicCoefficients> coefficients;  // per cell, zero on land
};

namespace detail {

/// Sum of a few low-wavenumber plane waves, scaled into [-1, 1].
inline std::vector<double> smooth_field(std::size_t h, std::size_t w, Rng& rng) {
  constexpr int kModes = 4;
  std::array<std::array<double, 4>, kModes> modes{};
  for (auto& m : modes) {
    m = {static_cast<double>(rng.below(3)), static_cast<double>(rng.below(3)),
         rng.uniform(0.0, 2.0 * std::numbers::pi), rng.uniform(0.5, 1.0)};
  }
  std::vector<double> f(h * w);
  double peak = 0.0;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double v = 0.0;
      for (const auto& m : modes) {
        v += m[3] * std::cos(2.0 * std::numbers::pi *
                                 (m[0] * static_cast<double>(y) / static_cast<double>(h) +
                                  m[1] * static_cast<double>(x) / static_cast<double>(w)) +
                             m[2]);
      }
      f[y * w + x] = v;
      peak = std::max(peak, std::abs(v));
    }
  }
  if (peak > 0.0) {
    for (double& v : f) v /= peak;
  }
  return f;
}

}  // namespace detail

/// Deterministic desk-scale stand-in for gridded altimetry: per-cell offset,
/// trend, acceleration, annual and semiannual harmonics (kinds harmonic and
/// mixed), a wave packet moving one cell west per month with wrap-around
/// (kinds wave and mixed), spatially correlated noise, and an optional land
/// blob.
inline SyntheticSeries synthesize(const SynthOptions& o) {
  if (o.height % 4 != 0 || o.width % 4 != 0) {
    throw std::invalid_argument("synthetic grid extents must be divisible by 4");
  }
  const std::size_t h = o.height, w = o.width, cells = h * w;
  Rng rng(o.seed);
  SyntheticSeries out{GridSeries(o.months, h, w), std::vector<HarmonicCoefficients>(cells)};
  GridSeries& s = out.series;
  s.epoch = o.epoch;
  s.lat0 = o.lat0;
  s.lon0 = o.lon0;
  s.dlat = o.dlat;
  s.dlon = o.dlon;

  if (o.land) {
    const double cy = 0.8 * static_cast<double>(h), cx = 0.2 * static_cast<double>(w);
    const double ry = 0.15 * static_cast<double>(h), rx = 0.2 * static_cast<double>(w);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double dy = (static_cast<double>(y) + 0.5 - cy) / ry;
        const double dx = (static_cast<double>(x) + 0.5 - cx) / rx;
        if (dy * dy + dx * dx < 1.0) s.mask()[y * w + x] = 0;
      }
    }
  }

  const bool harmonics = o.kind != SynthKind::wave;
  const bool wave = o.kind != SynthKind::harmonic;

  if (harmonics) {
    const std::array<double, 7> amp{o.offset,     o.trend,      o.acceleration,
                                    o.annual,     o.annual,     o.semiannual,
                                    o.semiannual};
    for (std::size_t k = 0; k < 7; ++k) {
      const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
      const auto field = detail::smooth_field(h, w, rng);
      for (std::size_t i = 0; i < cells; ++i) {
        if (s.ocean(i)) out.coefficients[i][k] = sign * amp[k] * (1.25 + 0.75 * field[i]);
      }
    }
  }

  // wave profile: two zonal wavenumbers, peak-normalised
  std::vector<double> profile(w, 0.0);
  if (wave) {
    const double p1 = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double p2 = rng.uniform(0.0, 2.0 * std::numbers::pi);
    double peak = 0.0;
    for (std::size_t x = 0; x < w; ++x) {
      const double phase = 2.0 * std::numbers::pi * static_cast<double>(x) / static_cast<double>(w);
      profile[x] = std::cos(phase + p1) + 0.5 * std::cos(2.0 * phase + p2);
      peak = std::max(peak, std::abs(profile[x]));
    }
    for (double& v : profile) v /= peak;
  }
  const std::size_t band_begin = h / 4, band_rows = h / 2;

  std::vector<double> white(cells), smooth(cells);
  for (std::size_t t = 0; t < o.months; ++t) {
    const auto basis = harmonic_basis(static_cast<double>(t));
    auto f = s.month(t);
    if (o.noise > 0.0) {
      for (double& v : white) v = rng.normal();
      // 3×3 box filter with wrap-around; 1/3 restores unit variance
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          double acc = 0.0;
          for (std::size_t dy = 0; dy < 3; ++dy) {
            for (std::size_t dx = 0; dx < 3; ++dx) {
              acc += white[((y + h + dy - 1) % h) * w + (x + w + dx - 1) % w];
            }
          }
          smooth[y * w + x] = acc / 3.0;
        }
      }
    }
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t i = y * w + x;
        double v = 0.0;
        for (std::size_t k = 0; k < 7; ++k) v += out.coefficients[i][k] * basis[k];
        if (wave && y >= band_begin && y < band_begin + band_rows) {
          const double envelope =
              std::sin(std::numbers::pi * (static_cast<double>(y - band_begin) + 0.5) /
                       static_cast<double>(band_rows));
          v += o.wave * envelope * profile[(x + t) % w];
        }
        if (o.noise > 0.0) v += o.noise * smooth[i];
        f[i] = v;
      }
    }
  }
  s.apply_mask();
  return out;
}

inline GridSeries synth(const SynthOptions& o) { return synthesize(o).series; }

}  // namespace slacast

#endif  // SLACAST_DATA_HPP
