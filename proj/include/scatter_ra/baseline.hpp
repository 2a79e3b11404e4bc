#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <span>
#include <vector>

#include "core_data.hpp"
#include "error.hpp"
#include "fft.hpp"

namespace scatter_ra {

inline constexpr std::size_t kDefaultThetaRank = 2;
inline constexpr double kDefaultCutoffUm = 80.0;
// Gradients at or beyond this magnitude are refused by integrate().
inline constexpr double kMaxGradientDeg = 89.9;

constexpr double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }
constexpr double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }

// ---------------------------------------------------------------------------
// Thresholding
// ---------------------------------------------------------------------------

/// Value at 1-based position `rank` of the sorted row.
template <class T>
double rank_value(std::span<const T> row, std::size_t rank) {
  if (rank < 1 || rank > row.size()) {
    throw Error(ErrorCode::invalid_argument,
                "threshold rank " + std::to_string(rank) + " outside [1, " +
                    std::to_string(row.size()) + "]");
  }
  std::vector<T> scratch(row.begin(), row.end());
  auto nth = scratch.begin() + static_cast<std::ptrdiff_t>(rank - 1);
  std::nth_element(scratch.begin(), nth, scratch.end());
  return static_cast<double>(*nth);
}

/// Subtracts the rank-th smallest value from each entry and clamps at zero.
template <class T>
std::vector<double> threshold_row(std::span<const T> row, std::size_t rank = kDefaultThetaRank) {
  const double floor = rank_value(row, rank);
  std::vector<double> out(row.size());
  std::ranges::transform(row, out.begin(),
                         [floor](T v) { return std::max(0.0, static_cast<double>(v) - floor); });
  return out;
}

inline RealMatrix threshold(const LaserReading& reading, std::size_t rank = kDefaultThetaRank) {
  RealMatrix out(reading.channels(), reading.timesteps());
  for (std::size_t c = 0; c < reading.channels(); ++c) {
    const auto row = threshold_row(reading.row(c), rank);
    std::ranges::copy(row, out.row(c).begin());
  }
  return out;
}

/// Integer-valued thresholding that keeps the 8-bit representation (the
/// result of subtracting a row value from 8-bit counts stays in [0, 255]).
inline LaserReading threshold_counts(const LaserReading& reading, std::size_t rank = kDefaultThetaRank) {
  std::vector<std::uint8_t> data(reading.data().begin(), reading.data().end());
  for (std::size_t c = 0; c < reading.channels(); ++c) {
    const auto floor = static_cast<std::uint8_t>(rank_value(reading.row(c), rank));
    auto* row = data.data() + c * reading.timesteps();
    for (std::size_t t = 0; t < reading.timesteps(); ++t) {
      row[t] = row[t] > floor ? static_cast<std::uint8_t>(row[t] - floor) : std::uint8_t{0};
    }
  }
  return LaserReading(reading.id(), reading.timesteps(), std::move(data), reading.step_um());
}

// ---------------------------------------------------------------------------
// Gradients
// ---------------------------------------------------------------------------

struct GradientSeries {
  std::vector<double> radians;
  std::vector<std::uint8_t> valid;  // 1 where the column had any light

  [[nodiscard]] std::size_t size() const noexcept { return radians.size(); }
  [[nodiscard]] std::size_t valid_count() const {
    return static_cast<std::size_t>(std::ranges::count(valid, std::uint8_t{1}));
  }
};

/// Surface gradient per timestep: half the intensity-weighted mean sensor
/// angle. Columns with zero total intensity are marked invalid.
inline GradientSeries gradients(const RealMatrix& xt, const SensorGeometry& geom) {
  if (xt.channels != kSensorCount) {
    throw Error(ErrorCode::dimension_out_of_range, "gradients expects 20 channels");
  }
  GradientSeries g;
  g.radians.assign(xt.timesteps, 0.0);
  g.valid.assign(xt.timesteps, 0);
  std::vector<double> weighted(xt.timesteps, 0.0);
  std::vector<double> total(xt.timesteps, 0.0);
  for (std::size_t c = 0; c < kSensorCount; ++c) {
    const auto row = xt.row(c);
    const double angle = geom.angles_deg[c];
    for (std::size_t t = 0; t < xt.timesteps; ++t) {
      weighted[t] += row[t] * angle;
      total[t] += row[t];
    }
  }
  for (std::size_t t = 0; t < xt.timesteps; ++t) {
    if (total[t] > 0.0) {
      g.radians[t] = deg_to_rad(0.5 * weighted[t] / total[t]);
      g.valid[t] = 1;
    }
  }
  return g;
}

/// Fills invalid runs linearly between valid neighbours; leading and trailing
/// runs take the nearest valid value.
inline GradientSeries interpolate_gaps(GradientSeries g) {
  const std::size_t n = g.size();
  std::size_t first = 0;
  while (first < n && !g.valid[first]) ++first;
  if (first == n) throw Error(ErrorCode::no_valid_gradient, "no timestep received any light");

  for (std::size_t t = 0; t < first; ++t) g.radians[t] = g.radians[first];
  std::size_t prev = first;
  for (std::size_t t = first + 1; t < n; ++t) {
    if (!g.valid[t]) continue;
    if (t > prev + 1) {
      const double span = static_cast<double>(t - prev);
      const double a = g.radians[prev];
      const double b = g.radians[t];
      for (std::size_t k = prev + 1; k < t; ++k) {
        const double w = static_cast<double>(k - prev) / span;
        g.radians[k] = a + w * (b - a);
      }
    }
    prev = t;
  }
  for (std::size_t t = prev + 1; t < n; ++t) g.radians[t] = g.radians[prev];
  std::ranges::fill(g.valid, std::uint8_t{1});
  return g;
}

/// Cumulative sum of tan(gradient) * step.
inline SurfaceProfile integrate(const GradientSeries& g, double step_um = kDefaultStepUm) {
  const double limit = deg_to_rad(kMaxGradientDeg);
  SurfaceProfile profile;
  profile.step_um = step_um;
  profile.heights.resize(g.size());
  double height = 0.0;
  for (std::size_t t = 0; t < g.size(); ++t) {
    if (!g.valid.empty() && !g.valid[t]) {
      throw Error(ErrorCode::invalid_argument, "integrate requires a fully valid gradient series");
    }
    if (!(std::abs(g.radians[t]) < limit)) {
      throw Error(ErrorCode::singular_gradient,
                  "gradient at timestep " + std::to_string(t) + " is at or beyond 89.9 degrees");
    }
    height += std::tan(g.radians[t]) * step_um;
    profile.heights[t] = height;
  }
  return profile;
}

// ---------------------------------------------------------------------------
// Waviness removal
// ---------------------------------------------------------------------------

/// [reversed(z), z, reversed(z)]
inline std::vector<double> mirror_extend(std::span<const double> z) {
  std::vector<double> ext;
  ext.reserve(3 * z.size());
  ext.insert(ext.end(), z.rbegin(), z.rend());
  ext.insert(ext.end(), z.begin(), z.end());
  ext.insert(ext.end(), z.rbegin(), z.rend());
  return ext;
}

/// Brick-wall high-pass: zero every DFT bin of the mirror-extended profile
/// whose wavelength exceeds cutoff_um (and the DC bin), then crop the centre.
/// A wavelength equal to the cutoff is kept.
inline RoughnessProfile highpass_roughness(const SurfaceProfile& surface,
                                           double cutoff_um = kDefaultCutoffUm) {
  const std::size_t n = surface.heights.size();
  if (n < 2) throw Error(ErrorCode::invalid_argument, "high-pass filter needs at least 2 points");
  if (!(cutoff_um > 0.0)) throw Error(ErrorCode::invalid_argument, "cutoff must be positive");

  RoughnessProfile out;
  out.step_um = surface.step_um;
  // A flat profile is pure DC; skip the transform so the result is exactly zero.
  if (std::ranges::all_of(surface.heights, [&](double h) { return h == surface.heights.front(); })) {
    out.heights.assign(n, 0.0);
    return out;
  }

  const auto ext = mirror_extend(surface.heights);
  fft::RealTransform tr(ext.size());
  std::ranges::copy(ext, tr.real().begin());
  tr.forward();

  const double extent = static_cast<double>(ext.size()) * surface.step_um;
  auto spec = tr.spectrum();
  spec[0] = 0.0;
  for (std::size_t k = 1; k < spec.size(); ++k) {
    if (extent / static_cast<double>(k) > cutoff_um) spec[k] = 0.0;
  }
  tr.inverse();

  const auto real = tr.real();
  out.heights.assign(real.begin() + static_cast<std::ptrdiff_t>(n),
                     real.begin() + static_cast<std::ptrdiff_t>(2 * n));
  return out;
}

// ---------------------------------------------------------------------------
// Ra
// ---------------------------------------------------------------------------

/// Mean absolute deviation from the mean height.
inline double ra(std::span<const double> z) {
  if (z.empty()) throw Error(ErrorCode::empty_input, "Ra of an empty profile");
  const double n = static_cast<double>(z.size());
  const double mean = std::accumulate(z.begin(), z.end(), 0.0) / n;
  double dev = 0.0;
  for (double v : z) dev += std::abs(v - mean);
  return dev / n;
}

inline double ra(const RoughnessProfile& p) { return ra(std::span<const double>(p.heights)); }

struct BaselineParams {
  std::size_t theta = kDefaultThetaRank;
  double cutoff_um = kDefaultCutoffUm;
};

inline double baseline_ra(const LaserReading& reading, const BaselineParams& params = {},
                          const SensorGeometry& geom = build_sensor_geometry()) {
  auto g = gradients(threshold(reading, params.theta), geom);
  if (g.valid_count() == 0) {
    throw Error(ErrorCode::no_valid_gradient,
                "reading '" + reading.id() + "' has no lit timestep after thresholding");
  }
  const auto surface = integrate(interpolate_gaps(std::move(g)), reading.step_um());
  return ra(highpass_roughness(surface, params.cutoff_um));
}

// ---------------------------------------------------------------------------
// Affine calibration of baseline outputs
// ---------------------------------------------------------------------------

struct AffineCalibration {
  double scale = 1.0;
  double offset = 0.0;

  [[nodiscard]] double apply(double x) const noexcept { return scale * x + offset; }
};

inline double apply_calibration(const AffineCalibration& cal, double x) { return cal.apply(x); }

/// Ordinary least squares truth ~ scale * pred + offset.
inline AffineCalibration fit_affine_calibration(std::span<const double> pred,
                                                std::span<const double> truth) {
  if (pred.size() != truth.size()) {
    throw Error(ErrorCode::length_mismatch, "calibration inputs differ in length");
  }
  if (pred.size() < 2) throw Error(ErrorCode::degenerate_fit, "calibration needs at least 2 points");
  const double n = static_cast<double>(pred.size());
  const double mx = std::accumulate(pred.begin(), pred.end(), 0.0) / n;
  const double my = std::accumulate(truth.begin(), truth.end(), 0.0) / n;
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    sxx += (pred[i] - mx) * (pred[i] - mx);
    sxy += (pred[i] - mx) * (truth[i] - my);
  }
  if (!(sxx > 0.0)) throw Error(ErrorCode::degenerate_fit, "calibration predictions are constant");
  AffineCalibration cal;
  cal.scale = sxy / sxx;
  cal.offset = my - cal.scale * mx;
  return cal;
}

}  // namespace scatter_ra
