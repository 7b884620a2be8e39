#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "cfdx/error.hpp"
#include "cfdx/stats.hpp"

namespace cfdx {

struct KdeCurve {
  std::vector<double> grid;
  std::vector<double> density;
  double bandwidth = 0.0;
};

/// Scott's rule: n^(-1/5) times the sample standard deviation.
inline double scott_bandwidth(std::span<const double> samples) {
  if (samples.size() < 2) fail(ErrorCode::DegenerateSample, "bandwidth selection needs at least two samples");
  const auto m = sample_moments(samples);
  if (!(m.variance > 0.0)) fail(ErrorCode::DegenerateSample, "all samples are equal");
  return std::pow(m.n, -0.2) * std::sqrt(m.variance);
}

/// Gaussian-kernel density on `points` grid points spanning the data range
/// padded by four bandwidths on each side.
inline KdeCurve kde_estimate(std::span<const double> samples, std::optional<double> bandwidth = std::nullopt,
                             std::size_t points = 512) {
  if (samples.empty()) fail(ErrorCode::DegenerateSample, "no samples");
  if (points < 2) fail(ErrorCode::InvalidArgument, "grid needs at least two points");
  KdeCurve curve;
  curve.bandwidth = bandwidth ? *bandwidth : scott_bandwidth(samples);
  if (!(curve.bandwidth > 0.0) || !std::isfinite(curve.bandwidth))
    fail(ErrorCode::InvalidArgument, "bandwidth must be positive");
  const auto [mn, mx] = std::minmax_element(samples.begin(), samples.end());
  const double lo = *mn - 4.0 * curve.bandwidth, hi = *mx + 4.0 * curve.bandwidth;
  const double h = curve.bandwidth;
  const double norm = 1.0 / (static_cast<double>(samples.size()) * h * std::sqrt(2.0 * std::numbers::pi));
  curve.grid.resize(points);
  curve.density.resize(points);
  for (std::size_t i = 0; i < points; ++i) {
    const double g = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
    double s = 0.0;
    for (double x : samples) {
      const double u = (g - x) / h;
      s += std::exp(-0.5 * u * u);
    }
    curve.grid[i] = g;
    curve.density[i] = s * norm;
  }
  return curve;
}

/// Trapezoidal integral of the curve.
inline double integrate(const KdeCurve& c) {
  double total = 0.0;
  for (std::size_t i = 1; i < c.grid.size(); ++i)
    total += 0.5 * (c.density[i] + c.density[i - 1]) * (c.grid[i] - c.grid[i - 1]);
  return total;
}

}  // namespace cfdx
