#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string_view>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "cfdx/error.hpp"

namespace cfdx {

enum class TTestKind { Paired, Welch, Pooled };

constexpr std::string_view to_string(TTestKind k) {
  switch (k) {
    case TTestKind::Paired: return "paired";
    case TTestKind::Welch: return "welch";
    case TTestKind::Pooled: return "pooled";
  }
  return "unknown";
}

struct TTestResult {
  double t_statistic = 0.0;
  double p_value = 1.0;
  double df = 0.0;
  TTestKind kind = TTestKind::Welch;
};

struct SampleMoments {
  double n = 0.0;
  double mean = 0.0;
  double variance = 0.0;  // n - 1 denominator
};

inline SampleMoments sample_moments(std::span<const double> x) {
  SampleMoments m;
  m.n = static_cast<double>(x.size());
  for (double v : x) m.mean += v;
  m.mean /= m.n;
  for (double v : x) m.variance += (v - m.mean) * (v - m.mean);
  m.variance /= (m.n - 1.0);
  return m;
}

/// Two-tailed p-value of a t statistic.
inline double two_tailed_p(double t, double df) {
  if (t == 0.0) return 1.0;
  boost::math::students_t_distribution<double> dist(df);
  const double p = 2.0 * boost::math::cdf(dist, -std::abs(t));
  return std::min(1.0, std::max(0.0, p));
}

/// Dependent-samples t-test on d = a - b.
inline TTestResult paired_ttest(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(ErrorCode::LengthMismatch, "paired samples differ in length");
  if (a.size() < 2) fail(ErrorCode::InvalidArgument, "paired t-test needs at least two pairs");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const auto m = sample_moments(d);
  if (!(m.variance > 0.0)) fail(ErrorCode::DegenerateVariance, "paired differences have zero variance");
  TTestResult r;
  r.kind = TTestKind::Paired;
  r.df = m.n - 1.0;
  r.t_statistic = m.mean / std::sqrt(m.variance / m.n);
  r.p_value = two_tailed_p(r.t_statistic, r.df);
  return r;
}

/// Unequal-variance t-test with Welch-Satterthwaite degrees of freedom.
inline TTestResult welch_ttest(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) fail(ErrorCode::InvalidArgument, "Welch t-test needs two samples of size >= 2");
  const auto ma = sample_moments(a), mb = sample_moments(b);
  if (!std::isfinite(ma.variance) || !std::isfinite(mb.variance))
    fail(ErrorCode::InvalidArgument, "non-finite sample variance");
  if (ma.variance == 0.0 && mb.variance == 0.0) {
    if (ma.mean == mb.mean) return {0.0, 1.0, ma.n + mb.n - 2.0, TTestKind::Welch};
    fail(ErrorCode::DegenerateVariance, "both samples are constant");
  }
  const double va = ma.variance / ma.n, vb = mb.variance / mb.n;
  TTestResult r;
  r.kind = TTestKind::Welch;
  r.t_statistic = (ma.mean - mb.mean) / std::sqrt(va + vb);
  r.df = (va + vb) * (va + vb) / (va * va / (ma.n - 1.0) + vb * vb / (mb.n - 1.0));
  r.p_value = two_tailed_p(r.t_statistic, r.df);
  return r;
}

/// Student's equal-variance two-sample t-test.
inline TTestResult pooled_ttest(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) fail(ErrorCode::InvalidArgument, "pooled t-test needs two samples of size >= 2");
  const auto ma = sample_moments(a), mb = sample_moments(b);
  const double df = ma.n + mb.n - 2.0;
  const double sp2 = ((ma.n - 1.0) * ma.variance + (mb.n - 1.0) * mb.variance) / df;
  if (!(sp2 > 0.0)) fail(ErrorCode::DegenerateVariance, "pooled variance is zero");
  TTestResult r;
  r.kind = TTestKind::Pooled;
  r.df = df;
  r.t_statistic = (ma.mean - mb.mean) / std::sqrt(sp2 * (1.0 / ma.n + 1.0 / mb.n));
  r.p_value = two_tailed_p(r.t_statistic, r.df);
  return r;
}

}  // namespace cfdx
