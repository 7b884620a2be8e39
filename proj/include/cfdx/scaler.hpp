#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include <json.hpp>

#include "cfdx/dataset.hpp"
#include "cfdx/error.hpp"

namespace cfdx {

/// Per-feature standardization z = (x - mean) / std with the population std.
/// Constant columns are flagged degenerate and map to 0.
class StandardScaler {
 public:
  StandardScaler() = default;
  StandardScaler(std::vector<double> mean, std::vector<double> stddev)
      : mean_(std::move(mean)), std_(std::move(stddev)) {
    if (mean_.size() != std_.size()) fail(ErrorCode::LengthMismatch, "scaler mean/std size mismatch");
    for (double s : std_)
      if (!(s >= 0.0)) fail(ErrorCode::InvalidArgument, "scaler std must be >= 0");
  }

  std::size_t size() const noexcept { return mean_.size(); }
  const std::vector<double>& mean() const noexcept { return mean_; }
  const std::vector<double>& stddev() const noexcept { return std_; }
  bool degenerate(std::size_t j) const { return std_.at(j) == 0.0; }

  std::vector<double> transform(std::span<const double> x) const {
    check(x.size());
    std::vector<double> z(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) z[j] = transform_one(j, x[j]);
    return z;
  }

  std::vector<double> inverse_transform(std::span<const double> z) const {
    check(z.size());
    std::vector<double> x(z.size());
    for (std::size_t j = 0; j < z.size(); ++j) x[j] = inverse_one(j, z[j]);
    return x;
  }

  double transform_one(std::size_t j, double x) const {
    return std_[j] == 0.0 ? 0.0 : (x - mean_[j]) / std_[j];
  }
  double inverse_one(std::size_t j, double z) const {
    return std_[j] == 0.0 ? mean_[j] : z * std_[j] + mean_[j];
  }

  nlohmann::json to_json() const { return {{"mean", mean_}, {"std", std_}}; }
  static StandardScaler from_json(const nlohmann::json& j) {
    return StandardScaler(j.at("mean").get<std::vector<double>>(), j.at("std").get<std::vector<double>>());
  }

 private:
  void check(std::size_t n) const {
    if (n != mean_.size()) fail(ErrorCode::SchemaMismatch, "vector width does not match scaler");
  }

  std::vector<double> mean_;
  std::vector<double> std_;
};

inline StandardScaler fit_scaler(const Dataset& train) {
  if (train.empty()) fail(ErrorCode::EmptyDataset, "cannot fit scaler on an empty dataset");
  const std::size_t f = train.schema().feature_count();
  const double n = static_cast<double>(train.size());
  std::vector<double> mean(f, 0.0), sd(f, 0.0);
  for (const auto& r : train.records())
    for (std::size_t j = 0; j < f; ++j) mean[j] += r.values[j];
  for (auto& m : mean) m /= n;
  for (const auto& r : train.records())
    for (std::size_t j = 0; j < f; ++j) sd[j] += (r.values[j] - mean[j]) * (r.values[j] - mean[j]);
  for (std::size_t j = 0; j < f; ++j) {
    sd[j] = std::sqrt(sd[j] / n);
    // rounding residue of a constant column
    if (sd[j] <= 1e-12 * std::max(1.0, std::abs(mean[j]))) sd[j] = 0.0;
  }
  return StandardScaler(std::move(mean), std::move(sd));
}

inline PatientRecord transform(const StandardScaler& scaler, const PatientRecord& r) {
  return {r.id, r.label, scaler.transform(r.values)};
}

inline PatientRecord inverse_transform(const StandardScaler& scaler, const PatientRecord& r) {
  return {r.id, r.label, scaler.inverse_transform(r.values)};
}

}  // namespace cfdx
