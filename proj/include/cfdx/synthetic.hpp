#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "cfdx/dataset.hpp"
#include "cfdx/schema.hpp"

namespace cfdx {

struct SyntheticConfig {
  std::vector<std::size_t> class_sizes{40, 40, 40, 40};  // MB, EP, PA, BG
  double separation = 1.0;  // scales the per-class tumor offsets
  double noise = 0.12;      // relative tumor signal noise
  std::uint64_t seed = 7;
  std::string id_prefix = "S";
};

/// Gaussian cohort laid out on the canonical 18-feature schema. Class
/// identity lives in the tumor signals; parenchyma is class-independent and
/// each ratio is exactly tumor / parenchyma.
inline Dataset synthetic_cohort(const SyntheticConfig& cfg = {}) {
  const FeatureSchema schema = canonical_schema();
  // modality order: T2, FLAIR, DWI, ADC, T1, T1CE
  static constexpr std::array<double, 6> base{1200.0, 1100.0, 1000.0, 1.0, 500.0, 900.0};
  static constexpr std::array<std::array<double, 6>, 4> offset{{
      {-0.10, 0.20, 0.30, -0.30, 0.00, 0.10},   // MB
      {0.10, 0.10, 0.00, 0.00, -0.10, -0.20},   // EP
      {0.30, -0.10, -0.20, 0.30, -0.10, 0.20},  // PA
      {0.00, -0.20, 0.10, 0.10, 0.20, -0.10},   // BG
  }};
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<PatientRecord> records;
  std::size_t serial = 0;
  for (std::size_t cls = 0; cls < cfg.class_sizes.size() && cls < offset.size(); ++cls) {
    for (std::size_t n = 0; n < cfg.class_sizes[cls]; ++n) {
      PatientRecord r;
      r.id = cfg.id_prefix + std::to_string(++serial);
      r.label = cls;
      r.values.resize(schema.feature_count());
      for (std::size_t m = 0; m < base.size(); ++m) {
        const double hi = m == 3 ? 10.0 : 10000.0;
        const double tumor = std::clamp(
            base[m] * (1.0 + cfg.separation * offset[cls][m] + cfg.noise * normal(rng)), 0.01 * base[m], hi);
        const double par = std::clamp(base[m] * (0.8 + 0.05 * normal(rng)), 0.01 * base[m], hi);
        r.values[3 * m] = tumor;
        r.values[3 * m + 1] = par;
        r.values[3 * m + 2] = std::min(tumor / par, 20.0);
      }
      records.push_back(std::move(r));
    }
  }
  return Dataset(schema, std::move(records));
}

}  // namespace cfdx
