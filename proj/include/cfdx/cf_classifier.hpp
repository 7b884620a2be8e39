#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cfdx/cf_engine.hpp"
#include "cfdx/error.hpp"
#include "cfdx/model.hpp"

namespace cfdx {

/// Euclidean distance restricted to the changed coordinates.
inline double changed_feature_distance(std::span<const double> factual, std::span<const double> cf,
                                       std::span<const std::size_t> changed) {
  if (factual.size() != cf.size()) fail(ErrorCode::LengthMismatch, "factual and counterfactual differ in length");
  double s = 0.0;
  for (std::size_t j : changed) {
    if (j >= factual.size()) fail(ErrorCode::IndexOutOfRange, "changed feature index out of range");
    const double d = cf[j] - factual[j];
    s += d * d;
  }
  return std::sqrt(s);
}

struct ClassDistance {
  std::size_t cls = 0;
  bool converged = false;  // false: no member reached the class
  double distance = 0.0;
  std::size_t changes = 0;
  std::optional<Counterfactual> best;
};

struct DistanceReport {
  std::string factual_id;
  std::vector<double> factual_scaled;  // clipped to the distance box
  std::vector<ClassDistance> per_class;
  std::size_t predicted = 0;
};

/// Argmin over converged classes; ties go to fewer changes, then lower index.
inline std::optional<std::size_t> rank_classes(std::span<const ClassDistance> rows) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (!r.converged) continue;
    if (!best) {
      best = i;
      continue;
    }
    const auto& b = rows[*best];
    if (r.distance < b.distance || (r.distance == b.distance && r.changes < b.changes)) best = i;
  }
  if (!best) return std::nullopt;
  return rows[*best].cls;
}

namespace detail {

inline std::vector<double> clip_box(std::span<const double> v, double bound) {
  std::vector<double> out(v.begin(), v.end());
  for (auto& x : out) x = std::clamp(x, -bound, bound);
  return out;
}

}  // namespace detail

/// Builds the report from one counterfactual set per class. Throws
/// AllClassesFailed when no set holds a converged member.
inline DistanceReport distance_report(const Model& model, std::span<const CounterfactualSet> sets,
                                      double bound = 2.0) {
  if (sets.empty()) fail(ErrorCode::InvalidArgument, "no counterfactual sets to rank");
  DistanceReport rep;
  rep.factual_id = sets.front().factual.id;
  rep.factual_scaled = detail::clip_box(model.scaler().transform(sets.front().factual.values), bound);
  for (const auto& set : sets) {
    ClassDistance row;
    row.cls = set.target;
    for (const auto& m : set.members) {
      if (!m.converged) continue;
      const auto changed = m.changed_features();
      const double d = changed_feature_distance(rep.factual_scaled, detail::clip_box(m.scaled, bound), changed);
      if (!row.converged || d < row.distance || (d == row.distance && changed.size() < row.changes)) {
        row.converged = true;
        row.distance = d;
        row.changes = changed.size();
        row.best = m;
      }
    }
    rep.per_class.push_back(std::move(row));
  }
  const auto pick = rank_classes(rep.per_class);
  if (!pick) fail(ErrorCode::AllClassesFailed, "no class produced a converged counterfactual", rep.factual_id);
  rep.predicted = *pick;
  return rep;
}

/// Generates counterfactuals toward every class and predicts the class that
/// needs the smallest change.
inline DistanceReport classify_unknown(const Model& model, const CfConfig& cfg, const PatientRecord& record,
                                       std::span<const std::size_t> locks = {},
                                       std::vector<CounterfactualSet>* sets_out = nullptr) {
  std::vector<CounterfactualSet> sets;
  for (std::size_t c = 0; c < model.classes(); ++c) sets.push_back(generate(model, record, c, cfg, locks));
  auto rep = distance_report(model, sets, cfg.scaled_bound);
  if (sets_out) *sets_out = std::move(sets);
  return rep;
}

}  // namespace cfdx
