#pragma once

#include <cstdio>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfdx/analysis.hpp"
#include "cfdx/augmentation.hpp"
#include "cfdx/cf_classifier.hpp"
#include "cfdx/cf_engine.hpp"
#include "cfdx/kde.hpp"
#include "cfdx/model.hpp"
#include "cfdx/schema.hpp"

// JSON and CSV renderings of every report. All writers are deterministic:
// numbers use the shortest round-trip form and rows follow input order.

namespace cfdx {

using nlohmann::json;

inline json record_json(const FeatureSchema& schema, const PatientRecord& r) {
  json values = json::object();
  for (std::size_t j = 0; j < schema.feature_count(); ++j) values[schema.feature(j).name] = r.values[j];
  return {{"id", r.id},
          {"label", r.label ? schema.class_name(*r.label) : std::string(kUnknownLabel)},
          {"values", values}};
}

inline json counterfactual_json(const FeatureSchema& schema, const Counterfactual& cf) {
  json delta = json::object();
  for (const auto& c : cf.delta)
    delta[schema.feature(c.feature).name] = {{"from", c.old_value}, {"to", c.new_value}};
  return {{"converged", cf.converged},
          {"achieved_class", schema.class_name(cf.achieved_class)},
          {"delta", delta}};
}

inline json counterfactual_set_json(const FeatureSchema& schema, const CounterfactualSet& set) {
  json members = json::array();
  for (const auto& m : set.members) members.push_back(counterfactual_json(schema, m));
  json locked = json::array();
  for (auto j : set.locked) locked.push_back(schema.feature(j).name);
  return {{"factual", record_json(schema, set.factual)},
          {"target", schema.class_name(set.target)},
          {"k", set.config.k},
          {"seed", set.config.seed},
          {"iterations", set.iterations},
          {"locked", locked},
          {"converged_count", set.converged_count()},
          {"members", members}};
}

/// Factual row followed by one row per member; unchanged cells are "-".
inline void write_counterfactual_csv(std::ostream& os, const FeatureSchema& schema,
                                     std::span<const CounterfactualSet> sets) {
  os << "id,row,target,converged";
  for (std::size_t j = 0; j < schema.feature_count(); ++j) os << ',' << schema.feature(j).name;
  os << '\n';
  for (const auto& set : sets) {
    os << detail::csv_field(set.factual.id) << ",factual,,";
    for (double v : set.factual.values) os << ',' << format_number(v);
    os << '\n';
    for (std::size_t i = 0; i < set.members.size(); ++i) {
      const auto& m = set.members[i];
      os << detail::csv_field(set.factual.id) << ',' << i << ',' << schema.class_name(set.target) << ',' << (m.converged ? 1 : 0);
      for (std::size_t j = 0; j < schema.feature_count(); ++j)
        os << ',' << (m.changes(j) ? format_number(m.values[j]) : std::string("-"));
      os << '\n';
    }
  }
}

inline json distance_report_json(const FeatureSchema& schema, const DistanceReport& rep) {
  json rows = json::array();
  for (const auto& r : rep.per_class) {
    json row = {{"class", schema.class_name(r.cls)}, {"status", r.converged ? "ok" : "GenerationFailed"}};
    if (r.converged) {
      row["distance"] = r.distance;
      row["changes"] = r.changes;
      row["counterfactual"] = counterfactual_json(schema, *r.best);
    }
    rows.push_back(std::move(row));
  }
  return {{"factual_id", rep.factual_id},
          {"factual_scaled", rep.factual_scaled},
          {"per_class", rows},
          {"predicted", schema.class_name(rep.predicted)}};
}

/// Scaled factual row, then one row per class with changed cells only, the
/// distance and a predicted flag.
inline void write_distance_csv(std::ostream& os, const FeatureSchema& schema, const DistanceReport& rep,
                               double bound = 2.0) {
  os << "id,row";
  for (std::size_t j = 0; j < schema.feature_count(); ++j) os << ',' << schema.feature(j).name;
  os << ",distance,predicted,status\n";
  os << detail::csv_field(rep.factual_id) << ",factual";
  for (double v : rep.factual_scaled) os << ',' << format_number(v);
  os << ",,,\n";
  for (const auto& r : rep.per_class) {
    os << detail::csv_field(rep.factual_id) << ',' << schema.class_name(r.cls);
    for (std::size_t j = 0; j < schema.feature_count(); ++j) {
      if (r.converged && r.best->changes(j))
        os << ',' << format_number(std::clamp(r.best->scaled[j], -bound, bound));
      else
        os << ",-";
    }
    if (r.converged)
      os << ',' << format_number(r.distance) << ',' << (r.cls == rep.predicted ? 1 : 0) << ",ok\n";
    else
      os << ",,0,GenerationFailed\n";
  }
}

inline json change_frequency_json(const ChangeFrequencyReport& rep, std::size_t top_k) {
  json counts = json::array();
  for (const auto& [f, c] : rep.ranked()) counts.push_back({{"feature", f}, {"count", c}});
  json top = json::array();
  for (const auto& [f, c] : top_features(rep, top_k)) top.push_back({{"feature", f}, {"count", c}});
  return {{"source", rep.source_class},
          {"target", rep.target_class},
          {"n_patients", rep.n_patients},
          {"n_counterfactuals", rep.n_counterfactuals},
          {"counts", counts},
          {"top", top}};
}

inline void write_change_frequency_csv(std::ostream& os, std::span<const ChangeFrequencyReport> reps) {
  os << "source,target,n_patients,n_counterfactuals,feature,count\n";
  for (const auto& rep : reps)
    for (const auto& [f, c] : rep.ranked())
      os << rep.source_class << ',' << rep.target_class << ',' << rep.n_patients << ',' << rep.n_counterfactuals
         << ',' << f << ',' << c << '\n';
}

inline json significance_json(std::span<const SignificanceRow> rows) {
  json out = json::array();
  for (const auto& r : rows) {
    json row = {{"track", static_cast<int>(r.track)},
                {"feature", r.feature},
                {"original_class", r.original_class},
                {"transition", r.transition}};
    if (r.result) {
      row["t"] = r.result->t_statistic;
      row["p"] = r.result->p_value;
      row["df"] = r.result->df;
      row["kind"] = std::string(to_string(r.result->kind));
    } else {
      row["flag"] = r.flag;
    }
    out.push_back(std::move(row));
  }
  return out;
}

inline void write_significance_csv(std::ostream& os, std::span<const SignificanceRow> rows) {
  os << "track,feature,original_class,transition,t,p,df,flag\n";
  for (const auto& r : rows) {
    os << static_cast<int>(r.track) << ',' << r.feature << ',' << r.original_class << ',' << r.transition;
    if (r.result)
      os << ',' << format_number(r.result->t_statistic) << ',' << format_number(r.result->p_value) << ','
         << format_number(r.result->df) << ",\n";
    else
      os << ",,,," << r.flag << '\n';
  }
}

inline json kde_json(const KdeCurve& c) {
  return {{"bandwidth", c.bandwidth}, {"grid", c.grid}, {"density", c.density}};
}

inline void write_kde_csv(std::ostream& os, const KdeCurve& c) {
  os << "grid,density\n";
  for (std::size_t i = 0; i < c.grid.size(); ++i) os << format_number(c.grid[i]) << ',' << format_number(c.density[i]) << '\n';
}

/// "65(56 R, 9 CF)" or "47(Real only)".
inline std::string composition(std::size_t real, std::size_t cf) {
  if (cf == 0) return std::to_string(real) + "(Real only)";
  return std::to_string(real + cf) + "(" + std::to_string(real) + " R, " + std::to_string(cf) + " CF)";
}

/// Percent with two decimals; "84.83 ± 4.95", or a bare value for one run.
inline std::string percent_cell(const MetricSummary& m, std::size_t runs) {
  char buf[64];
  if (runs > 1)
    std::snprintf(buf, sizeof buf, "%.2f \xC2\xB1 %.2f", 100.0 * m.mean, 100.0 * m.stddev);
  else
    std::snprintf(buf, sizeof buf, "%.2f", 100.0 * m.mean);
  return buf;
}

inline json experiment_json(const ExperimentResult& r) {
  json runs = json::array();
  for (const auto& m : r.runs)
    runs.push_back({{"precision", m.macro_precision}, {"recall", m.macro_recall}, {"f1", m.macro_f1}});
  auto summary = [](const MetricSummary& s) { return json{{"mean", s.mean}, {"std", s.stddev}}; };
  return {{"scenario", std::string(to_string(r.scenario.kind))},
          {"seed", r.scenario.seed},
          {"train", {{"real", r.train_real}, {"cf", r.train_cf}}},
          {"test", {{"real", r.test_real}, {"cf", r.test_cf}}},
          {"precision", summary(r.precision)},
          {"recall", summary(r.recall)},
          {"f1", summary(r.f1)},
          {"runs", runs}};
}

inline void write_experiment_csv(std::ostream& os, std::span<const ExperimentResult> rows) {
  os << "scenario,training_set,test_set,macro_precision,macro_recall,macro_f1\n";
  for (const auto& r : rows) {
    const std::size_t n = r.runs.size();
    os << to_string(r.scenario.kind) << ",\"" << composition(r.train_real, r.train_cf) << "\",\""
       << composition(r.test_real, r.test_cf) << "\"," << percent_cell(r.precision, n) << ','
       << percent_cell(r.recall, n) << ',' << percent_cell(r.f1, n) << '\n';
  }
}

}  // namespace cfdx
