#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cfdx/cf_engine.hpp"
#include "cfdx/dataset.hpp"
#include "cfdx/error.hpp"
#include "cfdx/schema.hpp"
#include "cfdx/stats.hpp"

namespace cfdx {

struct ChangeFrequencyReport {
  std::string source_class;
  std::string target_class;
  std::size_t n_patients = 0;
  std::size_t n_counterfactuals = 0;
  std::vector<std::string> features;  // schema order
  std::vector<std::size_t> counts;    // parallel to features

  /// (feature, count) by descending count, ties alphabetical.
  std::vector<std::pair<std::string, std::size_t>> ranked() const {
    std::vector<std::pair<std::string, std::size_t>> out;
    for (std::size_t j = 0; j < features.size(); ++j) out.emplace_back(features[j], counts[j]);
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    return out;
  }
};

inline std::string source_name(const FeatureSchema& schema, const PatientRecord& r) {
  return r.label ? schema.class_name(*r.label) : std::string(kUnknownLabel);
}

/// Counts how often each feature is changed across the converged members of
/// one source -> target transition. The source is the factual's own label.
inline ChangeFrequencyReport change_frequency(const FeatureSchema& schema, std::span<const CounterfactualSet> sets) {
  ChangeFrequencyReport rep;
  for (std::size_t j = 0; j < schema.feature_count(); ++j) rep.features.push_back(schema.feature(j).name);
  rep.counts.assign(schema.feature_count(), 0);
  if (sets.empty()) return rep;
  rep.source_class = source_name(schema, sets.front().factual);
  rep.target_class = schema.class_name(sets.front().target);
  for (const auto& set : sets) {
    if (source_name(schema, set.factual) != rep.source_class || set.target != sets.front().target)
      fail(ErrorCode::MixedTransitions, "counterfactual sets span more than one transition", set.factual.id);
    ++rep.n_patients;
    for (const auto& m : set.members) {
      if (!m.converged) continue;
      ++rep.n_counterfactuals;
      for (const auto& c : m.delta) ++rep.counts[c.feature];
    }
  }
  return rep;
}

/// One set per record of class `source`, all aimed at `target`. Record i is
/// generated with seed cfg.seed + i.
inline std::vector<CounterfactualSet> generate_population(const Model& model, const Dataset& data, std::size_t source,
                                                          std::size_t target, const CfConfig& cfg) {
  std::vector<CounterfactualSet> sets;
  for (auto i : data.indices_of_class(source)) {
    CfConfig c = cfg;
    c.seed = cfg.seed + i;
    sets.push_back(generate(model, data[i], target, c));
  }
  return sets;
}

/// The k most changed features with nonzero counts.
inline std::vector<std::pair<std::string, std::size_t>> top_features(const ChangeFrequencyReport& rep, std::size_t k) {
  if (k < 1) fail(ErrorCode::InvalidArgument, "k must be >= 1");
  auto all = rep.ranked();
  std::vector<std::pair<std::string, std::size_t>> out;
  for (auto& e : all) {
    if (e.second == 0 || out.size() == k) break;
    out.push_back(std::move(e));
  }
  return out;
}

enum class Track { Paired = 1, Welch = 2 };

struct SignificanceRow {
  Track track = Track::Paired;
  std::string feature;
  std::string original_class;
  std::string transition;  // "X to Y"
  std::optional<TTestResult> result;
  std::string flag;  // reason when result is empty
};

/// Groups sets by (source label, target) in first-seen order.
inline std::vector<std::vector<CounterfactualSet>> group_transitions(const FeatureSchema& schema,
                                                                     std::span<const CounterfactualSet> sets) {
  std::vector<std::pair<std::string, std::size_t>> keys;
  std::vector<std::vector<CounterfactualSet>> groups;
  for (const auto& s : sets) {
    std::pair<std::string, std::size_t> key{source_name(schema, s.factual), s.target};
    auto it = std::find(keys.begin(), keys.end(), key);
    if (it == keys.end()) {
      keys.push_back(key);
      groups.emplace_back();
      it = keys.end() - 1;
    }
    groups[static_cast<std::size_t>(it - keys.begin())].push_back(s);
  }
  return groups;
}

struct SuiteConfig {
  std::size_t paired_top = 5;
  std::size_t welch_top = 3;
};

namespace detail {

template <class F>
SignificanceRow run_row(Track track, std::string feature, std::string original, std::string transition,
                        std::size_t n, F&& test) {
  SignificanceRow row{track, std::move(feature), std::move(original), std::move(transition), std::nullopt, {}};
  if (n < 2) {
    row.flag = "n < 2";
    return row;
  }
  try {
    row.result = test();
  } catch (const Error& e) {
    row.flag = std::string(to_string(e.code()));
  }
  return row;
}

}  // namespace detail

/// Two-track protocol. Track 1 pairs every converged counterfactual with its
/// own factual on each of the transition's top paired_top features. Track 2
/// compares, per top welch_top feature, the counterfactual values of X -> Y
/// against all real class-Y patients in `data`.
inline std::vector<SignificanceRow> significance_suite(const Dataset& data, std::span<const CounterfactualSet> sets,
                                                       const SuiteConfig& cfg = {}) {
  const auto& schema = data.schema();
  std::vector<SignificanceRow> rows;
  for (const auto& group : group_transitions(schema, sets)) {
    const auto rep = change_frequency(schema, group);
    const std::string transition = rep.source_class + " to " + rep.target_class;
    const std::size_t target = group.front().target;

    for (const auto& [name, count] : top_features(rep, cfg.paired_top)) {
      const std::size_t j = schema.require_feature(name);
      std::vector<double> cf, factual;
      for (const auto& s : group)
        for (const auto& m : s.members)
          if (m.converged) {
            cf.push_back(m.values[j]);
            factual.push_back(s.factual.values[j]);
          }
      rows.push_back(detail::run_row(Track::Paired, name, rep.source_class, transition, cf.size(),
                                     [&] { return paired_ttest(cf, factual); }));
    }

    for (const auto& [name, count] : top_features(rep, cfg.welch_top)) {
      const std::size_t j = schema.require_feature(name);
      std::vector<double> cf, real;
      for (const auto& s : group)
        for (const auto& m : s.members)
          if (m.converged) cf.push_back(m.values[j]);
      for (std::size_t i : data.indices_of_class(target)) real.push_back(data[i].values[j]);
      rows.push_back(detail::run_row(Track::Welch, name, rep.source_class, transition,
                                     std::min(cf.size(), real.size()), [&] { return welch_ttest(cf, real); }));
    }
  }
  return rows;
}

}  // namespace cfdx
