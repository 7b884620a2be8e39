#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "cfdx/cf_engine.hpp"
#include "cfdx/dataset.hpp"
#include "cfdx/error.hpp"
#include "cfdx/model.hpp"
#include "cfdx/split.hpp"

namespace cfdx {

enum class ScenarioKind { Baseline, A, B, C };

constexpr std::string_view to_string(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::Baseline: return "baseline";
    case ScenarioKind::A: return "A";
    case ScenarioKind::B: return "B";
    case ScenarioKind::C: return "C";
  }
  return "baseline";
}

inline ScenarioKind parse_scenario(std::string_view s) {
  if (s == "baseline" || s == "Baseline") return ScenarioKind::Baseline;
  if (s == "A" || s == "a") return ScenarioKind::A;
  if (s == "B" || s == "b") return ScenarioKind::B;
  if (s == "C" || s == "c") return ScenarioKind::C;
  fail(ErrorCode::InvalidArgument, "unknown scenario '" + std::string(s) + "'");
}

struct Scenario {
  ScenarioKind kind = ScenarioKind::Baseline;
  double train_frac = 0.55;                // unused by C
  std::vector<std::size_t> target_counts;  // per class, real + counterfactual
  std::uint64_t seed = 0;
  std::size_t test_per_class = 11;  // C only
};

/// Baseline keeps the cohort as is, A tops up the smallest class to the
/// largest, B and C top up every class to the largest.
inline std::vector<std::size_t> default_target_counts(ScenarioKind kind, std::span<const std::size_t> counts) {
  std::vector<std::size_t> out(counts.begin(), counts.end());
  if (counts.empty() || kind == ScenarioKind::Baseline) return out;
  const std::size_t top = *std::max_element(counts.begin(), counts.end());
  if (kind == ScenarioKind::A) {
    out[static_cast<std::size_t>(std::min_element(counts.begin(), counts.end()) - counts.begin())] = top;
  } else {
    std::fill(out.begin(), out.end(), top);
  }
  return out;
}

inline Scenario make_scenario(ScenarioKind kind, std::span<const std::size_t> counts, std::uint64_t seed) {
  Scenario s;
  s.kind = kind;
  s.seed = seed;
  s.target_counts = default_target_counts(kind, counts);
  switch (kind) {
    case ScenarioKind::Baseline: s.train_frac = 0.55; break;
    case ScenarioKind::A: s.train_frac = 0.65; break;
    case ScenarioKind::B: s.train_frac = 0.75; break;
    case ScenarioKind::C: s.train_frac = 0.0; break;
  }
  return s;
}

/// Counterfactual records each class needs to reach its target count.
inline std::vector<std::size_t> pool_needs(const Scenario& s, std::span<const std::size_t> counts) {
  std::vector<std::size_t> need(counts.size(), 0);
  if (s.kind == ScenarioKind::Baseline) return need;
  if (s.target_counts.size() != counts.size())
    fail(ErrorCode::InvalidArgument, "target counts do not match the class count");
  for (std::size_t c = 0; c < counts.size(); ++c) need[c] = s.target_counts[c] > counts[c] ? s.target_counts[c] - counts[c] : 0;
  return need;
}

struct PoolEntry {
  PatientRecord record;  // labelled with the target class
  std::string parent_id;
  std::size_t source = 0;
  std::size_t target = 0;
};

using CfPool = std::vector<PoolEntry>;

/// Scenario C test side: test_per_class real records per class, seeded.
inline std::vector<std::size_t> scenario_holdout(const Dataset& data, const Scenario& s) {
  std::mt19937_64 rng(s.seed ^ 0x5bd1e9955bd1e995ULL);
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < data.schema().class_count(); ++c) {
    auto idx = data.indices_of_class(c);
    if (idx.size() < s.test_per_class)
      fail(ErrorCode::ClassTooSmall, "class has fewer records than the holdout needs", data.schema().class_name(c));
    std::shuffle(idx.begin(), idx.end(), rng);
    out.insert(out.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(s.test_per_class));
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Records allowed to parent a counterfactual: everything except the
/// scenario C holdout.
inline std::vector<bool> eligible_parents(const Dataset& data, const Scenario& s) {
  std::vector<bool> ok(data.size(), true);
  if (s.kind == ScenarioKind::C)
    for (auto i : scenario_holdout(data, s)) ok[i] = false;
  return ok;
}

/// Generates counterfactual records toward each class with a positive need,
/// drawing parents round-robin across the other classes. Self-transitions are
/// never used. Each parent contributes one member per pass over its class.
/// Boundary refinement is switched off here: a record sitting exactly on the
/// generator's decision boundary is a label-ambiguous training sample.
inline CfPool build_cf_pool(const Model& model, const Dataset& data, std::span<const std::size_t> needs,
                            const CfConfig& cfg, const std::vector<bool>& eligible = {}) {
  const std::size_t classes = data.schema().class_count();
  if (needs.size() != classes) fail(ErrorCode::InvalidArgument, "needs do not match the class count");
  CfPool pool;
  std::mt19937_64 rng(cfg.seed);
  for (std::size_t target = 0; target < classes; ++target) {
    if (needs[target] == 0) continue;

    struct Source {
      std::size_t cls;
      std::vector<std::size_t> patients;
      std::size_t cursor = 0;
      std::size_t idle = 0;  // consecutive patients with nothing left
    };
    std::vector<Source> sources;
    for (std::size_t s = 0; s < classes; ++s) {
      if (s == target) continue;
      Source src{s, {}};
      for (auto i : data.indices_of_class(s))
        if (eligible.empty() || eligible[i]) src.patients.push_back(i);
      std::shuffle(src.patients.begin(), src.patients.end(), rng);
      if (!src.patients.empty()) sources.push_back(std::move(src));
    }

    std::unordered_map<std::size_t, std::vector<Counterfactual>> cache;
    std::unordered_map<std::size_t, std::size_t> used;
    auto next_from = [&](Source& src) -> std::optional<PoolEntry> {
      while (src.idle < src.patients.size()) {
        const std::size_t p = src.patients[src.cursor];
        src.cursor = (src.cursor + 1) % src.patients.size();
        auto it = cache.find(p);
        if (it == cache.end()) {
          CfConfig c = cfg;
          c.seed = cfg.seed + 7919 * p + target;
          c.boundary_refine = false;
          std::vector<Counterfactual> valid;
          for (auto& m : generate(model, data[p], target, c).members)
            if (m.converged && !m.delta.empty() && m.achieved_class == target) valid.push_back(std::move(m));
          it = cache.emplace(p, std::move(valid)).first;
        }
        auto& u = used[p];
        if (u >= it->second.size()) {
          ++src.idle;
          continue;
        }
        src.idle = 0;
        PoolEntry e;
        e.parent_id = data[p].id;
        e.source = src.cls;
        e.target = target;
        e.record.id = data[p].id + "-cf-" + data.schema().class_name(target) + "-" + std::to_string(u);
        e.record.label = target;
        e.record.values = it->second[u].values;
        ++u;
        return e;
      }
      return std::nullopt;
    };

    std::size_t got = 0;
    while (got < needs[target]) {
      bool progress = false;
      for (auto& src : sources) {
        if (got == needs[target]) break;
        if (auto e = next_from(src)) {
          pool.push_back(std::move(*e));
          ++got;
          progress = true;
        }
      }
      if (!progress)
        fail(ErrorCode::InsufficientPool, "not enough converged counterfactuals for class",
             data.schema().class_name(target) + ": need " + std::to_string(needs[target]) + ", got " +
                 std::to_string(got));
    }
  }
  return pool;
}

enum class Provenance { Real, Counterfactual };

struct AugmentedSplit {
  Dataset train;
  Dataset test;
  std::vector<Provenance> train_provenance;
  std::vector<Provenance> test_provenance;
  std::vector<std::string> train_parent;  // empty for real records
  std::vector<std::string> test_parent;

  static std::size_t count(const std::vector<Provenance>& p, Provenance which) {
    return static_cast<std::size_t>(std::count(p.begin(), p.end(), which));
  }
  std::size_t train_real() const { return count(train_provenance, Provenance::Real); }
  std::size_t train_cf() const { return count(train_provenance, Provenance::Counterfactual); }
  std::size_t test_real() const { return count(test_provenance, Provenance::Real); }
  std::size_t test_cf() const { return count(test_provenance, Provenance::Counterfactual); }
};

/// Throws LeakageViolation when a train counterfactual descends from a test record.
inline void check_leakage(const AugmentedSplit& split) {
  std::unordered_set<std::string> test_ids;
  for (const auto& r : split.test.records()) test_ids.insert(r.id);
  for (std::size_t i = 0; i < split.train.size(); ++i)
    if (split.train_provenance[i] == Provenance::Counterfactual && test_ids.count(split.train_parent[i]))
      fail(ErrorCode::LeakageViolation, "train counterfactual has its parent in the test set", split.train[i].id);
}

inline AugmentedSplit build_scenario(const Dataset& data, const CfPool& pool, const Scenario& s) {
  const auto& schema = data.schema();
  const std::size_t classes = schema.class_count();
  const auto counts = data.class_counts();
  const auto needs = pool_needs(s, counts);

  // first needs[c] pool entries per class, in pool order
  std::vector<std::vector<std::size_t>> chosen(classes);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const std::size_t t = pool[i].target;
    if (t < classes && chosen[t].size() < needs[t]) chosen[t].push_back(i);
  }
  for (std::size_t c = 0; c < classes; ++c)
    if (chosen[c].size() < needs[c])
      fail(ErrorCode::InsufficientPool, "pool cannot meet the target count", schema.class_name(c));

  std::unordered_map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < data.size(); ++i) row_of.emplace(data[i].id, i);

  std::vector<std::size_t> train_real, test_real, train_cf, test_cf;
  if (s.kind == ScenarioKind::C) {
    test_real = scenario_holdout(data, s);
    std::vector<bool> held(data.size(), false);
    for (auto i : test_real) held[i] = true;
    for (std::size_t i = 0; i < data.size(); ++i)
      if (!held[i]) train_real.push_back(i);
    for (const auto& ids : chosen) train_cf.insert(train_cf.end(), ids.begin(), ids.end());
  } else {
    std::vector<std::vector<std::size_t>> strata(2 * classes);
    for (std::size_t c = 0; c < classes; ++c) {
      strata[c] = data.indices_of_class(c);
      strata[classes + c] = chosen[c];
    }
    std::vector<std::size_t> sizes;
    for (const auto& st : strata) sizes.push_back(st.size());
    std::vector<std::size_t> alloc(sizes.size(), 0);
    {
      // empty strata stay empty; apportion over the populated ones
      std::vector<std::size_t> live, live_sizes;
      for (std::size_t k = 0; k < sizes.size(); ++k)
        if (sizes[k] > 0) {
          live.push_back(k);
          live_sizes.push_back(sizes[k]);
        }
      const auto a = apportion(live_sizes, s.train_frac, s.seed);
      for (std::size_t k = 0; k < live.size(); ++k) alloc[live[k]] = a[k];
    }

    std::mt19937_64 rng(s.seed ^ 0x9e3779b97f4a7c15ULL);
    // Train counterfactuals pull their parents into train; accept one only
    // while the parent's class still has room on the train side.
    std::vector<std::unordered_set<std::size_t>> forced(classes);
    for (std::size_t c = 0; c < classes; ++c) {
      auto order = strata[classes + c];
      std::shuffle(order.begin(), order.end(), rng);
      std::size_t taken = 0;
      for (auto pi : order) {
        bool take = false;
        if (taken < alloc[classes + c]) {
          auto it = row_of.find(pool[pi].parent_id);
          if (it == row_of.end()) {
            take = true;  // parent outside this cohort
          } else {
            const std::size_t p = it->second, pc = *data[p].label;
            if (forced[pc].count(p) || forced[pc].size() < alloc[pc]) {
              forced[pc].insert(p);
              take = true;
            }
          }
        }
        (take ? train_cf : test_cf).push_back(pi);
        if (take) ++taken;
      }
      if (taken < alloc[classes + c])
        fail(ErrorCode::LeakageViolation, "cannot place counterfactuals in train without their parents",
             schema.class_name(c));
    }
    for (std::size_t c = 0; c < classes; ++c) {
      std::vector<std::size_t> rest;
      for (auto i : strata[c]) (forced[c].count(i) ? train_real : rest).push_back(i);
      std::shuffle(rest.begin(), rest.end(), rng);
      std::size_t have = forced[c].size();
      for (auto i : rest) (have < alloc[c] ? (++have, train_real) : test_real).push_back(i);
    }
    std::sort(train_real.begin(), train_real.end());
    std::sort(test_real.begin(), test_real.end());
    std::sort(train_cf.begin(), train_cf.end());
    std::sort(test_cf.begin(), test_cf.end());
  }

  AugmentedSplit out;
  auto fill = [&](const std::vector<std::size_t>& real, const std::vector<std::size_t>& cf, Dataset& d,
                  std::vector<Provenance>& prov, std::vector<std::string>& parent) {
    std::vector<PatientRecord> recs;
    for (auto i : real) {
      recs.push_back(data[i]);
      prov.push_back(Provenance::Real);
      parent.emplace_back();
    }
    for (auto i : cf) {
      recs.push_back(pool[i].record);
      prov.push_back(Provenance::Counterfactual);
      parent.push_back(pool[i].parent_id);
    }
    d = Dataset(schema, std::move(recs));
  };
  fill(train_real, train_cf, out.train, out.train_provenance, out.train_parent);
  fill(test_real, test_cf, out.test, out.test_provenance, out.test_parent);
  check_leakage(out);
  return out;
}

struct ProvenanceRow {
  std::string id;
  std::string side;  // "train" or "test"
  Provenance provenance = Provenance::Real;
  std::string parent;

  bool operator==(const ProvenanceRow&) const = default;
};

inline std::vector<ProvenanceRow> provenance_rows(const AugmentedSplit& split) {
  std::vector<ProvenanceRow> rows;
  for (std::size_t i = 0; i < split.train.size(); ++i)
    rows.push_back({split.train[i].id, "train", split.train_provenance[i], split.train_parent[i]});
  for (std::size_t i = 0; i < split.test.size(); ++i)
    rows.push_back({split.test[i].id, "test", split.test_provenance[i], split.test_parent[i]});
  return rows;
}

inline void write_provenance_csv(std::ostream& os, const AugmentedSplit& split) {
  os << "id,side,provenance,parent\n";
  for (const auto& r : provenance_rows(split))
    os << detail::csv_field(r.id) << ',' << r.side << ','
       << (r.provenance == Provenance::Real ? "real" : "counterfactual") << ',' << detail::csv_field(r.parent) << '\n';
}

inline std::vector<ProvenanceRow> read_provenance_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) fail(ErrorCode::EmptyDataset, "provenance file is empty");
  std::vector<ProvenanceRow> rows;
  std::size_t n = 1;
  while (std::getline(is, line)) {
    ++n;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != 4) fail(ErrorCode::ParseError, "provenance row needs 4 cells", "row " + std::to_string(n));
    if (!cells[3].empty() && cells[3].back() == '\r') cells[3].pop_back();
    ProvenanceRow r{cells[0], cells[1], Provenance::Real, cells[3]};
    if (cells[2] == "counterfactual") r.provenance = Provenance::Counterfactual;
    else if (cells[2] != "real") fail(ErrorCode::ParseError, "unknown provenance '" + cells[2] + "'", "row " + std::to_string(n));
    if (r.side != "train" && r.side != "test") fail(ErrorCode::ParseError, "unknown side '" + r.side + "'", "row " + std::to_string(n));
    rows.push_back(std::move(r));
  }
  return rows;
}

struct MetricSummary {
  double mean = 0.0;
  double stddev = 0.0;  // sample form; 0 for a single run
};

inline MetricSummary summarize(std::span<const double> v) {
  MetricSummary m;
  if (v.empty()) return m;
  // shifted by the first value so identical runs give an exact mean and zero spread
  double shift = 0.0;
  for (double x : v) shift += x - v.front();
  m.mean = v.front() + shift / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - m.mean) * (x - m.mean);
    m.stddev = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return m;
}

struct ExperimentResult {
  Scenario scenario;
  std::vector<EvaluationMetrics> runs;
  MetricSummary precision, recall, f1;
  // composition of the first run
  std::size_t train_real = 0, train_cf = 0, test_real = 0, test_cf = 0;
};

/// Trains and evaluates once per run with seeds scenario.seed + r. Scenario C
/// has a fixed test side and runs once.
inline ExperimentResult run_experiment(const Dataset& data, const CfPool& pool, const Scenario& scenario,
                                       std::size_t n_runs, const TrainConfig& tcfg = {}) {
  if (n_runs < 1) fail(ErrorCode::InvalidArgument, "n_runs must be >= 1");
  if (scenario.kind == ScenarioKind::C) n_runs = 1;
  ExperimentResult res;
  res.scenario = scenario;
  std::vector<double> p, r, f;
  for (std::size_t run = 0; run < n_runs; ++run) {
    Scenario s = scenario;
    s.seed = scenario.seed + run;
    const auto split = build_scenario(data, pool, s);
    if (run == 0) {
      res.train_real = split.train_real();
      res.train_cf = split.train_cf();
      res.test_real = split.test_real();
      res.test_cf = split.test_cf();
    }
    TrainConfig tc = tcfg;
    tc.seed = s.seed;
    const auto m = evaluate_macro(train(split.train, tc), split.test);
    p.push_back(m.macro_precision);
    r.push_back(m.macro_recall);
    f.push_back(m.macro_f1);
    res.runs.push_back(m);
  }
  res.precision = summarize(p);
  res.recall = summarize(r);
  res.f1 = summarize(f);
  return res;
}

}  // namespace cfdx
