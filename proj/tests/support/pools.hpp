#pragma once

#include <map>
#include <string>
#include <vector>

#include "cfdx.hpp"

namespace fixtures {

/// Cohort with exactly the given class sizes; values are irrelevant here.
inline cfdx::Dataset counted_cohort(const std::vector<std::size_t>& sizes) {
  const auto schema = cfdx::canonical_schema();
  std::vector<cfdx::PatientRecord> recs;
  for (std::size_t c = 0; c < sizes.size(); ++c)
    for (std::size_t i = 0; i < sizes[c]; ++i)
      recs.push_back({schema.class_name(c) + std::to_string(i), c,
                      std::vector<double>(schema.feature_count(), 1.0 + static_cast<double>(c))});
  return cfdx::Dataset(schema, std::move(recs));
}

/// Pool with the same shape build_cf_pool produces (round-robin parents from
/// the other classes, parent-derived ids) but without running the optimizer.
inline cfdx::CfPool fake_pool(const cfdx::Dataset& data, const std::vector<std::size_t>& needs,
                              const std::vector<bool>& eligible = {}) {
  const std::size_t classes = data.schema().class_count();
  cfdx::CfPool pool;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> uses;
  for (std::size_t t = 0; t < classes; ++t) {
    std::vector<std::vector<std::size_t>> sources;
    for (std::size_t s = 0; s < classes; ++s) {
      if (s == t) continue;
      std::vector<std::size_t> ps;
      for (auto i : data.indices_of_class(s))
        if (eligible.empty() || eligible[i]) ps.push_back(i);
      if (!ps.empty()) sources.push_back(std::move(ps));
    }
    std::vector<std::size_t> cursor(sources.size(), 0);
    for (std::size_t got = 0, k = 0; got < needs[t]; ++k) {
      auto& src = sources[k % sources.size()];
      const std::size_t p = src[cursor[k % sources.size()]++ % src.size()];
      const std::size_t u = uses[{p, t}]++;
      cfdx::PoolEntry e;
      e.parent_id = data[p].id;
      e.source = *data[p].label;
      e.target = t;
      e.record = {data[p].id + "-cf-" + data.schema().class_name(t) + "-" + std::to_string(u), t, data[p].values};
      pool.push_back(std::move(e));
      ++got;
    }
  }
  return pool;
}

/// (train total, train real, train cf, test total, test real, test cf)
struct Composition {
  std::size_t train, train_real, train_cf, test, test_real, test_cf;
  bool operator==(const Composition&) const = default;
};

inline Composition scenario_composition(const std::vector<std::size_t>& sizes, cfdx::ScenarioKind kind,
                                        std::uint64_t seed) {
  const auto data = counted_cohort(sizes);
  const auto counts = data.class_counts();
  const auto sc = cfdx::make_scenario(kind, counts, seed);
  const auto pool = fake_pool(data, cfdx::pool_needs(sc, counts), cfdx::eligible_parents(data, sc));
  const auto split = cfdx::build_scenario(data, pool, sc);
  return {split.train.size(), split.train_real(), split.train_cf(),
          split.test.size(),  split.test_real(),  split.test_cf()};
}

}  // namespace fixtures
