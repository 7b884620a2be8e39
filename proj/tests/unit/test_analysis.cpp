#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "cohorts.hpp"
#include "ttest_reference.hpp"

using namespace cfdx;

namespace {

// A set whose members change exactly the listed features by +1.
CounterfactualSet fake_set(const PatientRecord& factual, std::size_t target,
                           const std::vector<std::vector<std::size_t>>& member_changes, bool converged = true) {
  CounterfactualSet s;
  s.factual = factual;
  s.target = target;
  for (const auto& changes : member_changes) {
    Counterfactual cf;
    cf.factual_id = factual.id;
    cf.target = target;
    cf.values = factual.values;
    for (auto j : changes) {
      cf.values[j] += 1.0;
      cf.delta.push_back({j, factual.values[j], cf.values[j]});
    }
    cf.converged = converged;
    cf.achieved_class = target;
    s.members.push_back(std::move(cf));
  }
  return s;
}

PatientRecord patient(std::string id, std::optional<std::size_t> label, std::size_t width = 18) {
  return {std::move(id), label, std::vector<double>(width, 1.0)};
}

ChangeFrequencyReport report_with(std::vector<std::string> names, std::vector<std::size_t> counts) {
  ChangeFrequencyReport r;
  r.features = std::move(names);
  r.counts = std::move(counts);
  return r;
}

}  // namespace

TEST(ChangeFrequency, CountsEveryConvergedMember) {
  const auto schema = canonical_schema();
  std::vector<CounterfactualSet> sets;
  for (int i = 0; i < 25; ++i)
    sets.push_back(fake_set(patient("p" + std::to_string(i), 0), 1, {{3}, {3, 9}, {0}, {3}, {12, 0}}));
  const auto rep = change_frequency(schema, sets);
  EXPECT_EQ(rep.source_class, "MB");
  EXPECT_EQ(rep.target_class, "EP");
  EXPECT_EQ(rep.n_patients, 25u);
  EXPECT_EQ(rep.n_counterfactuals, 125u);
  EXPECT_EQ(rep.counts[3], 75u);
  EXPECT_EQ(rep.counts[0], 50u);
  EXPECT_EQ(rep.counts[9], 25u);
  EXPECT_EQ(rep.counts[12], 25u);
}

TEST(ChangeFrequency, NonConvergedMembersAreIgnored) {
  const auto schema = canonical_schema();
  std::vector<CounterfactualSet> sets{fake_set(patient("a", 2), 3, {{0}, {3}}),
                                      fake_set(patient("b", 2), 3, {{0}, {0}}, false)};
  const auto rep = change_frequency(schema, sets);
  EXPECT_EQ(rep.n_patients, 2u);
  EXPECT_EQ(rep.n_counterfactuals, 2u);
  EXPECT_EQ(rep.counts[0], 1u);
}

TEST(ChangeFrequency, EmptyInput) {
  const auto schema = canonical_schema();
  const auto rep = change_frequency(schema, std::vector<CounterfactualSet>{});
  EXPECT_EQ(rep.n_counterfactuals, 0u);
  EXPECT_EQ(rep.counts.size(), 18u);
  for (auto c : rep.counts) EXPECT_EQ(c, 0u);
}

TEST(ChangeFrequency, MixedTransitions) {
  const auto schema = canonical_schema();
  std::vector<CounterfactualSet> sets{fake_set(patient("a", 0), 1, {{0}}), fake_set(patient("b", 0), 2, {{0}})};
  try {
    change_frequency(schema, sets);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MixedTransitions);
  }
  sets[1] = fake_set(patient("b", 3), 1, {{0}});
  EXPECT_THROW(change_frequency(schema, sets), Error);
}

TEST(ChangeFrequency, SingleFreeFeatureIsAlwaysTheOneChanged) {
  const auto& c = fixtures::synthetic();
  const auto& schema = c.model.schema();
  const std::size_t free = *schema.feature_index("FLAIR_Tumor");
  std::vector<std::size_t> locks;
  for (std::size_t j = 0; j < schema.feature_count(); ++j)
    if (j != free && !schema.feature(j).immutable) locks.push_back(j);
  std::vector<CounterfactualSet> sets;
  for (auto i : c.test.indices_of_class(0)) {
    const auto& r = c.test[i];
    if (c.model.predict(r).class_index == 1) continue;
    sets.push_back(generate(c.model, r, std::size_t{1}, {}, locks));
  }
  const auto rep = change_frequency(schema, sets);
  for (std::size_t j = 0; j < schema.feature_count(); ++j)
    EXPECT_EQ(rep.counts[j], j == free ? rep.n_counterfactuals : 0u) << schema.feature(j).name;
}

TEST(ChangeFrequency, ImmutableFeaturesNeverCount) {
  const auto& c = fixtures::synthetic();
  CfConfig cfg;
  cfg.k = 3;
  const auto sets = generate_population(c.model, c.test, 2, 0, cfg);
  const auto rep = change_frequency(c.model.schema(), sets);
  EXPECT_EQ(rep.n_patients, c.test.indices_of_class(2).size());
  EXPECT_LE(rep.n_counterfactuals, rep.n_patients * cfg.k);
  for (std::size_t j = 0; j < rep.counts.size(); ++j) {
    EXPECT_LE(rep.counts[j], rep.n_counterfactuals);
    if (c.model.schema().feature(j).immutable) {
      EXPECT_EQ(rep.counts[j], 0u);
    }
  }
}

TEST(TopFeatures, AlphabeticTieBreak) {
  const auto rep = report_with({"D", "C", "B", "A"}, {0, 3, 3, 5});
  const auto top = top_features(rep, 3);
  ASSERT_EQ(top.size(), 3u);
  EXPECT_EQ(top[0], (std::pair<std::string, std::size_t>{"A", 5}));
  EXPECT_EQ(top[1], (std::pair<std::string, std::size_t>{"B", 3}));
  EXPECT_EQ(top[2], (std::pair<std::string, std::size_t>{"C", 3}));
}

TEST(TopFeatures, PublishedOrdering) {
  const auto rep = report_with({"T2_Tumor", "ADC_Ratio", "FLAIR_Tumor", "ADC_Tumor", "T2_Parenchyma"}, {12, 29, 71, 33, 0});
  const auto top = top_features(rep, 3);
  ASSERT_EQ(top.size(), 3u);
  EXPECT_EQ(top[0].first, "FLAIR_Tumor");
  EXPECT_EQ(top[1].first, "ADC_Tumor");
  EXPECT_EQ(top[2].first, "ADC_Ratio");
}

TEST(TopFeatures, ZerosAreDropped) {
  EXPECT_TRUE(top_features(report_with({"A", "B", "C"}, {0, 0, 0}), 3).empty());
  EXPECT_EQ(top_features(report_with({"A", "B", "C"}, {0, 2, 0}), 3).size(), 1u);
  EXPECT_THROW(top_features(report_with({"A"}, {1}), 0), Error);
}

TEST(PairedT, MatchesReferenceBattery) {
  for (const auto& c : fixtures::paired_battery()) {
    const auto r = paired_ttest(c.a, c.b);
    EXPECT_NEAR(r.t_statistic, c.t, 1e-6);
    EXPECT_NEAR(r.p_value, c.p, 1e-6);
    EXPECT_EQ(r.df, static_cast<double>(c.a.size() - 1));
  }
}

TEST(PairedT, SwapNegatesT) {
  for (const auto& c : fixtures::paired_battery()) {
    const auto ab = paired_ttest(c.a, c.b), ba = paired_ttest(c.b, c.a);
    EXPECT_DOUBLE_EQ(ab.t_statistic, -ba.t_statistic);
    EXPECT_DOUBLE_EQ(ab.p_value, ba.p_value);
  }
}

TEST(PairedT, Errors) {
  const std::vector<double> a{1, 2, 3}, b{1, 2};
  try {
    paired_ttest(a, a);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateVariance);
  }
  try {
    paired_ttest(a, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LengthMismatch);
  }
}

TEST(WelchT, MatchesReferenceBattery) {
  for (const auto& c : fixtures::welch_battery()) {
    const auto r = welch_ttest(c.a, c.b);
    EXPECT_NEAR(r.t_statistic, c.t, 1e-6);
    EXPECT_NEAR(r.p_value, c.p, 1e-6);
    EXPECT_NEAR(r.df, c.df, 1e-6);
  }
}

TEST(WelchT, SameSampleTwice) {
  const std::vector<double> a{1.0, 4.0, 2.5, 3.0};
  const auto r = welch_ttest(a, a);
  EXPECT_EQ(r.t_statistic, 0.0);
  EXPECT_EQ(r.p_value, 1.0);
}

TEST(WelchT, ReducesToPooledAtEqualVariance) {
  // b is a shifted copy of a: identical variance and size.
  std::mt19937_64 rng(12);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int k = 0; k < 20; ++k) {
    std::vector<double> a(8), b;
    for (auto& v : a) v = nd(rng);
    const double shift = nd(rng);
    for (double v : a) b.push_back(v + shift);
    EXPECT_NEAR(welch_ttest(a, b).t_statistic, pooled_ttest(a, b).t_statistic, 1e-9);
  }
}

TEST(WelchT, BothConstant) {
  const std::vector<double> a{2.0, 2.0}, b{3.0, 3.0};
  try {
    welch_ttest(a, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateVariance);
  }
}

TEST(Kde, SymmetricSamplesGiveSymmetricDensity) {
  const std::vector<double> s{-2.0, -0.5, -0.1, 0.1, 0.5, 2.0};
  const auto c = kde_estimate(s);
  const std::size_t n = c.grid.size();
  ASSERT_EQ(n, 512u);
  for (std::size_t i = 0; i < n; ++i) {
    EXPECT_NEAR(c.grid[i], -c.grid[n - 1 - i], 1e-9);
    EXPECT_NEAR(c.density[i], c.density[n - 1 - i], 1e-9);
  }
}

TEST(Kde, IntegratesToOne) {
  std::mt19937_64 rng(6);
  std::gamma_distribution<double> g(2.0, 1.5);
  for (std::size_t n : {2u, 5u, 40u, 300u}) {
    std::vector<double> s(n);
    for (auto& v : s) v = g(rng);
    const auto c = kde_estimate(s);
    for (double d : c.density) EXPECT_GE(d, 0.0);
    EXPECT_NEAR(integrate(c), 1.0, 0.02);
  }
}

TEST(Kde, RepeatedValueIsOneGaussian) {
  const std::vector<double> s(7, 3.0);
  const double h = 0.4;
  const auto c = kde_estimate(s, h);
  EXPECT_EQ(c.bandwidth, h);
  for (std::size_t i = 0; i < c.grid.size(); ++i) {
    const double u = (c.grid[i] - 3.0) / h;
    EXPECT_NEAR(c.density[i], std::exp(-0.5 * u * u) / (h * std::sqrt(2.0 * std::numbers::pi)), 1e-12);
  }
}

TEST(Kde, ScottBandwidth) {
  const std::vector<double> s{1.0, 2.0, 3.0, 4.0};
  EXPECT_NEAR(scott_bandwidth(s), std::pow(4.0, -0.2) * std::sqrt(5.0 / 3.0), 1e-12);
  const std::vector<double> flat(5, 1.0);
  try {
    kde_estimate(flat);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateSample);
  }
}

TEST(Suite, RowShapeAndTracks) {
  const auto& c = fixtures::synthetic();
  CfConfig cfg;
  cfg.k = 3;
  auto sets = generate_population(c.model, c.test, 0, 1, cfg);
  const auto self = generate_population(c.model, c.test, 2, 2, cfg);
  sets.insert(sets.end(), self.begin(), self.end());
  const auto rows = significance_suite(c.all, sets);
  std::size_t paired = 0, welch = 0;
  for (const auto& r : rows) {
    (r.track == Track::Paired ? paired : welch)++;
    EXPECT_TRUE(r.transition == "MB to EP" || r.transition == "PA to PA") << r.transition;
    EXPECT_EQ(r.original_class, r.transition.substr(0, 2));
    EXPECT_TRUE(r.result.has_value() != !r.flag.empty());
    if (r.result) {
      EXPECT_GE(r.result->p_value, 0.0);
      EXPECT_LE(r.result->p_value, 1.0);
      EXPECT_GT(r.result->df, 0.0);
    }
  }
  EXPECT_GT(paired, 0u);
  EXPECT_GT(welch, 0u);
  EXPECT_LE(paired, 10u);
  EXPECT_LE(welch, 6u);
}

TEST(Suite, SingleCounterfactualIsFlagged) {
  const auto& c = fixtures::synthetic();
  const auto idx = c.all.indices_of_class(0).front();
  std::vector<CounterfactualSet> sets{fake_set(c.all[idx], 1, {{0}})};
  const auto rows = significance_suite(c.all, sets);
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& r : rows) {
    EXPECT_FALSE(r.result.has_value());
    EXPECT_EQ(r.flag, "n < 2");
  }
}

TEST(Suite, DegenerateRowIsFlaggedNotFatal) {
  const auto& c = fixtures::synthetic();
  const auto idx = c.all.indices_of_class(0).front();
  // every member moves feature 0 by exactly +1, so paired differences are constant
  std::vector<CounterfactualSet> sets{fake_set(c.all[idx], 1, {{0}, {0}, {0}})};
  const auto rows = significance_suite(c.all, sets);
  ASSERT_FALSE(rows.empty());
  EXPECT_EQ(rows.front().track, Track::Paired);
  EXPECT_EQ(rows.front().flag, "DegenerateVariance");
}
