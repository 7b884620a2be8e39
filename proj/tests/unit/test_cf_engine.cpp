#include <gtest/gtest.h>

#include <cmath>

#include "cohorts.hpp"

using namespace cfdx;

namespace {

Counterfactual make_cf(const Model& m, const PatientRecord& x, std::vector<double> values, std::size_t target) {
  Counterfactual cf;
  cf.factual_id = x.id;
  cf.target = target;
  cf.values = std::move(values);
  cf.scaled = m.scaler().transform(cf.values);
  for (std::size_t j = 0; j < x.values.size(); ++j)
    if (cf.values[j] != x.values[j]) cf.delta.push_back({j, x.values[j], cf.values[j]});
  cf.achieved_class = m.predict(cf.values).class_index;
  cf.converged = cf.achieved_class == target;
  return cf;
}

// Smallest raw `a` (0.01 steps) that flips a planar factual at (a0, b) to class P.
double flip_point(const Model& m, double a0, double b) {
  for (double a = a0; a < 100.0; a += 0.01)
    if (m.predict(std::vector<double>{a, b}).class_index == 1) return a + 0.05;
  return 100.0;
}

void expect_member_invariants(const Model& m, const CounterfactualSet& set) {
  const auto& schema = m.schema();
  for (const auto& cf : set.members) {
    for (std::size_t j = 0; j < schema.feature_count(); ++j) {
      if (schema.feature(j).immutable) {
        EXPECT_EQ(cf.values[j], set.factual.values[j]) << schema.feature(j).name;
      }
      EXPECT_GE(cf.values[j], schema.feature(j).min);
      EXPECT_LE(cf.values[j], schema.feature(j).max);
    }
    for (std::size_t j : set.locked) EXPECT_EQ(cf.values[j], set.factual.values[j]);
    if (cf.converged) {
      EXPECT_EQ(cf.achieved_class, set.target);
      EXPECT_EQ(m.predict(cf.values).class_index, set.target);
    }
    for (const auto& d : cf.delta) {
      EXPECT_EQ(d.old_value, set.factual.values[d.feature]);
      EXPECT_EQ(d.new_value, cf.values[d.feature]);
      EXPECT_NE(d.old_value, d.new_value);
    }
  }
}

}  // namespace

TEST(Hinge, Examples) {
  EXPECT_DOUBLE_EQ(hinge_loss(2.0, +1), 0.0);
  EXPECT_NEAR(hinge_loss(0.2, +1), 0.8, 1e-12);
  EXPECT_NEAR(hinge_loss(0.5, -1), 1.5, 1e-12);
}

TEST(Hinge, MarginAgainstBestRival) {
  const std::vector<double> logits{1.0, 3.0, 2.5, -1.0};
  std::size_t rival = 99;
  EXPECT_DOUBLE_EQ(target_margin(logits, 2, &rival), -0.5);
  EXPECT_EQ(rival, 1u);
  EXPECT_DOUBLE_EQ(target_margin(logits, 1, &rival), 0.5);
  EXPECT_EQ(rival, 2u);
}

TEST(Proximity, Examples) {
  const std::vector<double> x{0.3, -1.0, 2.0}, mad{1.0, 0.5, 2.0};
  EXPECT_DOUBLE_EQ(proximity(x, x, mad), 0.0);
  const std::vector<double> c{0.3, -0.5, 2.0};
  EXPECT_DOUBLE_EQ(proximity(c, x, mad), 1.0);
  EXPECT_DOUBLE_EQ(proximity(c, x, mad), proximity(x, c, mad));
  const std::vector<double> zero_mad{0.0, 0.0, 0.0};
  EXPECT_DOUBLE_EQ(proximity(c, x, zero_mad), 0.5);
}

TEST(Proximity, LengthMismatch) {
  const std::vector<double> a{1.0, 2.0}, b{1.0}, mad{1.0, 1.0};
  try {
    proximity(a, b, mad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LengthMismatch);
  }
}

TEST(Diversity, Examples) {
  const std::vector<std::vector<double>> one{{1.0, 2.0}};
  EXPECT_DOUBLE_EQ(dpp_diversity(one), 1.0);
  const std::vector<std::vector<double>> same{{1.0, 2.0}, {1.0, 2.0}};
  EXPECT_NEAR(dpp_diversity(same), 0.0, 1e-15);
  const std::vector<std::vector<double>> apart{{0.0, 0.0}, {1.0, 0.0}};
  EXPECT_NEAR(dpp_diversity(apart), 0.75, 1e-12);
  const std::vector<double> mad{2.0, 1.0};
  const std::vector<std::vector<double>> scaled{{0.0, 0.0}, {2.0, 0.0}};
  EXPECT_NEAR(dpp_diversity(scaled, mad), 0.75, 1e-12);
}

TEST(Generate, TargetAlreadyPredictedYieldsZeroChange) {
  const auto& c = fixtures::synthetic();
  const auto& r = c.test.records().front();
  const auto pred = c.model.predict(r).class_index;
  const auto set = generate(c.model, r, pred);
  ASSERT_FALSE(set.members.empty());
  EXPECT_TRUE(set.members[0].converged);
  EXPECT_TRUE(set.members[0].delta.empty());
  EXPECT_EQ(set.members[0].values, r.values);
  expect_member_invariants(c.model, set);
}

TEST(Generate, MembersRespectConstraints) {
  const auto& c = fixtures::synthetic();
  std::size_t requests = 0, converged = 0;
  for (std::size_t i = 0; i < c.test.size(); i += 8) {
    const auto& r = c.test.records()[i];
    for (std::size_t t = 0; t < c.model.classes(); ++t) {
      CfConfig cfg;
      cfg.seed = i * 4 + t;
      const auto set = generate(c.model, r, t, cfg);
      EXPECT_LE(set.members.size(), cfg.k);
      expect_member_invariants(c.model, set);
      ++requests;
      converged += set.any_converged() ? 1 : 0;
      std::vector<std::vector<double>> pts;
      for (const auto& m : set.members) pts.push_back(m.scaled);
      if (!pts.empty()) {
        const double d = dpp_diversity(pts, c.model.mad());
        EXPECT_GE(d, -1e-12);
        EXPECT_LE(d, 1.0 + 1e-12);
      }
    }
  }
  EXPECT_GE(converged, requests * 95 / 100);
}

TEST(Generate, CallerLocksAreHonoured) {
  const auto& c = fixtures::synthetic();
  const auto& r = c.test.records()[3];
  const std::size_t target = (c.model.predict(r).class_index + 1) % c.model.classes();
  const std::vector<std::size_t> locks{0, 3, 6};
  const auto set = generate(c.model, r, target, {}, locks);
  EXPECT_EQ(set.locked, locks);
  expect_member_invariants(c.model, set);
}

TEST(Generate, MembersAreDistinct) {
  const auto& c = fixtures::synthetic();
  const auto& r = c.test.records()[5];
  const std::size_t target = (c.model.predict(r).class_index + 2) % c.model.classes();
  const auto set = generate(c.model, r, target);
  for (std::size_t a = 0; a < set.members.size(); ++a)
    for (std::size_t b = a + 1; b < set.members.size(); ++b)
      EXPECT_FALSE(detail::near_duplicate(set.members[a].scaled, set.members[b].scaled, 1e-3));
}

TEST(Generate, Deterministic) {
  const auto& c = fixtures::synthetic();
  const auto& r = c.test.records()[7];
  CfConfig cfg;
  cfg.seed = 42;
  const auto a = generate(c.model, r, std::size_t{1}, cfg);
  const auto b = generate(c.model, r, std::size_t{1}, cfg);
  ASSERT_EQ(a.members.size(), b.members.size());
  EXPECT_EQ(a.iterations, b.iterations);
  for (std::size_t i = 0; i < a.members.size(); ++i) {
    EXPECT_EQ(a.members[i].values, b.members[i].values);
    EXPECT_EQ(a.members[i].converged, b.members[i].converged);
  }
}

TEST(Generate, StrongerProximityWeightDoesNotMoveFurther) {
  const auto& c = fixtures::synthetic();
  std::vector<double> means;
  for (double l1 : {0.1, 0.5, 1.0}) {
    double sum = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < 12; ++i) {
      const auto& r = c.test.records()[i * 6];
      const std::size_t target = (c.model.predict(r).class_index + 1) % c.model.classes();
      CfConfig cfg;
      cfg.lambda1 = l1;
      cfg.seed = i;
      const auto set = generate(c.model, r, target, cfg);
      if (!set.any_converged()) continue;
      sum += mean_proximity(set, c.model);
      ++n;
    }
    ASSERT_GT(n, 0);
    means.push_back(sum / n);
  }
  EXPECT_LE(means[1], means[0] + 1e-9);
  EXPECT_LE(means[2], means[1] + 1e-9);
}

TEST(Generate, InvalidTarget) {
  const auto& c = fixtures::synthetic();
  const auto& r = c.test.records()[0];
  for (auto call : {+[](const Model& m, const PatientRecord& x) { generate(m, x, std::size_t{9}); },
                    +[](const Model& m, const PatientRecord& x) { generate(m, x, std::string_view("GLIOMA")); }}) {
    try {
      call(c.model, r);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidTarget);
    }
  }
}

TEST(Generate, BadConfig) {
  const auto& c = fixtures::synthetic();
  CfConfig cfg;
  cfg.k = 0;
  EXPECT_THROW(generate(c.model, c.test.records()[0], std::size_t{0}, cfg), Error);
  cfg.k = 3;
  cfg.lambda1 = -1.0;
  EXPECT_THROW(generate(c.model, c.test.records()[0], std::size_t{0}, cfg), Error);
}

TEST(Generate, NearGridOptimumOnPlanarModel) {
  const auto& m = fixtures::planar_model();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.8, 1.8);
  int within = 0;
  const int trials = 10;
  for (int i = 0; i < trials; ++i) {
    const std::vector<double> z{u(rng), u(rng)};
    PatientRecord x{"q" + std::to_string(i), std::nullopt, {m.scaler().inverse_one(0, z[0]), m.scaler().inverse_one(1, z[1])}};
    const std::size_t target = 1 - m.predict(x).class_index;
    CfConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(i);
    const auto set = generate(m, x, target, cfg);
    const auto xs = m.scaler().transform(x.values);
    double best = 1e300;
    for (const auto& cf : set.members)
      if (cf.converged) best = std::min(best, proximity(cf.scaled, xs, m.mad()));
    if (best <= fixtures::grid_optimum(m, xs, target) + 0.05) ++within;
  }
  EXPECT_GE(within, trials * 95 / 100);
}

TEST(Sparsify, NecessaryChangeIsKept) {
  const auto& m = fixtures::planar_model();
  PatientRecord x{"x", std::nullopt, {-2.0, -1.0}};
  ASSERT_EQ(m.predict(x).class_index, 0u);
  const auto cf = make_cf(m, x, {flip_point(m, -2.0, -1.0), -1.0}, 1);
  ASSERT_TRUE(cf.converged);
  const auto out = sparsify(cf, m);
  EXPECT_EQ(out.values, cf.values);
  EXPECT_EQ(out.delta.size(), 1u);
}

TEST(Sparsify, SpuriousPerturbationIsReverted) {
  const auto& m = fixtures::planar_model();
  PatientRecord x{"x", std::nullopt, {-2.0, -1.0}};
  const auto cf = make_cf(m, x, {flip_point(m, -2.0, -1.0), -1.0 + 1e-6}, 1);
  ASSERT_TRUE(cf.converged);
  ASSERT_EQ(cf.delta.size(), 2u);
  const auto out = sparsify(cf, m);
  EXPECT_EQ(out.delta.size(), 1u);
  EXPECT_EQ(out.values[1], x.values[1]);
  EXPECT_TRUE(out.converged);
}

TEST(Sparsify, NeverBreaksValidityOrProximity) {
  const auto& m = fixtures::planar_model();
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  int checked = 0;
  while (checked < 200) {
    PatientRecord x{"x", std::nullopt, {u(rng), u(rng)}};
    const auto cf = make_cf(m, x, {u(rng), u(rng)}, 1 - m.predict(x).class_index);
    if (!cf.converged) continue;
    ++checked;
    const auto out = sparsify(cf, m);
    const auto xs = m.scaler().transform(x.values);
    EXPECT_TRUE(out.converged);
    EXPECT_EQ(m.predict(out.values).class_index, cf.target);
    EXPECT_LE(proximity(out.scaled, xs, m.mad()), proximity(cf.scaled, xs, m.mad()) + 1e-12);
    EXPECT_LE(out.delta.size(), cf.delta.size());
  }
}

TEST(Sparsify, NonConvergedPassesThrough) {
  const auto& m = fixtures::planar_model();
  PatientRecord x{"x", std::nullopt, {-2.0, -1.0}};
  const auto cf = make_cf(m, x, {-1.9, -1.0}, 1);
  ASSERT_FALSE(cf.converged);
  const auto out = sparsify(cf, m);
  EXPECT_EQ(out.values, cf.values);
  EXPECT_FALSE(out.converged);
}
