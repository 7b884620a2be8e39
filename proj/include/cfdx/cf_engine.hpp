#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cfdx/dataset.hpp"
#include "cfdx/error.hpp"
#include "cfdx/model.hpp"

namespace cfdx {

struct CfConfig {
  std::size_t k = 5;
  double lambda1 = 0.5;  // proximity weight
  double lambda2 = 1.0;  // diversity weight
  double learning_rate = 0.05;
  int max_iters = 5000;
  double sparsify_tolerance = 1e-3;
  std::uint64_t seed = 0;
  /// Box half-width in standardized units; the schema range can only narrow it.
  double scaled_bound = 2.0;
  /// Members start uniformly within this radius of the factual (standardized units).
  double init_radius = 0.5;
  /// Pull each valid member back along its segment to the decision boundary.
  bool boundary_refine = true;
  double loss_tolerance = 1e-6;
  int patience = 50;

  void validate() const {
    if (k < 1) fail(ErrorCode::InvalidArgument, "k must be >= 1");
    if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) fail(ErrorCode::InvalidArgument, "lambda weights must be >= 0");
    if (!(learning_rate > 0.0)) fail(ErrorCode::InvalidArgument, "learning rate must be > 0");
    if (max_iters < 0) fail(ErrorCode::InvalidArgument, "max_iters must be >= 0");
    if (!(sparsify_tolerance >= 0.0)) fail(ErrorCode::InvalidArgument, "sparsify tolerance must be >= 0");
    if (!(scaled_bound > 0.0)) fail(ErrorCode::InvalidArgument, "scaled bound must be > 0");
  }
};

struct FeatureChange {
  std::size_t feature = 0;
  double old_value = 0.0;
  double new_value = 0.0;
};

struct Counterfactual {
  std::string factual_id;
  std::size_t target = 0;
  std::vector<double> values;  // original feature space
  std::vector<double> scaled;  // standardized space of the model's scaler
  std::vector<FeatureChange> delta;  // every feature differing from the factual, by index
  bool converged = false;
  std::size_t achieved_class = 0;

  bool changes(std::size_t feature) const {
    return std::any_of(delta.begin(), delta.end(), [&](const FeatureChange& c) { return c.feature == feature; });
  }
  std::vector<std::size_t> changed_features() const {
    std::vector<std::size_t> out;
    for (const auto& c : delta) out.push_back(c.feature);
    return out;
  }
};

struct CounterfactualSet {
  PatientRecord factual;
  std::vector<double> factual_scaled;
  std::size_t target = 0;
  CfConfig config;
  std::vector<std::size_t> locked;  // caller-imposed locks on top of the schema's immutable features
  std::vector<Counterfactual> members;
  int iterations = 0;

  std::size_t converged_count() const {
    return static_cast<std::size_t>(
        std::count_if(members.begin(), members.end(), [](const Counterfactual& c) { return c.converged; }));
  }
  bool any_converged() const { return converged_count() > 0; }
};

/// max(0, 1 - z * logit) with z = +1 for the desired outcome and -1 otherwise.
inline double hinge_loss(double logit, int z) {
  return std::max(0.0, 1.0 - static_cast<double>(z) * logit);
}

/// Target logit minus the strongest competing logit.
inline double target_margin(std::span<const double> logits, std::size_t target, std::size_t* rival = nullptr) {
  double best = -std::numeric_limits<double>::infinity();
  std::size_t best_idx = target;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    if (c != target && logits[c] > best) {
      best = logits[c];
      best_idx = c;
    }
  }
  if (rival) *rival = best_idx;
  return logits[target] - best;
}

/// MAD-weighted L1 distance; a non-positive MAD counts as 1.
inline double proximity(std::span<const double> c, std::span<const double> x, std::span<const double> mad) {
  if (c.size() != x.size() || mad.size() != c.size())
    fail(ErrorCode::LengthMismatch, "proximity operands differ in length");
  double d = 0.0;
  for (std::size_t j = 0; j < c.size(); ++j) d += std::abs(c[j] - x[j]) / (mad[j] > 0.0 ? mad[j] : 1.0);
  return d;
}

namespace detail {

using Matrix = std::vector<std::vector<double>>;

inline double determinant(Matrix a) {
  const std::size_t n = a.size();
  double det = 1.0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    if (a[pivot][col] == 0.0) return 0.0;
    if (pivot != col) {
      std::swap(a[pivot], a[col]);
      det = -det;
    }
    det *= a[col][col];
    for (std::size_t r = col + 1; r < n; ++r) {
      const double factor = a[r][col] / a[col][col];
      for (std::size_t c = col; c < n; ++c) a[r][c] -= factor * a[col][c];
    }
  }
  return det;
}

/// Cofactor matrix via explicit minors; valid for singular input too.
inline Matrix cofactors(const Matrix& a) {
  const std::size_t n = a.size();
  Matrix cof(n, std::vector<double>(n, 1.0));
  if (n == 1) return cof;
  Matrix minor(n - 1, std::vector<double>(n - 1));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t r = 0, mr = 0; r < n; ++r) {
        if (r == i) continue;
        for (std::size_t c = 0, mc = 0; c < n; ++c) {
          if (c == j) continue;
          minor[mr][mc++] = a[r][c];
        }
        ++mr;
      }
      cof[i][j] = ((i + j) % 2 == 0 ? 1.0 : -1.0) * determinant(minor);
    }
  }
  return cof;
}

}  // namespace detail

/// Kernel K_ij = 1 / (1 + dist(c_i, c_j)) with the MAD-weighted L1 distance.
inline detail::Matrix dpp_kernel(std::span<const std::vector<double>> cfs, std::span<const double> mad) {
  const std::size_t k = cfs.size();
  detail::Matrix kmat(k, std::vector<double>(k, 1.0));
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j) kmat[i][j] = kmat[j][i] = 1.0 / (1.0 + proximity(cfs[i], cfs[j], mad));
  return kmat;
}

inline double dpp_diversity(std::span<const std::vector<double>> cfs, std::span<const double> mad) {
  if (cfs.empty()) fail(ErrorCode::InvalidArgument, "diversity of an empty set");
  return detail::determinant(dpp_kernel(cfs, mad));
}

/// Unit-MAD overload.
inline double dpp_diversity(std::span<const std::vector<double>> cfs) {
  if (cfs.empty()) fail(ErrorCode::InvalidArgument, "diversity of an empty set");
  return dpp_diversity(cfs, std::vector<double>(cfs.front().size(), 1.0));
}

namespace detail {

inline bool near_duplicate(std::span<const double> a, std::span<const double> b, double tol) {
  for (std::size_t j = 0; j < a.size(); ++j)
    if (std::abs(a[j] - b[j]) > tol) return false;
  return true;
}

inline bool duplicates_any(std::span<const double> c, std::span<const Counterfactual> others, double tol) {
  return std::any_of(others.begin(), others.end(),
                     [&](const Counterfactual& o) { return near_duplicate(c, o.scaled, tol); });
}

inline void rebuild_delta(Counterfactual& cf, std::span<const double> factual) {
  cf.delta.clear();
  for (std::size_t j = 0; j < factual.size(); ++j)
    if (cf.values[j] != factual[j]) cf.delta.push_back({j, factual[j], cf.values[j]});
}

/// Raw values of the factual reconstructed from a counterfactual and its delta.
inline std::vector<double> factual_of(const Counterfactual& cf) {
  std::vector<double> x = cf.values;
  for (const auto& c : cf.delta) x[c.feature] = c.old_value;
  return x;
}

}  // namespace detail

/// Greedily reverts changed features to their factual value, smallest
/// standardized change first, keeping each reversion only while the model
/// still predicts the target. A reversion that would make the member a
/// near-duplicate (within the tolerance) of one of `distinct_from` is refused.
inline Counterfactual sparsify(const Counterfactual& cf, const Model& model,
                               std::span<const Counterfactual> distinct_from = {},
                               double tolerance = 1e-3) {
  if (!cf.converged) return cf;
  const auto& scaler = model.scaler();
  const std::vector<double> factual = detail::factual_of(cf);
  std::vector<std::size_t> order = cf.changed_features();
  auto change = [&](std::size_t j) { return std::abs(cf.scaled[j] - scaler.transform_one(j, factual[j])); };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return change(a) < change(b); });

  Counterfactual out = cf;
  for (std::size_t j : order) {
    Counterfactual trial = out;
    trial.values[j] = factual[j];
    trial.scaled[j] = scaler.transform_one(j, factual[j]);
    if (model.predict(trial.values).class_index != cf.target) continue;
    if (detail::duplicates_any(trial.scaled, distinct_from, tolerance)) continue;
    out = std::move(trial);
  }
  detail::rebuild_delta(out, factual);
  out.achieved_class = model.predict(out.values).class_index;
  return out;
}

namespace detail {

class CfOptimizer {
 public:
  CfOptimizer(const Model& model, const PatientRecord& factual, std::size_t target, const CfConfig& cfg,
              std::span<const std::size_t> locks)
      : model_(model), factual_(factual), target_(target), cfg_(cfg) {
    const auto& schema = model.schema();
    const auto& scaler = model.scaler();
    const std::size_t f = schema.feature_count();
    x_ = scaler.transform(factual.values);
    frozen_.assign(f, false);
    lo_.resize(f);
    hi_.resize(f);
    for (std::size_t j = 0; j < f; ++j) {
      frozen_[j] = schema.feature(j).immutable || scaler.degenerate(j);
      const double sd = scaler.stddev()[j];
      double lo = -cfg.scaled_bound, hi = cfg.scaled_bound;
      if (sd > 0.0) {
        lo = std::max(lo, (schema.feature(j).min - scaler.mean()[j]) / sd);
        hi = std::min(hi, (schema.feature(j).max - scaler.mean()[j]) / sd);
      }
      // the factual itself is always feasible
      lo_[j] = std::min(lo, x_[j]);
      hi_[j] = std::max(hi, x_[j]);
    }
    for (auto j : locks) {
      if (j >= f) fail(ErrorCode::IndexOutOfRange, "locked feature index out of range");
      frozen_[j] = true;
    }
    factual_valid_ = model.predict(factual.values).class_index == target;
  }

  const std::vector<double>& factual_scaled() const { return x_; }
  bool factual_valid() const { return factual_valid_; }

  /// Gradient descent on the averaged hinge loss, the averaged proximity and
  /// the negated kernel determinant. The proximity term is applied as a
  /// soft-threshold (proximal) step so unneeded coordinates return exactly to
  /// the factual. Frozen coordinates are reset and all coordinates clipped
  /// after every step.
  std::vector<std::vector<double>> optimize(int* iterations) {
    const std::size_t k = cfg_.k, f = x_.size();
    std::vector<std::vector<double>> c(k, x_);
    std::vector<bool> fixed(k, false);
    std::mt19937_64 rng(cfg_.seed);
    std::uniform_real_distribution<double> unif(-cfg_.init_radius, cfg_.init_radius);
    for (std::size_t i = 0; i < k; ++i) {
      if (i == 0 && factual_valid_) {
        fixed[i] = true;  // the unchanged record already answers the request
        continue;
      }
      for (std::size_t j = 0; j < f; ++j)
        if (!frozen_[j]) c[i][j] = std::clamp(x_[j] + unif(rng), lo_[j], hi_[j]);
    }

    const auto& mad = model_.mad();
    const double inv_k = 1.0 / static_cast<double>(k);
    const double lr = cfg_.learning_rate;
    std::vector<double> grad(f);
    double previous = std::numeric_limits<double>::infinity();
    int calm = 0, it = 0;
    for (; it < cfg_.max_iters; ++it) {
      Matrix kmat, cof;
      double det = 1.0;
      const bool diverse = k > 1 && cfg_.lambda2 > 0.0;
      if (diverse) {
        kmat = dpp_kernel(c, mad);
        det = determinant(kmat);
        cof = cofactors(kmat);
      }

      double objective = diverse ? -cfg_.lambda2 * det : 0.0;
      bool all_valid = true;
      std::vector<std::vector<double>> next = c;
      for (std::size_t i = 0; i < k; ++i) {
        const auto logits = model_.logits_scaled(c[i]);
        std::size_t rival = 0;
        const double margin = target_margin(logits, target_, &rival);
        const double loss = hinge_loss(margin, 1);
        objective += inv_k * (loss + cfg_.lambda1 * proximity(c[i], x_, mad));
        if (margin <= 0.0) all_valid = false;
        if (fixed[i]) continue;

        std::fill(grad.begin(), grad.end(), 0.0);
        if (loss > 0.0)
          for (std::size_t j = 0; j < f; ++j) grad[j] -= inv_k * (model_.weight(target_, j) - model_.weight(rival, j));
        if (diverse) {
          for (std::size_t o = 0; o < k; ++o) {
            if (o == i) continue;
            const double kij = kmat[i][o];
            const double coef = 2.0 * cfg_.lambda2 * cof[i][o] * kij * kij;
            for (std::size_t j = 0; j < f; ++j) {
              const double diff = c[i][j] - c[o][j];
              if (diff != 0.0) grad[j] += coef * (diff > 0.0 ? 1.0 : -1.0) / mad[j];
            }
          }
        }
        for (std::size_t j = 0; j < f; ++j) {
          if (frozen_[j]) continue;
          double u = c[i][j] - lr * grad[j] - x_[j];
          const double shrink = lr * cfg_.lambda1 * inv_k / mad[j];
          u = u > shrink ? u - shrink : (u < -shrink ? u + shrink : 0.0);
          next[i][j] = std::clamp(x_[j] + u, lo_[j], hi_[j]);
        }
      }
      c.swap(next);

      if (all_valid && std::abs(objective - previous) <= cfg_.loss_tolerance * (1.0 + std::abs(objective))) {
        if (++calm >= cfg_.patience) break;
      } else {
        calm = 0;
      }
      previous = objective;
    }
    if (iterations) *iterations = it;
    return c;
  }

  Counterfactual materialize(std::span<const double> c) const {
    const auto& scaler = model_.scaler();
    const auto& schema = model_.schema();
    Counterfactual cf;
    cf.factual_id = factual_.id;
    cf.target = target_;
    cf.values = factual_.values;
    cf.scaled = x_;
    for (std::size_t j = 0; j < c.size(); ++j) {
      if (frozen_[j] || c[j] == x_[j]) continue;
      double raw = std::clamp(scaler.inverse_one(j, c[j]), schema.feature(j).min, schema.feature(j).max);
      if (raw == factual_.values[j]) continue;
      cf.values[j] = raw;
      cf.scaled[j] = scaler.transform_one(j, raw);
    }
    detail::rebuild_delta(cf, factual_.values);
    cf.achieved_class = model_.predict(cf.values).class_index;
    cf.converged = cf.achieved_class == target_;
    return cf;
  }

  /// Bisection on t in [0, 1] for the closest point x + t (c - x) that is still
  /// classified as the target.
  Counterfactual refine(const Counterfactual& cf) const {
    double lo = 0.0, hi = 1.0;
    Counterfactual best = cf;
    for (int step = 0; step < 60; ++step) {
      const double mid = 0.5 * (lo + hi);
      std::vector<double> point(x_.size());
      for (std::size_t j = 0; j < x_.size(); ++j) point[j] = cf.scaled[j] == x_[j] ? x_[j] : x_[j] + mid * (cf.scaled[j] - x_[j]);
      Counterfactual trial = materialize(point);
      if (trial.converged) {
        hi = mid;
        best = std::move(trial);
      } else {
        lo = mid;
      }
    }
    return best;
  }

 private:
  const Model& model_;
  const PatientRecord& factual_;
  std::size_t target_;
  const CfConfig& cfg_;
  std::vector<double> x_;
  std::vector<bool> frozen_;
  std::vector<double> lo_, hi_;
  bool factual_valid_ = false;
};

}  // namespace detail

/// Generates up to k diverse counterfactuals moving `factual` to `target`.
/// Members that fail to reach the target are returned with converged=false.
/// Near-duplicate members are dropped, so the set may hold fewer than k.
inline CounterfactualSet generate(const Model& model, const PatientRecord& factual, std::size_t target,
                                  const CfConfig& cfg = {}, std::span<const std::size_t> locks = {}) {
  cfg.validate();
  if (target >= model.classes()) fail(ErrorCode::InvalidTarget, "target class index out of range");
  if (factual.values.size() != model.features())
    fail(ErrorCode::SchemaMismatch, "factual width does not match model schema", factual.id);

  detail::CfOptimizer opt(model, factual, target, cfg, locks);
  CounterfactualSet set;
  set.factual = factual;
  set.factual_scaled = opt.factual_scaled();
  set.target = target;
  set.config = cfg;
  set.locked.assign(locks.begin(), locks.end());

  const auto raw_members = opt.optimize(&set.iterations);
  for (const auto& c : raw_members) {
    Counterfactual cf = opt.materialize(c);
    if (cf.converged) {
      cf = sparsify(cf, model, set.members, cfg.sparsify_tolerance);
      if (cfg.boundary_refine && !opt.factual_valid()) {
        Counterfactual refined = opt.refine(cf);
        if (!detail::duplicates_any(refined.scaled, set.members, cfg.sparsify_tolerance)) cf = std::move(refined);
      }
    }
    if (detail::duplicates_any(cf.scaled, set.members, cfg.sparsify_tolerance)) continue;
    set.members.push_back(std::move(cf));
  }
  return set;
}

inline CounterfactualSet generate(const Model& model, const PatientRecord& factual, std::string_view target,
                                  const CfConfig& cfg = {}, std::span<const std::size_t> locks = {}) {
  auto idx = model.schema().class_index(target);
  if (!idx) fail(ErrorCode::InvalidTarget, "unknown target class '" + std::string(target) + "'");
  return generate(model, factual, *idx, cfg, locks);
}

/// Mean MAD-weighted proximity of the converged members.
inline double mean_proximity(const CounterfactualSet& set, const Model& model) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& m : set.members) {
    if (!m.converged) continue;
    sum += proximity(m.scaled, set.factual_scaled, model.mad());
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

}  // namespace cfdx
