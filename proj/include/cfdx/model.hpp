#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfdx/dataset.hpp"
#include "cfdx/error.hpp"
#include "cfdx/scaler.hpp"
#include "cfdx/schema.hpp"

namespace cfdx {

struct TrainConfig {
  double learning_rate = 0.1;
  int epochs = 2000;
  double l2 = 1e-3;
  std::uint64_t seed = 0;
  double gradient_tolerance = 1e-10;
};

struct Prediction {
  std::vector<double> logits;
  std::vector<double> probabilities;
  std::size_t class_index = 0;
};

/// Numerically stable softmax.
inline std::vector<double> softmax(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) z += (p[i] = std::exp(logits[i] - m));
  for (auto& v : p) v /= z;
  return p;
}

/// First maximal index.
inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

/// Row-major design matrix of standardized features.
struct DesignMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> x;
  std::vector<std::size_t> y;

  double at(std::size_t r, std::size_t c) const { return x[r * cols + c]; }
};

/// Mean softmax cross-entropy plus (l2/2)||W||^2 and its gradient. Parameters
/// are laid out as the row-major [classes x features] weight matrix followed
/// by the per-class bias.
inline double softmax_loss_and_gradient(std::span<const double> params, const DesignMatrix& data,
                                        std::size_t classes, double l2, std::vector<double>* grad) {
  const std::size_t f = data.cols;
  const double* w = params.data();
  const double* b = params.data() + classes * f;
  if (grad) grad->assign(params.size(), 0.0);
  double loss = 0.0;
  std::vector<double> logits(classes);
  for (std::size_t r = 0; r < data.rows; ++r) {
    const double* xr = data.x.data() + r * f;
    for (std::size_t c = 0; c < classes; ++c) {
      double s = b[c];
      for (std::size_t j = 0; j < f; ++j) s += w[c * f + j] * xr[j];
      logits[c] = s;
    }
    const double m = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - m);
    const double lse = m + std::log(z);
    loss += lse - logits[data.y[r]];
    if (grad) {
      for (std::size_t c = 0; c < classes; ++c) {
        const double residual = std::exp(logits[c] - lse) - (c == data.y[r] ? 1.0 : 0.0);
        for (std::size_t j = 0; j < f; ++j) (*grad)[c * f + j] += residual * xr[j];
        (*grad)[classes * f + c] += residual;
      }
    }
  }
  const double n = static_cast<double>(data.rows);
  loss /= n;
  double penalty = 0.0;
  for (std::size_t i = 0; i < classes * f; ++i) penalty += w[i] * w[i];
  loss += 0.5 * l2 * penalty;
  if (grad) {
    for (auto& g : *grad) g /= n;
    for (std::size_t i = 0; i < classes * f; ++i) (*grad)[i] += l2 * w[i];
  }
  return loss;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

/// Multinomial logistic regression over standardized features. Immutable
/// after construction.
class Model {
 public:
  Model() = default;
  Model(FeatureSchema schema, StandardScaler scaler, std::vector<double> weights, std::vector<double> bias,
        std::vector<double> mad)
      : schema_(std::move(schema)),
        scaler_(std::move(scaler)),
        weights_(std::move(weights)),
        bias_(std::move(bias)),
        mad_(std::move(mad)) {
    const auto c = schema_.class_count(), f = schema_.feature_count();
    if (weights_.size() != c * f || bias_.size() != c || scaler_.size() != f || mad_.size() != f)
      fail(ErrorCode::SchemaMismatch, "model parameter shapes do not match schema");
    for (double v : weights_)
      if (!std::isfinite(v)) fail(ErrorCode::NonFiniteLoss, "non-finite model weight");
    for (double v : bias_)
      if (!std::isfinite(v)) fail(ErrorCode::NonFiniteLoss, "non-finite model bias");
    for (auto& m : mad_)
      if (!(m > 0.0) || !std::isfinite(m)) m = 1.0;
  }

  const FeatureSchema& schema() const noexcept { return schema_; }
  const StandardScaler& scaler() const noexcept { return scaler_; }
  std::size_t classes() const noexcept { return schema_.class_count(); }
  std::size_t features() const noexcept { return schema_.feature_count(); }
  double weight(std::size_t c, std::size_t j) const { return weights_[c * features() + j]; }
  double bias(std::size_t c) const { return bias_[c]; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  const std::vector<double>& biases() const noexcept { return bias_; }
  /// Median absolute deviation of each standardized training feature (1 where degenerate).
  const std::vector<double>& mad() const noexcept { return mad_; }

  std::vector<double> logits_scaled(std::span<const double> z) const {
    if (z.size() != features()) fail(ErrorCode::SchemaMismatch, "record width does not match model");
    std::vector<double> out(classes());
    for (std::size_t c = 0; c < classes(); ++c) {
      double s = bias_[c];
      for (std::size_t j = 0; j < features(); ++j) s += weights_[c * features() + j] * z[j];
      out[c] = s;
    }
    return out;
  }

  Prediction predict_scaled(std::span<const double> z) const {
    Prediction p;
    p.logits = logits_scaled(z);
    p.probabilities = softmax(p.logits);
    p.class_index = argmax(p.logits);
    return p;
  }

  Prediction predict(std::span<const double> raw) const {
    if (raw.size() != features()) fail(ErrorCode::SchemaMismatch, "record width does not match model");
    return predict_scaled(scaler_.transform(raw));
  }

  Prediction predict(const PatientRecord& r) const { return predict(r.values); }

  nlohmann::json to_json() const {
    nlohmann::json w = nlohmann::json::array();
    for (std::size_t c = 0; c < classes(); ++c)
      w.push_back(std::vector<double>(weights_.begin() + static_cast<std::ptrdiff_t>(c * features()),
                                      weights_.begin() + static_cast<std::ptrdiff_t>((c + 1) * features())));
    return {{"format", "cfdx-model"}, {"version", 1},     {"schema_hash", schema_.hash()},
            {"schema", schema_.to_json()}, {"weights", w}, {"bias", bias_},
            {"scaler", scaler_.to_json()}, {"mad", mad_}};
  }

  static Model from_json(const nlohmann::json& j) {
    try {
      if (j.at("format") != "cfdx-model") fail(ErrorCode::ParseError, "not a model document");
      if (j.at("version").get<int>() != 1) fail(ErrorCode::ParseError, "unsupported model version");
      auto schema = FeatureSchema::from_json(j.at("schema"));
      if (schema.hash() != j.at("schema_hash").get<std::string>())
        fail(ErrorCode::SchemaMismatch, "model schema hash does not match embedded schema");
      std::vector<double> w;
      for (const auto& row : j.at("weights"))
        for (double v : row) w.push_back(v);
      return Model(std::move(schema), StandardScaler::from_json(j.at("scaler")), std::move(w),
                   j.at("bias").get<std::vector<double>>(), j.at("mad").get<std::vector<double>>());
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::ParseError, "malformed model document", e.what());
    }
  }

 private:
  FeatureSchema schema_;
  StandardScaler scaler_;
  std::vector<double> weights_;
  std::vector<double> bias_;
  std::vector<double> mad_;
};

inline void save_model(const std::string& path, const Model& m) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write model", path);
  out << m.to_json().dump(2) << '\n';
}

inline Model load_model(const std::string& path, const FeatureSchema* expected = nullptr) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open model", path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, "model file is not valid JSON", e.what());
  }
  Model m = Model::from_json(j);
  if (expected && expected->hash() != m.schema().hash())
    fail(ErrorCode::SchemaMismatch, "model was trained on a different schema");
  return m;
}

inline DesignMatrix design_matrix(const Dataset& data, const StandardScaler& scaler) {
  DesignMatrix d;
  d.rows = data.size();
  d.cols = data.schema().feature_count();
  d.x.reserve(d.rows * d.cols);
  for (const auto& r : data.records()) {
    if (!r.label) fail(ErrorCode::UnknownLabel, "training records must be labelled", r.id);
    auto z = scaler.transform(r.values);
    d.x.insert(d.x.end(), z.begin(), z.end());
    d.y.push_back(*r.label);
  }
  return d;
}

struct TrainResult {
  Model model;
  std::vector<double> loss_history;
};

/// Full-batch gradient descent from zero weights. A step that would raise the
/// loss is retried with half the learning rate, so the recorded loss never
/// increases.
inline TrainResult train_with_history(const Dataset& train, const TrainConfig& cfg = {}) {
  if (train.empty()) fail(ErrorCode::EmptyDataset, "cannot train on an empty dataset");
  {
    auto counts = train.class_counts();
    if (std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }) < 2)
      fail(ErrorCode::SingleClassDataset, "training data must contain at least two classes");
  }
  const auto& schema = train.schema();
  StandardScaler scaler = fit_scaler(train);
  const DesignMatrix data = design_matrix(train, scaler);
  const std::size_t classes = schema.class_count(), f = schema.feature_count();

  std::vector<double> params(classes * f + classes, 0.0), grad, trial(params.size());
  TrainResult result;
  double loss = softmax_loss_and_gradient(params, data, classes, cfg.l2, &grad);
  result.loss_history.push_back(loss);
  double lr = cfg.learning_rate;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double gmax = 0.0;
    for (double g : grad) gmax = std::max(gmax, std::abs(g));
    if (gmax < cfg.gradient_tolerance) break;
    double next = std::numeric_limits<double>::infinity();
    for (int halvings = 0; halvings < 60; ++halvings) {
      for (std::size_t i = 0; i < params.size(); ++i) trial[i] = params[i] - lr * grad[i];
      next = softmax_loss_and_gradient(trial, data, classes, cfg.l2, nullptr);
      if (std::isfinite(next) && next <= loss) break;
      lr *= 0.5;
    }
    if (!std::isfinite(next)) fail(ErrorCode::NonFiniteLoss, "training loss became non-finite");
    if (next > loss) break;  // no descent step exists at machine precision
    params.swap(trial);
    loss = softmax_loss_and_gradient(params, data, classes, cfg.l2, &grad);
    result.loss_history.push_back(loss);
  }

  std::vector<double> mad(f);
  for (std::size_t j = 0; j < f; ++j) {
    std::vector<double> col(data.rows);
    for (std::size_t r = 0; r < data.rows; ++r) col[r] = data.at(r, j);
    const double med = median(col);
    for (auto& v : col) v = std::abs(v - med);
    mad[j] = median(col);
  }
  std::vector<double> w(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(classes * f));
  std::vector<double> b(params.begin() + static_cast<std::ptrdiff_t>(classes * f), params.end());
  result.model = Model(schema, std::move(scaler), std::move(w), std::move(b), std::move(mad));
  return result;
}

inline Model train(const Dataset& train, const TrainConfig& cfg = {}) {
  return train_with_history(train, cfg).model;
}

struct ClassCounts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

struct EvaluationMetrics {
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::vector<ClassCounts> per_class;
};

/// Macro averages over the classes that occur in either y_true or y_pred.
/// A zero denominator scores 0.
inline EvaluationMetrics macro_metrics(std::span<const std::size_t> y_true, std::span<const std::size_t> y_pred,
                                       std::size_t classes) {
  if (y_true.empty()) fail(ErrorCode::EmptyDataset, "cannot evaluate on an empty set");
  if (y_true.size() != y_pred.size()) fail(ErrorCode::LengthMismatch, "label vectors differ in length");
  EvaluationMetrics m;
  m.per_class.resize(classes);
  std::vector<bool> present(classes, false);
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    present[y_true[i]] = present[y_pred[i]] = true;
    for (std::size_t c = 0; c < classes; ++c) {
      const bool t = y_true[i] == c, p = y_pred[i] == c;
      auto& cc = m.per_class[c];
      if (t && p) ++cc.tp;
      else if (!t && p) ++cc.fp;
      else if (t && !p) ++cc.fn;
      else ++cc.tn;
    }
  }
  auto ratio = [](std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  std::size_t used = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    if (!present[c]) continue;
    ++used;
    const auto& cc = m.per_class[c];
    const double p = ratio(cc.tp, cc.tp + cc.fp);
    const double r = ratio(cc.tp, cc.tp + cc.fn);
    m.macro_precision += p;
    m.macro_recall += r;
    m.macro_f1 += (p + r) == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
  }
  m.macro_precision /= static_cast<double>(used);
  m.macro_recall /= static_cast<double>(used);
  m.macro_f1 /= static_cast<double>(used);
  return m;
}

inline EvaluationMetrics evaluate_macro(const Model& model, const Dataset& test) {
  if (test.empty()) fail(ErrorCode::EmptyDataset, "cannot evaluate on an empty dataset");
  std::vector<std::size_t> y_true, y_pred;
  for (const auto& r : test.records()) {
    if (!r.label) fail(ErrorCode::UnknownLabel, "evaluation records must be labelled", r.id);
    y_true.push_back(*r.label);
    y_pred.push_back(model.predict(r).class_index);
  }
  return macro_metrics(y_true, y_pred, model.classes());
}

}  // namespace cfdx
