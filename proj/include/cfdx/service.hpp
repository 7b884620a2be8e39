#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "cfdx/analysis.hpp"
#include "cfdx/cf_classifier.hpp"
#include "cfdx/cf_engine.hpp"
#include "cfdx/dataset.hpp"
#include "cfdx/error.hpp"
#include "cfdx/export.hpp"
#include "cfdx/kde.hpp"
#include "cfdx/model.hpp"

namespace cfdx {

struct Response {
  int status = 200;
  nlohmann::json body;
};

inline int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownLabel:
    case ErrorCode::InvalidTarget:
      return 404;
    case ErrorCode::AllClassesFailed:
    case ErrorCode::DegenerateSample:
    case ErrorCode::DegenerateVariance:
    case ErrorCode::InsufficientPool:
    case ErrorCode::ClassTooSmall:
    case ErrorCode::EmptyDataset:
    case ErrorCode::MixedTransitions:
      return 422;
    case ErrorCode::IoError:
    case ErrorCode::NonFiniteLoss:
    case ErrorCode::LeakageViolation:
      return 500;
    default:
      return 400;
  }
}

inline Response error_response(const Error& e) {
  return {http_status(e.code()),
          {{"code", std::string(to_string(e.code()))}, {"message", e.what()}, {"detail", e.detail()}}};
}

/// Locked feature indices: schema-immutable features plus the user's extra
/// locks. A lock list that leaves out an immutable feature, or an unlock list
/// that names one, is rejected.
inline std::vector<std::size_t> resolve_locks(const FeatureSchema& schema,
                                              const std::optional<std::vector<std::string>>& locked,
                                              const std::vector<std::string>& unlocked = {}) {
  std::vector<bool> mask = schema.immutable_mask();
  for (const auto& name : unlocked) {
    const std::size_t j = schema.require_feature(name);
    if (schema.feature(j).immutable) fail(ErrorCode::InvalidLock, "cannot unlock an immutable feature", name);
  }
  if (locked) {
    std::vector<bool> listed(schema.feature_count(), false);
    for (const auto& name : *locked) listed[schema.require_feature(name)] = true;
    for (std::size_t j = 0; j < schema.feature_count(); ++j) {
      if (schema.feature(j).immutable && !listed[j])
        fail(ErrorCode::InvalidLock, "lock list omits an immutable feature", schema.feature(j).name);
      if (listed[j]) mask[j] = true;
    }
  }
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < mask.size(); ++j)
    if (mask[j]) out.push_back(j);
  return out;
}

/// Stateless request handlers over a model and dataset loaded at startup.
class Service {
 public:
  Service(Model model, Dataset data, CfConfig defaults = {})
      : model_(std::move(model)), data_(std::move(data)), defaults_(defaults) {
    if (!(data_.schema() == model_.schema()))
      fail(ErrorCode::SchemaMismatch, "dataset schema differs from the model schema");
  }

  const Model& model() const { return model_; }

  Response schema() const { return {200, model_.schema().to_json()}; }

  Response whatif(const std::string& body) const {
    return guarded([&] {
      const auto req = parse(body);
      const auto& schema = model_.schema();
      const PatientRecord record = read_record(req);
      const CfConfig cfg = read_config(req);
      std::optional<std::vector<std::string>> locked;
      if (req.contains("locked")) locked = req.at("locked").get<std::vector<std::string>>();
      std::vector<std::string> unlocked;
      if (req.contains("unlocked")) unlocked = req.at("unlocked").get<std::vector<std::string>>();
      const auto locks = resolve_locks(schema, locked, unlocked);

      std::vector<std::size_t> targets;
      if (req.contains("targets")) {
        for (const auto& t : req.at("targets").get<std::vector<std::string>>()) {
          auto idx = schema.class_index(t);
          if (!idx) fail(ErrorCode::InvalidTarget, "unknown target class", t);
          targets.push_back(*idx);
        }
      } else {
        for (std::size_t c = 0; c < schema.class_count(); ++c) targets.push_back(c);
      }

      std::vector<CounterfactualSet> sets;
      for (auto t : targets) sets.push_back(generate(model_, record, t, cfg, locks));
      nlohmann::json per_class = nlohmann::json::array();
      for (const auto& s : sets) {
        auto j = counterfactual_set_json(schema, s);
        j["status"] = s.any_converged() ? "ok" : "GenerationFailed";
        per_class.push_back(std::move(j));
      }
      nlohmann::json locked_names = nlohmann::json::array();
      for (auto j : locks) locked_names.push_back(schema.feature(j).name);
      nlohmann::json out = {{"id", record.id},
                            {"model_prediction", schema.class_name(model_.predict(record.values).class_index)},
                            {"locked", locked_names},
                            {"per_class", per_class}};
      try {
        out["report"] = distance_report_json(schema, distance_report(model_, sets, cfg.scaled_bound));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::AllClassesFailed) throw;
        out["report"] = nullptr;
      }
      return Response{200, out};
    });
  }

  Response classify(const std::string& body) const {
    return guarded([&] {
      const auto req = parse(body);
      const PatientRecord record = read_record(req);
      const CfConfig cfg = read_config(req);
      const auto locks = resolve_locks(model_.schema(), std::nullopt);
      return Response{200, distance_report_json(model_.schema(), classify_unknown(model_, cfg, record, locks))};
    });
  }

  Response changes(const std::string& from, const std::string& to, std::size_t top_k = 5) const {
    return guarded([&] {
      const auto& schema = model_.schema();
      const std::size_t src = schema.require_class(from), dst = schema.require_class(to);
      const auto sets = generate_population(model_, data_, src, dst, defaults_);
      auto rep = change_frequency(schema, sets);
      rep.source_class = from;
      rep.target_class = to;
      return Response{200, change_frequency_json(rep, top_k)};
    });
  }

  Response kde(const std::string& feature, const std::string& cls) const {
    return guarded([&] {
      const auto& schema = model_.schema();
      const std::size_t j = schema.require_feature(feature);
      const std::size_t c = schema.require_class(cls);
      std::vector<double> values;
      for (auto i : data_.indices_of_class(c)) values.push_back(data_[i].values[j]);
      auto out = kde_json(kde_estimate(values));
      out["feature"] = feature;
      out["class"] = cls;
      return Response{200, out};
    });
  }

  /// Registers the routes on an httplib server.
  void bind(httplib::Server& server) const {
    auto send = [](httplib::Response& res, const Response& r) {
      res.status = r.status;
      res.set_content(r.body.dump(), "application/json");
    };
    server.Get("/schema", [this, send](const httplib::Request&, httplib::Response& res) { send(res, schema()); });
    server.Post("/whatif",
                [this, send](const httplib::Request& req, httplib::Response& res) { send(res, whatif(req.body)); });
    server.Post("/classify",
                [this, send](const httplib::Request& req, httplib::Response& res) { send(res, classify(req.body)); });
    server.Get("/reports/changes", [this, send](const httplib::Request& req, httplib::Response& res) {
      if (!req.has_param("from") || !req.has_param("to"))
        return send(res, error_response(Error(ErrorCode::InvalidArgument, "from and to are required")));
      send(res, changes(req.get_param_value("from"), req.get_param_value("to")));
    });
    server.Get("/kde", [this, send](const httplib::Request& req, httplib::Response& res) {
      if (!req.has_param("feature") || !req.has_param("class"))
        return send(res, error_response(Error(ErrorCode::InvalidArgument, "feature and class are required")));
      send(res, kde(req.get_param_value("feature"), req.get_param_value("class")));
    });
  }

 private:
  template <class F>
  static Response guarded(F&& f) {
    try {
      return f();
    } catch (const Error& e) {
      return error_response(e);
    } catch (const nlohmann::json::exception& e) {
      return error_response(Error(ErrorCode::ParseError, "malformed request", e.what()));
    }
  }

  static nlohmann::json parse(const std::string& body) {
    try {
      auto j = nlohmann::json::parse(body);
      if (!j.is_object()) fail(ErrorCode::ParseError, "request body must be a JSON object");
      return j;
    } catch (const nlohmann::json::parse_error& e) {
      fail(ErrorCode::ParseError, "request body is not valid JSON", e.what());
    }
  }

  PatientRecord read_record(const nlohmann::json& req) const {
    const auto& schema = model_.schema();
    PatientRecord r;
    r.id = req.value("id", std::string("request"));
    if (!req.contains("values")) fail(ErrorCode::SchemaMismatch, "request has no values");
    const auto& v = req.at("values");
    if (v.is_array()) {
      if (v.size() != schema.feature_count())
        fail(ErrorCode::SchemaMismatch, "values array width does not match the schema");
      r.values = v.get<std::vector<double>>();
    } else if (v.is_object()) {
      r.values.resize(schema.feature_count());
      for (std::size_t j = 0; j < schema.feature_count(); ++j) {
        const auto& name = schema.feature(j).name;
        if (!v.contains(name)) fail(ErrorCode::SchemaMismatch, "missing feature value", name);
        r.values[j] = v.at(name).get<double>();
      }
      for (const auto& [key, _] : v.items())
        if (!schema.feature_index(key)) fail(ErrorCode::SchemaMismatch, "unknown feature", key);
    } else {
      fail(ErrorCode::SchemaMismatch, "values must be an array or an object");
    }
    for (double x : r.values)
      if (!std::isfinite(x)) fail(ErrorCode::SchemaMismatch, "non-finite feature value");
    return r;
  }

  CfConfig read_config(const nlohmann::json& req) const {
    CfConfig cfg = defaults_;
    if (req.contains("k")) cfg.k = req.at("k").get<std::size_t>();
    if (req.contains("seed")) cfg.seed = req.at("seed").get<std::uint64_t>();
    if (req.contains("lambda1")) cfg.lambda1 = req.at("lambda1").get<double>();
    if (req.contains("lambda2")) cfg.lambda2 = req.at("lambda2").get<double>();
    cfg.validate();
    return cfg;
  }

  Model model_;
  Dataset data_;
  CfConfig defaults_;
};

}  // namespace cfdx
