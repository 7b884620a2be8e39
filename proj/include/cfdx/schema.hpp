#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cfdx/error.hpp"

namespace cfdx {

/// Shortest round-trip decimal representation of a double.
inline std::string format_number(double v) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc{}) return "nan";
  return std::string(buf.data(), end);
}

struct FeatureSpec {
  std::string name;
  bool immutable = false;
  double min = -1e300;
  double max = 1e300;
};

class FeatureSchema {
 public:
  FeatureSchema() = default;
  FeatureSchema(std::vector<FeatureSpec> features, std::vector<std::string> classes)
      : features_(std::move(features)), classes_(std::move(classes)) {
    validate();
  }

  const std::vector<FeatureSpec>& features() const noexcept { return features_; }
  const std::vector<std::string>& label_classes() const noexcept { return classes_; }
  std::size_t feature_count() const noexcept { return features_.size(); }
  std::size_t class_count() const noexcept { return classes_.size(); }
  const FeatureSpec& feature(std::size_t i) const { return features_.at(i); }
  const std::string& class_name(std::size_t i) const { return classes_.at(i); }

  std::optional<std::size_t> feature_index(std::string_view name) const {
    for (std::size_t i = 0; i < features_.size(); ++i)
      if (features_[i].name == name) return i;
    return std::nullopt;
  }

  std::optional<std::size_t> class_index(std::string_view name) const {
    for (std::size_t i = 0; i < classes_.size(); ++i)
      if (classes_[i] == name) return i;
    return std::nullopt;
  }

  std::size_t require_class(std::string_view name) const {
    if (auto idx = class_index(name)) return *idx;
    fail(ErrorCode::UnknownLabel, "unknown class label '" + std::string(name) + "'",
         std::string(name));
  }

  std::size_t require_feature(std::string_view name) const {
    if (auto idx = feature_index(name)) return *idx;
    fail(ErrorCode::SchemaMismatch, "unknown feature '" + std::string(name) + "'",
         std::string(name));
  }

  std::vector<bool> immutable_mask() const {
    std::vector<bool> mask(features_.size());
    for (std::size_t i = 0; i < features_.size(); ++i) mask[i] = features_[i].immutable;
    return mask;
  }

  nlohmann::json to_json() const {
    nlohmann::json features = nlohmann::json::array();
    for (const auto& f : features_) {
      features.push_back({{"name", f.name}, {"immutable", f.immutable}, {"min", f.min}, {"max", f.max}});
    }
    return {{"features", features}, {"label_classes", classes_}};
  }

  static FeatureSchema from_json(const nlohmann::json& j) {
    try {
      std::vector<FeatureSpec> features;
      for (const auto& f : j.at("features")) {
        FeatureSpec spec;
        spec.name = f.at("name").get<std::string>();
        spec.immutable = f.value("immutable", false);
        spec.min = f.value("min", -1e300);
        spec.max = f.value("max", 1e300);
        features.push_back(std::move(spec));
      }
      return FeatureSchema(std::move(features),
                           j.at("label_classes").get<std::vector<std::string>>());
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::ParseError, "malformed schema document", e.what());
    }
  }

  /// FNV-1a over the canonical JSON dump; stored with serialized models.
  std::string hash() const {
    const std::string text = to_json().dump();
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    std::ostringstream out;
    out << std::hex;
    out.width(16);
    out.fill('0');
    out << h;
    return out.str();
  }

  friend bool operator==(const FeatureSchema& a, const FeatureSchema& b) {
    return a.to_json() == b.to_json();
  }

 private:
  void validate() const {
    if (features_.empty()) fail(ErrorCode::InvalidArgument, "schema has no features");
    if (classes_.size() < 2) fail(ErrorCode::InvalidArgument, "schema needs at least two classes");
    std::set<std::string> seen;
    for (const auto& f : features_) {
      if (f.name.empty()) fail(ErrorCode::InvalidArgument, "empty feature name");
      if (!seen.insert(f.name).second)
        fail(ErrorCode::InvalidArgument, "duplicate feature name", f.name);
      if (!(f.min < f.max)) fail(ErrorCode::InvalidArgument, "feature range requires min < max", f.name);
    }
    std::set<std::string> seen_classes;
    for (const auto& c : classes_) {
      if (c.empty() || c == "UNKNOWN") fail(ErrorCode::InvalidArgument, "invalid class name", c);
      if (!seen_classes.insert(c).second) fail(ErrorCode::InvalidArgument, "duplicate class", c);
    }
  }

  std::vector<FeatureSpec> features_;
  std::vector<std::string> classes_;
};

inline const std::array<std::string_view, 6>& canonical_modalities() {
  static const std::array<std::string_view, 6> m{"T2", "FLAIR", "DWI", "ADC", "T1", "T1CE"};
  return m;
}

/// 18 MRI features: each modality measured on tumor and parenchyma, plus their
/// ratio. Parenchyma measurements are reference tissue and never change.
inline FeatureSchema canonical_schema() {
  std::vector<FeatureSpec> features;
  for (auto modality : canonical_modalities()) {
    const std::string m(modality);
    const double si_max = modality == "ADC" ? 10.0 : 10000.0;
    features.push_back({m + "_Tumor", false, 0.0, si_max});
    features.push_back({m + "_Parenchyma", true, 0.0, si_max});
    features.push_back({m + "_Ratio", false, 0.0, 20.0});
  }
  return FeatureSchema(std::move(features), {"MB", "EP", "PA", "BG"});
}

inline FeatureSchema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open schema file", path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, "schema file is not valid JSON", e.what());
  }
  return FeatureSchema::from_json(j);
}

}  // namespace cfdx
