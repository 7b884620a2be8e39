#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cfdx/error.hpp"
#include "cfdx/schema.hpp"

namespace cfdx {

inline constexpr std::string_view kUnknownLabel = "UNKNOWN";

struct PatientRecord {
  std::string id;
  std::optional<std::size_t> label;  // class index; nullopt means UNKNOWN
  std::vector<double> values;
};

class Dataset {
 public:
  Dataset() = default;
  Dataset(FeatureSchema schema, std::vector<PatientRecord> records)
      : schema_(std::move(schema)), records_(std::move(records)) {
    for (const auto& r : records_) check_record(r);
  }

  const FeatureSchema& schema() const noexcept { return schema_; }
  const std::vector<PatientRecord>& records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  const PatientRecord& operator[](std::size_t i) const { return records_[i]; }

  void add(PatientRecord r) {
    check_record(r);
    records_.push_back(std::move(r));
  }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts(schema_.class_count(), 0);
    for (const auto& r : records_)
      if (r.label) ++counts[*r.label];
    return counts;
  }

  std::vector<std::size_t> indices_of_class(std::size_t cls) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < records_.size(); ++i)
      if (records_[i].label == cls) out.push_back(i);
    return out;
  }

  const PatientRecord* find(std::string_view id) const {
    for (const auto& r : records_)
      if (r.id == id) return &r;
    return nullptr;
  }

  Dataset subset(const std::vector<std::size_t>& indices) const {
    std::vector<PatientRecord> out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(records_.at(i));
    return Dataset(schema_, std::move(out));
  }

  std::string label_name(const PatientRecord& r) const {
    return r.label ? schema_.class_name(*r.label) : std::string(kUnknownLabel);
  }

 private:
  void check_record(const PatientRecord& r) const {
    if (r.values.size() != schema_.feature_count())
      fail(ErrorCode::SchemaMismatch, "record width does not match schema", r.id);
    for (double v : r.values)
      if (!std::isfinite(v)) fail(ErrorCode::NonNumericCell, "non-finite feature value", r.id);
    if (r.label && *r.label >= schema_.class_count())
      fail(ErrorCode::UnknownLabel, "label index out of range", r.id);
  }

  FeatureSchema schema_;
  std::vector<PatientRecord> records_;
};

namespace detail {

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else {
      cell += c;
    }
  }
  cells.push_back(std::move(cell));
  return cells;
}

/// Quotes a cell when it holds a separator, quote or line break.
inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + '"';
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace detail

/// Tumor/Parenchyma/Ratio triplets whose ratio deviates from the quotient by
/// more than `rel_tol`. Never fatal: counterfactuals can break the relation.
inline std::vector<std::string> ratio_warnings(const FeatureSchema& schema, const PatientRecord& r,
                                               double rel_tol = 0.05) {
  std::vector<std::string> out;
  for (const auto& f : schema.features()) {
    constexpr std::string_view suffix = "_Ratio";
    if (f.name.size() <= suffix.size() || !f.name.ends_with(suffix)) continue;
    const std::string prefix = f.name.substr(0, f.name.size() - suffix.size());
    auto t = schema.feature_index(prefix + "_Tumor");
    auto p = schema.feature_index(prefix + "_Parenchyma");
    auto q = schema.feature_index(f.name);
    if (!t || !p || !q) continue;
    const double par = r.values[*p];
    if (par == 0.0) continue;
    const double expected = r.values[*t] / par;
    if (std::abs(r.values[*q] - expected) > rel_tol * std::abs(expected)) {
      out.push_back("record " + r.id + ": " + f.name + "=" + format_number(r.values[*q]) +
                    " but Tumor/Parenchyma=" + format_number(expected));
    }
  }
  return out;
}

inline Dataset read_dataset(std::istream& in, const FeatureSchema& schema,
                            std::vector<std::string>* warnings = nullptr) {
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::MissingColumn, "CSV has no header row");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);  // BOM
  auto header = detail::split_csv_line(line);
  for (auto& h : header) h = std::string(detail::trim(h));

  auto column_of = [&](std::string_view name) -> std::size_t {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    fail(ErrorCode::MissingColumn, "missing column '" + std::string(name) + "'", std::string(name));
  };
  const std::size_t id_col = column_of("id");
  const std::size_t label_col = column_of("tumor_type");
  std::vector<std::size_t> feature_cols;
  for (const auto& f : schema.features()) feature_cols.push_back(column_of(f.name));

  std::vector<PatientRecord> records;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() < header.size())
      fail(ErrorCode::MissingColumn, "row has fewer cells than header", "row " + std::to_string(row));
    PatientRecord r;
    r.id = std::string(detail::trim(cells[id_col]));
    const std::string label(detail::trim(cells[label_col]));
    if (label != kUnknownLabel) {
      auto idx = schema.class_index(label);
      if (!idx) fail(ErrorCode::UnknownLabel, "unknown label '" + label + "'", label);
      r.label = *idx;
    }
    r.values.reserve(feature_cols.size());
    for (std::size_t j = 0; j < feature_cols.size(); ++j) {
      auto v = detail::parse_double(cells[feature_cols[j]]);
      if (!v)
        fail(ErrorCode::NonNumericCell, "non-numeric cell",
             "row " + std::to_string(row) + ", column " + schema.feature(j).name);
      r.values.push_back(*v);
    }
    if (warnings) {
      auto w = ratio_warnings(schema, r);
      warnings->insert(warnings->end(), w.begin(), w.end());
    }
    records.push_back(std::move(r));
  }
  return Dataset(schema, std::move(records));
}

inline Dataset load_dataset(const std::string& path, const FeatureSchema& schema,
                            std::vector<std::string>* warnings = nullptr) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open dataset", path);
  return read_dataset(in, schema, warnings);
}

inline void write_dataset(std::ostream& out, const Dataset& data) {
  out << "id,tumor_type";
  for (const auto& f : data.schema().features()) out << ',' << f.name;
  out << '\n';
  for (const auto& r : data.records()) {
    out << detail::csv_field(r.id) << ',' << data.label_name(r);
    for (double v : r.values) out << ',' << format_number(v);
    out << '\n';
  }
}

inline void save_dataset(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write dataset", path);
  write_dataset(out, data);
}

}  // namespace cfdx
