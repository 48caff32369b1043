#include "kge/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>

namespace kge {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::SchemaMismatch: return "SchemaMismatch";
    case Errc::ParseError: return "ParseError";
    case Errc::EmptyDataset: return "EmptyDataset";
    case Errc::UnknownAttribute: return "UnknownAttribute";
    case Errc::DegenerateRange: return "DegenerateRange";
    case Errc::NoActiveSamples: return "NoActiveSamples";
    case Errc::TooManyClusters: return "TooManyClusters";
    case Errc::InvalidNode: return "InvalidNode";
    case Errc::EmptyGroup: return "EmptyGroup";
    case Errc::CannotDeleteRoot: return "CannotDeleteRoot";
    case Errc::NoValidClasses: return "NoValidClasses";
    case Errc::InvalidHyperparams: return "InvalidHyperparams";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::EmptyGroupAfterExclusion: return "EmptyGroupAfterExclusion";
    case Errc::AlphaOutOfRange: return "AlphaOutOfRange";
    case Errc::NonFiniteLoss: return "NonFiniteLoss";
    case Errc::Cancelled: return "Cancelled";
    case Errc::TooFewSamples: return "TooFewSamples";
    case Errc::DegenerateCovariance: return "DegenerateCovariance";
    case Errc::DegeneratePolygon: return "DegeneratePolygon";
    case Errc::NoBins: return "NoBins";
    case Errc::ClassTooSmall: return "ClassTooSmall";
    case Errc::TooFewCoalitions: return "TooFewCoalitions";
    case Errc::EmptySelection: return "EmptySelection";
    case Errc::InvalidRange: return "InvalidRange";
    case Errc::ConfigError: return "ConfigError";
    case Errc::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

namespace {

using Row = std::vector<std::string>;

// Splits the whole input into records. Quoted fields may contain commas,
// doubled quotes and line breaks.
std::vector<Row> parse_csv(std::string_view text) {
  std::vector<Row> rows;
  Row row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t i = 0;
  if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") i = 3;  // BOM

  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    // A lone empty field means a blank line.
    if (!(row.size() == 1 && row[0].empty())) rows.push_back(std::move(row));
    row.clear();
  };

  for (; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field_started && field.empty()) {
          in_quotes = true;
          field_started = true;
        } else {
          field.push_back(c);
        }
        break;
      case ',':
        end_field();
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
        end_row();
        break;
      case '\n':
        end_row();
        break;
      default:
        field.push_back(c);
        field_started = true;
    }
  }
  if (in_quotes) throw ParseError(rows.empty() ? 0 : rows.size() - 1, "", "unterminated quoted field");
  if (field_started || !field.empty() || !row.empty()) end_row();
  return rows;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_finite(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  double v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace

Schema schema_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw Error(Errc::SchemaMismatch, "schema must be a JSON array");
  Schema schema;
  for (const auto& item : j) {
    if (!item.is_object() || !item.contains("name") || !item.contains("kind") || !item.contains("role"))
      throw Error(Errc::SchemaMismatch, "schema entries need name, kind and role");
    AttributeSpec spec;
    spec.name = item.at("name").get<std::string>();
    const auto kind = item.at("kind").get<std::string>();
    const auto role = item.at("role").get<std::string>();
    if (kind == "numeric") spec.kind = AttributeKind::Numeric;
    else if (kind == "categorical") spec.kind = AttributeKind::Categorical;
    else throw Error(Errc::SchemaMismatch, "unknown kind '" + kind + "'");
    if (role == "embedding") spec.role = AttributeRole::Embedding;
    else if (role == "descriptive") spec.role = AttributeRole::Descriptive;
    else throw Error(Errc::SchemaMismatch, "unknown role '" + role + "'");
    schema.push_back(std::move(spec));
  }
  return schema;
}

Schema parse_schema(std::string_view json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::SchemaMismatch, std::string("schema is not valid JSON: ") + e.what());
  }
  return schema_from_json(j);
}

nlohmann::json schema_to_json(const Schema& schema) {
  auto out = nlohmann::json::array();
  for (const auto& a : schema) {
    out.push_back({{"name", a.name},
                   {"kind", a.kind == AttributeKind::Numeric ? "numeric" : "categorical"},
                   {"role", a.role == AttributeRole::Embedding ? "embedding" : "descriptive"}});
  }
  return out;
}

Dataset::Dataset(Schema schema, std::vector<std::vector<double>> numeric,
                 std::vector<std::vector<std::string>> categorical)
    : schema_(std::move(schema)), numeric_(std::move(numeric)), categorical_(std::move(categorical)) {
  std::set<std::string> names;
  bool has_descriptive = false;
  for (std::size_t a = 0; a < schema_.size(); ++a) {
    const auto& spec = schema_[a];
    if (!names.insert(spec.name).second) throw Error(Errc::SchemaMismatch, "duplicate attribute '" + spec.name + "'");
    if (spec.role == AttributeRole::Embedding) {
      if (spec.kind != AttributeKind::Numeric)
        throw Error(Errc::SchemaMismatch, "embedding feature '" + spec.name + "' must be numeric");
      embedding_columns_.push_back(a);
    } else {
      has_descriptive = true;
    }
  }
  if (embedding_columns_.empty()) throw Error(Errc::SchemaMismatch, "schema has no embedding-feature attribute");
  if (!has_descriptive) throw Error(Errc::SchemaMismatch, "schema has no descriptive attribute");
  if (numeric_.size() != schema_.size() || categorical_.size() != schema_.size())
    throw Error(Errc::SchemaMismatch, "column storage does not match schema");

  const auto& first = schema_[0];
  n_ = first.kind == AttributeKind::Numeric ? numeric_[0].size() : categorical_[0].size();
  for (std::size_t a = 0; a < schema_.size(); ++a) {
    const bool num = schema_[a].kind == AttributeKind::Numeric;
    const std::size_t len = num ? numeric_[a].size() : categorical_[a].size();
    if (len != n_) throw Error(Errc::SchemaMismatch, "column '" + schema_[a].name + "' has wrong length");
    if (num) {
      for (std::size_t r = 0; r < n_; ++r)
        if (!std::isfinite(numeric_[a][r])) throw ParseError(r, schema_[a].name, "value is not finite");
    }
  }
  if (n_ == 0) throw Error(Errc::EmptyDataset, "dataset has no rows");
}

std::optional<std::size_t> Dataset::find(std::string_view name) const {
  for (std::size_t a = 0; a < schema_.size(); ++a)
    if (schema_[a].name == name) return a;
  return std::nullopt;
}

std::size_t Dataset::index_of(std::string_view name) const {
  if (auto a = find(name)) return *a;
  throw Error(Errc::UnknownAttribute, "no attribute named '" + std::string(name) + "'");
}

const std::vector<double>& Dataset::numeric(std::size_t attr) const {
  if (attr >= schema_.size() || schema_[attr].kind != AttributeKind::Numeric)
    throw Error(Errc::InvalidArgument, "attribute is not numeric");
  return numeric_[attr];
}

const std::vector<std::string>& Dataset::categorical(std::size_t attr) const {
  if (attr >= schema_.size() || schema_[attr].kind != AttributeKind::Categorical)
    throw Error(Errc::InvalidArgument, "attribute is not categorical");
  return categorical_[attr];
}

std::vector<std::size_t> Dataset::descriptive_columns() const {
  std::vector<std::size_t> out;
  for (std::size_t a = 0; a < schema_.size(); ++a)
    if (schema_[a].role == AttributeRole::Descriptive) out.push_back(a);
  return out;
}

Eigen::MatrixXd Dataset::embedding_features() const {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(d()));
  for (std::size_t j = 0; j < embedding_columns_.size(); ++j) {
    const auto& col = numeric_[embedding_columns_[j]];
    for (std::size_t r = 0; r < n_; ++r) x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = col[r];
  }
  return x;
}

Dataset load_dataset(std::string_view csv, const Schema& schema) {
  const auto rows = parse_csv(csv);
  if (rows.empty()) throw Error(Errc::SchemaMismatch, "missing header row");
  const Row& header = rows.front();
  if (header.size() != schema.size()) throw Error(Errc::SchemaMismatch, "header has " + std::to_string(header.size()) +
                                                                      " columns, schema has " + std::to_string(schema.size()));
  for (std::size_t a = 0; a < schema.size(); ++a) {
    if (trim(header[a]) != schema[a].name)
      throw Error(Errc::SchemaMismatch, "header column " + std::to_string(a) + " is '" + header[a] + "', schema expects '" +
                                            schema[a].name + "'");
  }
  if (rows.size() == 1) throw Error(Errc::EmptyDataset, "no data rows");

  const std::size_t n = rows.size() - 1;
  std::vector<std::vector<double>> numeric(schema.size());
  std::vector<std::vector<std::string>> categorical(schema.size());
  for (std::size_t a = 0; a < schema.size(); ++a) {
    if (schema[a].kind == AttributeKind::Numeric) numeric[a].reserve(n);
    else categorical[a].reserve(n);
  }
  for (std::size_t r = 0; r < n; ++r) {
    const Row& row = rows[r + 1];
    if (row.size() != schema.size())
      throw ParseError(r, "", "expected " + std::to_string(schema.size()) + " fields, found " + std::to_string(row.size()));
    for (std::size_t a = 0; a < schema.size(); ++a) {
      if (schema[a].kind == AttributeKind::Numeric) {
        auto v = parse_finite(row[a]);
        if (!v) throw ParseError(r, schema[a].name, "'" + row[a] + "' is not a finite number");
        numeric[a].push_back(*v);
      } else {
        if (row[a].empty()) throw ParseError(r, schema[a].name, "missing value");
        categorical[a].push_back(row[a]);
      }
    }
  }
  return Dataset(schema, std::move(numeric), std::move(categorical));
}

FeatureMatrix normalize_matrix(const Eigen::MatrixXd& raw) {
  FeatureMatrix fm;
  fm.values.resize(raw.rows(), raw.cols());
  fm.ranges.reserve(static_cast<std::size_t>(raw.cols()));
  for (Eigen::Index j = 0; j < raw.cols(); ++j) {
    const double lo = raw.rows() ? raw.col(j).minCoeff() : 0.0;
    const double hi = raw.rows() ? raw.col(j).maxCoeff() : 0.0;
    fm.ranges.emplace_back(lo, hi);
    if (hi > lo) {
      const double span = hi - lo;
      for (Eigen::Index i = 0; i < raw.rows(); ++i) fm.values(i, j) = std::clamp((raw(i, j) - lo) / span, 0.0, 1.0);
    } else {
      fm.values.col(j).setZero();
    }
  }
  return fm;
}

FeatureMatrix normalize_features(const Dataset& ds) { return normalize_matrix(ds.embedding_features()); }

Eigen::MatrixXd FeatureMatrix::denormalize() const {
  Eigen::MatrixXd out(values.rows(), values.cols());
  for (Eigen::Index j = 0; j < values.cols(); ++j) {
    const auto [lo, hi] = ranges[static_cast<std::size_t>(j)];
    out.col(j) = (values.col(j).array() * (hi - lo) + lo).matrix();
  }
  return out;
}

AttributeSummary attribute_summary(const Dataset& ds, std::string_view attr) {
  const std::size_t a = ds.index_of(attr);
  if (ds.schema()[a].kind == AttributeKind::Numeric) {
    const auto& col = ds.numeric(a);
    const auto [lo, hi] = std::minmax_element(col.begin(), col.end());
    return NumericSummary{*lo, *hi, col.size()};
  }
  std::map<std::string, std::size_t> counts;
  for (const auto& v : ds.categorical(a)) ++counts[v];
  CategoricalSummary s;
  s.counts.assign(counts.begin(), counts.end());
  return s;
}

nlohmann::json summary_to_json(const AttributeSpec& spec, const AttributeSummary& s) {
  nlohmann::json j = {{"name", spec.name},
                      {"kind", spec.kind == AttributeKind::Numeric ? "numeric" : "categorical"},
                      {"role", spec.role == AttributeRole::Embedding ? "embedding" : "descriptive"}};
  if (const auto* num = std::get_if<NumericSummary>(&s)) {
    j["min"] = num->min;
    j["max"] = num->max;
    j["count"] = num->count;
  } else {
    auto values = nlohmann::json::array();
    for (const auto& [v, c] : std::get<CategoricalSummary>(s).counts) values.push_back({{"value", v}, {"count", c}});
    j["values"] = values;
  }
  return j;
}

}  // namespace kge
