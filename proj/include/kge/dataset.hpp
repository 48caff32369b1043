#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

#include "kge/error.hpp"

namespace kge {

enum class AttributeKind { Numeric, Categorical };
enum class AttributeRole { Embedding, Descriptive };

struct AttributeSpec {
  std::string name;
  AttributeKind kind = AttributeKind::Numeric;
  AttributeRole role = AttributeRole::Descriptive;

  bool operator==(const AttributeSpec&) const = default;
};

using Schema = std::vector<AttributeSpec>;

// Parses `[{"name":..., "kind":"numeric"|"categorical", "role":"embedding"|"descriptive"}]`.
Schema parse_schema(std::string_view json_text);
Schema schema_from_json(const nlohmann::json& j);
nlohmann::json schema_to_json(const Schema& schema);

// Immutable table. Numeric columns are stored as doubles, categorical columns
// as interned strings. Row order is the order of the source file.
class Dataset {
 public:
  Dataset(Schema schema, std::vector<std::vector<double>> numeric,
          std::vector<std::vector<std::string>> categorical);

  std::size_t n() const noexcept { return n_; }
  // Number of embedding-feature attributes.
  std::size_t d() const noexcept { return embedding_columns_.size(); }

  const Schema& schema() const noexcept { return schema_; }
  std::optional<std::size_t> find(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;  // throws UnknownAttribute
  const AttributeSpec& attribute(std::string_view name) const { return schema_[index_of(name)]; }

  // Column accessors; the attribute must have the matching kind.
  const std::vector<double>& numeric(std::size_t attr) const;
  const std::vector<std::string>& categorical(std::size_t attr) const;

  // Schema indices of the embedding-feature attributes, in schema order.
  const std::vector<std::size_t>& embedding_columns() const noexcept { return embedding_columns_; }
  std::vector<std::size_t> descriptive_columns() const;

  // Raw (unnormalized) embedding-feature matrix, n x d.
  Eigen::MatrixXd embedding_features() const;

 private:
  Schema schema_;
  std::size_t n_ = 0;
  // Indexed by schema position; the unused kind is an empty vector.
  std::vector<std::vector<double>> numeric_;
  std::vector<std::vector<std::string>> categorical_;
  std::vector<std::size_t> embedding_columns_;
};

// Reads the CSV dialect: UTF-8, comma separated, header row, RFC 4180 quoting
// with doubled quotes, LF or CRLF line endings.
Dataset load_dataset(std::string_view csv, const Schema& schema);

// Normalized embedding features plus the per-dimension (min, max) pairs
// needed to map values back for display.
struct FeatureMatrix {
  Eigen::MatrixXd values;
  std::vector<std::pair<double, double>> ranges;

  std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(values.cols()); }
  Eigen::MatrixXd denormalize() const;
};

FeatureMatrix normalize_features(const Dataset& ds);
FeatureMatrix normalize_matrix(const Eigen::MatrixXd& raw);

struct NumericSummary {
  double min = 0;
  double max = 0;
  std::size_t count = 0;
};

struct CategoricalSummary {
  // Sorted by value.
  std::vector<std::pair<std::string, std::size_t>> counts;
};

using AttributeSummary = std::variant<NumericSummary, CategoricalSummary>;

AttributeSummary attribute_summary(const Dataset& ds, std::string_view attr);
nlohmann::json summary_to_json(const AttributeSpec& spec, const AttributeSummary& s);

}  // namespace kge
