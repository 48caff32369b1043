#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "kge/dataset.hpp"
#include "kge/knowledge.hpp"

namespace kge {

enum class FactorKind { EF, CF };

std::string kind_name(FactorKind k);
FactorKind parse_kind(std::string_view name);  // "EF" | "CF", throws InvalidArgument

struct Factor {
  std::string name;
  std::string attribute;
  int node = -1;        // CF: split node the interval belongs to
  std::size_t bin = 0;  // CF: bin index within that split
};

struct FactorSet {
  FactorKind kind = FactorKind::EF;
  std::vector<Factor> factors;

  std::size_t size() const { return factors.size(); }
  std::size_t index_of(std::string_view name) const;  // throws UnknownAttribute
};

struct FactorMatrix {
  FactorSet set;
  Eigen::MatrixXd values;  // one row per sample, one column per factor
};

// EF: normalized embedding features. CF: 0/1 interval membership for every
// bin of every live split in the tree.
FactorMatrix factor_matrix(const Dataset& ds, const KnowledgeTree& tree, FactorKind kind);

// L2-regularized logistic regression; the bias is not penalized.
struct Discriminator {
  Eigen::VectorXd weights;
  double bias = 0;
  double lambda = 1e-3;
  std::size_t steps = 0;
  double gradient_norm = 0;
  double train_accuracy = 0;

  double logit(const Eigen::Ref<const Eigen::RowVectorXd>& x) const { return x.dot(weights) + bias; }
  double predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;  // P(y = 1)
};

struct DiscriminatorOptions {
  double lambda = 1e-3;
  double tolerance = 1e-6;  // on the gradient norm
  std::size_t max_steps = 5000;
};

// Gradient descent with step 1/L on mean log-loss + lambda/2 |w|^2.
// y[i] is 1 for the first structure, 0 for the other; both need >= 2 rows.
Discriminator train_discriminator(const Eigen::MatrixXd& X, const std::vector<int>& y, const DiscriminatorOptions& opt = {});

struct ShapOptions {
  bool exact = false;           // full coalition enumeration, at most 12 factors
  std::size_t coalitions = 0;   // kernel budget; 0 = min(2^M, 2048)
  std::uint64_t seed = 0;
};

// Per-row attributions of the predicted probability, interventional value
// function over `background`. Each row of the result sums to
// f(x) - mean_b f(b).
struct ShapMatrix {
  Eigen::MatrixXd phi;  // rows x factors
  double base_value = 0;
  Eigen::VectorXd prediction;
  double max_residual = 0;  // local-accuracy check
};

ShapMatrix shap_values(const Discriminator& model, const Eigen::MatrixXd& rows, const Eigen::MatrixXd& background,
                       const ShapOptions& opt = {});

struct Comparison {
  std::vector<std::size_t> a;
  std::vector<std::size_t> b;  // explicit second structure, or the rest when one_vs_rest
  bool one_vs_rest = false;
};

// Builds a comparison; with one_vs_rest the second set is active \ a.
Comparison make_comparison(std::vector<std::size_t> a, std::vector<std::size_t> b, bool one_vs_rest,
                           const std::vector<std::size_t>& active);

struct ExplainOptions {
  DiscriminatorOptions discriminator;
  ShapOptions shap;
  std::size_t background_rows = 128;
};

struct ExplanationResult {
  FactorSet factors;
  Eigen::VectorXd shap;         // mean |phi| over selection-A rows
  Eigen::VectorXd signed_shap;  // mean phi
  double train_accuracy = 0;
  std::size_t count_a = 0;
  std::size_t count_b = 0;
  double max_residual = 0;

  nlohmann::json to_json() const;
};

ExplanationResult explain(const FactorMatrix& fm, const Comparison& cmp, const ExplainOptions& opt = {});

// Factor indices by descending |shap|, ties by index.
std::vector<std::size_t> rank_factors(const ExplanationResult& result);

struct Histogram {
  std::vector<double> edges;
  std::vector<std::size_t> counts_a;
  std::vector<std::size_t> counts_b;
  std::vector<std::string> labels;

  // Sum over bins of min(pA, pB) with per-selection normalized counts.
  double overlap() const;
  nlohmann::json to_json() const;
};

// Shared equal-width bins over the union of both selections; binary factors
// always get two bins.
Histogram histogram(const Eigen::VectorXd& values, const Comparison& cmp, std::size_t bins, bool binary = false);
Histogram histogram(const FactorMatrix& fm, std::size_t factor, const Comparison& cmp, std::size_t bins = 20);

}  // namespace kge
