#include "kge/explain.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>

#include "kge/error.hpp"

namespace kge {

namespace {

using Eigen::Index;

Index idx(std::size_t i) { return static_cast<Index>(i); }

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::string format_edge(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

std::string kind_name(FactorKind k) { return k == FactorKind::EF ? "EF" : "CF"; }

FactorKind parse_kind(std::string_view name) {
  if (name == "EF" || name == "ef") return FactorKind::EF;
  if (name == "CF" || name == "cf") return FactorKind::CF;
  throw Error(Errc::InvalidArgument, "factor kind must be EF or CF, got '" + std::string(name) + "'");
}

std::size_t FactorSet::index_of(std::string_view name) const {
  for (std::size_t j = 0; j < factors.size(); ++j)
    if (factors[j].name == name) return j;
  throw Error(Errc::UnknownAttribute, "unknown factor '" + std::string(name) + "'");
}

FactorMatrix factor_matrix(const Dataset& ds, const KnowledgeTree& tree, FactorKind kind) {
  if (tree.sample_count() != ds.n()) throw Error(Errc::InvalidArgument, "tree was built for a different dataset");
  FactorMatrix fm;
  fm.set.kind = kind;
  if (kind == FactorKind::EF) {
    fm.values = normalize_features(ds).values;
    for (std::size_t c : ds.embedding_columns()) fm.set.factors.push_back({ds.schema()[c].name, ds.schema()[c].name, -1, 0});
    return fm;
  }

  std::set<std::string> seen;
  std::vector<std::vector<double>> cols;
  for (int id : tree.split_nodes()) {
    const BinSet& bins = *tree.node(id).split;
    for (std::size_t b = 0; b < bins.size(); ++b) {
      std::string name = bins.attribute + ":" + bins.label(b);
      if (seen.count(name)) name += "@" + std::to_string(id);
      seen.insert(name);
      fm.set.factors.push_back({name, bins.attribute, id, b});
      std::vector<double> col(ds.n());
      for (std::size_t r = 0; r < ds.n(); ++r) col[r] = bins.bin_of(ds, r) == b ? 1.0 : 0.0;
      cols.push_back(std::move(col));
    }
  }
  if (cols.empty()) throw Error(Errc::NoBins, "no knowledge has been externalized yet");
  fm.values.resize(idx(ds.n()), idx(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j)
    for (std::size_t r = 0; r < ds.n(); ++r) fm.values(idx(r), idx(j)) = cols[j][r];
  return fm;
}

double Discriminator::predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const { return sigmoid(logit(x)); }

Discriminator train_discriminator(const Eigen::MatrixXd& X, const std::vector<int>& y, const DiscriminatorOptions& opt) {
  if (static_cast<Index>(y.size()) != X.rows()) throw Error(Errc::LengthMismatch, "one label per row required");
  const auto pos = static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
  if (pos < 2 || y.size() - pos < 2) throw Error(Errc::ClassTooSmall, "each structure needs at least 2 samples");
  if (!(opt.lambda >= 0)) throw Error(Errc::InvalidArgument, "lambda must be non-negative");

  const Index n = X.rows(), m = X.cols();
  Eigen::VectorXd target(n);
  for (Index i = 0; i < n; ++i) target(i) = y[static_cast<std::size_t>(i)] == 1 ? 1.0 : 0.0;

  // Step 1/L with L bounding the Hessian: 0.25 * lambda_max([X 1]^T [X 1]) / n + lambda.
  Eigen::MatrixXd aug(n, m + 1);
  aug << X, Eigen::VectorXd::Ones(n);
  const Eigen::MatrixXd gram = aug.transpose() * aug / static_cast<double>(n);
  const double top = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gram, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
  const double step = 1.0 / (0.25 * top + opt.lambda);

  Discriminator d;
  d.lambda = opt.lambda;
  d.weights = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd gw(m);
  double gb = 0;
  auto gradient = [&] {
    const Eigen::VectorXd p = ((X * d.weights).array() + d.bias).unaryExpr([](double z) { return sigmoid(z); }).matrix();
    const Eigen::VectorXd r = (p - target) / static_cast<double>(n);
    gw = X.transpose() * r + opt.lambda * d.weights;
    gb = r.sum();
    return std::sqrt(gw.squaredNorm() + gb * gb);
  };
  d.gradient_norm = gradient();
  while (d.gradient_norm >= opt.tolerance && d.steps < opt.max_steps) {
    d.weights -= step * gw;
    d.bias -= step * gb;
    ++d.steps;
    d.gradient_norm = gradient();
  }
  std::size_t hit = 0;
  for (Index i = 0; i < n; ++i) hit += (d.logit(X.row(i)) > 0) == (target(i) == 1.0);
  d.train_accuracy = static_cast<double>(hit) / static_cast<double>(n);
  return d;
}

namespace {

// Coalition values v(S, x) = mean_b f(x_S, b_~S) for every coalition (rows of
// Z) and every explained row; the linear logit lets the background part be
// shared across rows.
Eigen::MatrixXd coalition_values(const Discriminator& model, const Eigen::MatrixXd& Z, const Eigen::MatrixXd& rows,
                                 const Eigen::MatrixXd& background) {
  const Eigen::MatrixXd zw = Z * model.weights.asDiagonal();                 // C x M
  const Eigen::MatrixXd own = zw * rows.transpose();                         // C x N
  const Eigen::MatrixXd bg = zw * background.transpose();                    // C x R
  const Eigen::VectorXd base = (background * model.weights).array() + model.bias;  // R
  const Index R = background.rows();
  Eigen::MatrixXd v(Z.rows(), rows.rows());
  for (Index n = 0; n < rows.rows(); ++n)
    for (Index c = 0; c < Z.rows(); ++c) {
      double s = 0;
      for (Index r = 0; r < R; ++r) s += sigmoid(base(r) + own(c, n) - bg(c, r));
      v(c, n) = s / static_cast<double>(R);
    }
  return v;
}

double binomial(int n, int k) {
  double r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

Eigen::MatrixXd mask_matrix(const std::vector<std::uint64_t>& masks, int M) {
  Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(idx(masks.size()), M);
  for (std::size_t c = 0; c < masks.size(); ++c)
    for (int j = 0; j < M; ++j)
      if (masks[c] >> j & 1U) Z(idx(c), j) = 1.0;
  return Z;
}

Eigen::MatrixXd exact_shapley(const Discriminator& model, const Eigen::MatrixXd& rows, const Eigen::MatrixXd& background) {
  const int M = static_cast<int>(rows.cols());
  const std::uint64_t total = std::uint64_t{1} << M;
  std::vector<std::uint64_t> masks(total);
  std::iota(masks.begin(), masks.end(), std::uint64_t{0});
  const Eigen::MatrixXd v = coalition_values(model, mask_matrix(masks, M), rows, background);
  std::vector<double> weight(static_cast<std::size_t>(M));
  for (int s = 0; s < M; ++s) weight[static_cast<std::size_t>(s)] = 1.0 / (M * binomial(M - 1, s));
  Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(rows.rows(), M);
  for (std::uint64_t mask = 0; mask < total; ++mask) {
    const double w = weight[static_cast<std::size_t>(std::popcount(mask))];
    for (int j = 0; j < M; ++j) {
      if (mask >> j & 1U) continue;
      const std::uint64_t with = mask | (std::uint64_t{1} << j);
      phi.col(j) += w * (v.row(idx(with)) - v.row(idx(mask))).transpose();
    }
  }
  return phi;
}

Eigen::MatrixXd kernel_shap(const Discriminator& model, const Eigen::MatrixXd& rows, const Eigen::MatrixXd& background,
                            std::size_t budget, std::uint64_t seed, double v0, const Eigen::VectorXd& delta) {
  const int M = static_cast<int>(rows.cols());
  if (M == 1) return delta;
  std::vector<std::uint64_t> masks;
  std::vector<double> weights;
  if (M < 63 && static_cast<double>(budget) >= std::ldexp(1.0, M) - 2.0) {
    for (std::uint64_t mask = 1; mask + 1 < (std::uint64_t{1} << M); ++mask) {
      const int s = std::popcount(mask);
      masks.push_back(mask);
      weights.push_back((M - 1) / (binomial(M, s) * s * (M - s)));
    }
  } else {
    // Sizes drawn in proportion to the total kernel mass of each size, then a
    // uniform subset of that size and its complement; all weights equal.
    std::mt19937_64 rng(seed);
    std::vector<double> size_mass;
    for (int s = 1; s < M; ++s) size_mass.push_back(1.0 / (s * (M - s)));
    std::discrete_distribution<int> size_of(size_mass.begin(), size_mass.end());
    std::vector<int> perm(static_cast<std::size_t>(M));
    const std::uint64_t full = M == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << M) - 1;
    while (masks.size() < budget) {
      const int s = size_of(rng) + 1;
      std::iota(perm.begin(), perm.end(), 0);
      std::uint64_t mask = 0;
      for (int t = 0; t < s; ++t) {
        std::uniform_int_distribution<int> pick(t, M - 1);
        std::swap(perm[static_cast<std::size_t>(t)], perm[static_cast<std::size_t>(pick(rng))]);
        mask |= std::uint64_t{1} << perm[static_cast<std::size_t>(t)];
      }
      masks.push_back(mask);
      if (masks.size() < budget) masks.push_back(~mask & full);
    }
    weights.assign(masks.size(), 1.0);
  }

  const Eigen::MatrixXd Z = mask_matrix(masks, M);
  const Eigen::MatrixXd v = coalition_values(model, Z, rows, background);
  const Index C = Z.rows();

  // Efficiency holds exactly by eliminating the last factor:
  // v - v0 - z_M * delta = sum_{j<M} (z_j - z_M) phi_j, weighted least squares.
  Eigen::VectorXd sw(C);
  for (Index c = 0; c < C; ++c) sw(c) = std::sqrt(weights[static_cast<std::size_t>(c)]);
  Eigen::MatrixXd A(C, M - 1);
  for (int j = 0; j < M - 1; ++j) A.col(j) = (Z.col(j) - Z.col(M - 1)).cwiseProduct(sw);
  Eigen::MatrixXd rhs = (v.array() - v0).matrix() - Z.col(M - 1) * delta.transpose();
  rhs = sw.asDiagonal() * rhs;
  const Eigen::MatrixXd sol = A.colPivHouseholderQr().solve(rhs);  // (M-1) x N

  Eigen::MatrixXd phi(rows.rows(), M);
  phi.leftCols(M - 1) = sol.transpose();
  phi.col(M - 1) = delta - phi.leftCols(M - 1).rowwise().sum();
  return phi;
}

Eigen::MatrixXd select_rows(const Eigen::MatrixXd& X, const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd out(idx(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(idx(i)) = X.row(idx(rows[i]));
  return out;
}

}  // namespace

ShapMatrix shap_values(const Discriminator& model, const Eigen::MatrixXd& rows, const Eigen::MatrixXd& background,
                       const ShapOptions& opt) {
  const Index M = rows.cols();
  if (M < 1 || model.weights.size() != M || background.cols() != M)
    throw Error(Errc::LengthMismatch, "factor counts of model, rows and background differ");
  if (background.rows() < 1) throw Error(Errc::EmptySelection, "SHAP needs at least one background row");
  if (opt.exact && M > 12) throw Error(Errc::InvalidArgument, "exact enumeration is limited to 12 factors");

  ShapMatrix out;
  double v0 = 0;
  for (Index r = 0; r < background.rows(); ++r) v0 += model.predict(background.row(r));
  v0 /= static_cast<double>(background.rows());
  out.base_value = v0;
  out.prediction.resize(rows.rows());
  for (Index i = 0; i < rows.rows(); ++i) out.prediction(i) = model.predict(rows.row(i));
  const Eigen::VectorXd delta = out.prediction.array() - v0;

  if (opt.exact) {
    out.phi = exact_shapley(model, rows, background);
  } else {
    const std::size_t budget =
        opt.coalitions ? opt.coalitions : (M >= 11 ? std::size_t{2048} : std::min<std::size_t>(std::size_t{1} << M, 2048));
    if (budget < 2 * static_cast<std::size_t>(M))
      throw Error(Errc::TooFewCoalitions, std::to_string(budget) + " coalitions for " + std::to_string(M) + " factors");
    out.phi = kernel_shap(model, rows, background, budget, opt.seed, v0, delta);
  }
  if (rows.rows() > 0) out.max_residual = (out.phi.rowwise().sum() - delta).cwiseAbs().maxCoeff();
  return out;
}

Comparison make_comparison(std::vector<std::size_t> a, std::vector<std::size_t> b, bool one_vs_rest,
                           const std::vector<std::size_t>& active) {
  std::sort(a.begin(), a.end());
  a.erase(std::unique(a.begin(), a.end()), a.end());
  const std::set<std::size_t> live(active.begin(), active.end());
  for (std::size_t r : a)
    if (!live.count(r)) throw Error(Errc::InvalidArgument, "sample " + std::to_string(r) + " is not active");
  if (one_vs_rest) {
    b.clear();
    std::set_difference(active.begin(), active.end(), a.begin(), a.end(), std::back_inserter(b));
  } else {
    std::sort(b.begin(), b.end());
    b.erase(std::unique(b.begin(), b.end()), b.end());
    for (std::size_t r : b)
      if (!live.count(r)) throw Error(Errc::InvalidArgument, "sample " + std::to_string(r) + " is not active");
  }
  Comparison c{std::move(a), std::move(b), one_vs_rest};
  if (c.a.empty() || c.b.empty()) throw Error(Errc::EmptySelection, "both structures need samples");
  std::vector<std::size_t> both;
  std::set_intersection(c.a.begin(), c.a.end(), c.b.begin(), c.b.end(), std::back_inserter(both));
  if (!both.empty()) throw Error(Errc::InvalidArgument, "the two selections overlap");
  return c;
}

ExplanationResult explain(const FactorMatrix& fm, const Comparison& cmp, const ExplainOptions& opt) {
  if (cmp.a.empty() || cmp.b.empty()) throw Error(Errc::EmptySelection, "both structures need samples");
  for (const auto* set : {&cmp.a, &cmp.b})
    for (std::size_t r : *set)
      if (r >= static_cast<std::size_t>(fm.values.rows())) throw Error(Errc::InvalidArgument, "sample index out of range");

  std::vector<std::size_t> train_rows = cmp.a;
  train_rows.insert(train_rows.end(), cmp.b.begin(), cmp.b.end());
  std::vector<int> y(cmp.a.size(), 1);
  y.resize(train_rows.size(), 0);
  const auto model = train_discriminator(select_rows(fm.values, train_rows), y, opt.discriminator);

  // Background: a seeded sample of the contrast structure.
  std::vector<std::size_t> pool = cmp.b;
  std::mt19937_64 rng(opt.shap.seed);
  const std::size_t keep = std::min(opt.background_rows, pool.size());
  for (std::size_t i = 0; i < keep; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(keep);
  const auto sm = shap_values(model, select_rows(fm.values, cmp.a), select_rows(fm.values, pool), opt.shap);

  ExplanationResult res;
  res.factors = fm.set;
  res.shap = sm.phi.cwiseAbs().colwise().mean().transpose();
  res.signed_shap = sm.phi.colwise().mean().transpose();
  res.train_accuracy = model.train_accuracy;
  res.count_a = cmp.a.size();
  res.count_b = cmp.b.size();
  res.max_residual = sm.max_residual;
  return res;
}

std::vector<std::size_t> rank_factors(const ExplanationResult& result) {
  std::vector<std::size_t> order(static_cast<std::size_t>(result.shap.size()));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return std::abs(result.shap(idx(x))) > std::abs(result.shap(idx(y)));
  });
  return order;
}

nlohmann::json ExplanationResult::to_json() const {
  auto list = nlohmann::json::array();
  for (std::size_t j : rank_factors(*this))
    list.push_back({{"name", factors.factors[j].name},
                    {"kind", kind_name(factors.kind)},
                    {"index", j},
                    {"shap", shap(idx(j))},
                    {"signedShap", signed_shap(idx(j))}});
  return {{"kind", kind_name(factors.kind)}, {"factors", list},     {"trainAccuracy", train_accuracy},
          {"countA", count_a},                {"countB", count_b}, {"maxResidual", max_residual}};
}

Histogram histogram(const Eigen::VectorXd& values, const Comparison& cmp, std::size_t bins, bool binary) {
  if (cmp.a.empty() || cmp.b.empty()) throw Error(Errc::EmptySelection, "both structures need samples");
  if (bins < 1) throw Error(Errc::InvalidArgument, "need at least one bin");
  Histogram h;
  if (binary) {
    h.edges = {0.0, 0.5, 1.0};
    h.labels = {"0", "1"};
  } else {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto* set : {&cmp.a, &cmp.b})
      for (std::size_t r : *set) {
        lo = std::min(lo, values(idx(r)));
        hi = std::max(hi, values(idx(r)));
      }
    if (hi == lo) {
      lo -= 0.5;
      hi += 0.5;
    }
    for (std::size_t b = 0; b <= bins; ++b) h.edges.push_back(lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins));
    h.edges.back() = hi;
    for (std::size_t b = 0; b < bins; ++b)
      h.labels.push_back("[" + format_edge(h.edges[b]) + ", " + format_edge(h.edges[b + 1]) + (b + 1 == bins ? "]" : ")"));
  }
  const std::size_t k = h.edges.size() - 1;
  const double lo = h.edges.front(), width = h.edges.back() - h.edges.front();
  auto bin_of = [&](double v) {
    const auto b = static_cast<std::size_t>(std::max(0.0, std::floor((v - lo) / width * static_cast<double>(k))));
    return std::min(b, k - 1);
  };
  h.counts_a.assign(k, 0);
  h.counts_b.assign(k, 0);
  for (std::size_t r : cmp.a) ++h.counts_a[bin_of(values(idx(r)))];
  for (std::size_t r : cmp.b) ++h.counts_b[bin_of(values(idx(r)))];
  return h;
}

Histogram histogram(const FactorMatrix& fm, std::size_t factor, const Comparison& cmp, std::size_t bins) {
  if (factor >= fm.set.size()) throw Error(Errc::UnknownAttribute, "factor index out of range");
  return histogram(fm.values.col(idx(factor)), cmp, bins, fm.set.kind == FactorKind::CF);
}

double Histogram::overlap() const {
  double na = 0, nb = 0, s = 0;
  for (std::size_t b = 0; b < counts_a.size(); ++b) {
    na += static_cast<double>(counts_a[b]);
    nb += static_cast<double>(counts_b[b]);
  }
  if (na == 0 || nb == 0) return 0;
  for (std::size_t b = 0; b < counts_a.size(); ++b)
    s += std::min(static_cast<double>(counts_a[b]) / na, static_cast<double>(counts_b[b]) / nb);
  return s;
}

nlohmann::json Histogram::to_json() const {
  return {{"edges", edges}, {"countsA", counts_a}, {"countsB", counts_b}, {"labels", labels}};
}

}  // namespace kge
