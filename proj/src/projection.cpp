#include "kge/projection.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "kge/error.hpp"

namespace kge {

namespace {

using Eigen::Index;

// Curve parameters of the low-dimensional similarity 1 / (1 + a d^(2b)) for
// min_dist = 0.1, spread = 1.
constexpr double kCurveA = 1.577;
constexpr double kCurveB = 0.8951;
constexpr int kNegativeSamples = 5;
constexpr double kClip = 4.0;

Eigen::MatrixXd pca_coords(const Eigen::MatrixXd& X, bool& degenerate) {
  const Index n = X.rows();
  const Eigen::RowVectorXd mean = X.colwise().mean();
  const Eigen::MatrixXd centred = X.rowwise() - mean;
  Eigen::MatrixXd coords = Eigen::MatrixXd::Zero(n, 2);
  degenerate = centred.cwiseAbs().maxCoeff() == 0.0;
  if (degenerate || X.cols() == 0) {
    degenerate = true;
    return coords;
  }
  const Eigen::MatrixXd cov = centred.transpose() * centred / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Index m = X.cols();
  for (Index c = 0; c < std::min<Index>(2, m); ++c) {
    Eigen::VectorXd v = eig.eigenvectors().col(m - 1 - c);
    // Fix the sign: the largest-magnitude loading is positive.
    Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    coords.col(c) = centred * v;
  }
  return coords;
}

struct Edge {
  Index i, j;
  double w;
};

// Symmetrized fuzzy k-NN graph: per-point bandwidths make each point's
// neighbour weights sum to log2(k), then w = a + b - ab.
std::vector<Edge> knn_graph(const Eigen::MatrixXd& X, int k) {
  const Index n = X.rows();
  const Eigen::VectorXd sq = X.rowwise().squaredNorm();
  std::map<std::pair<Index, Index>, std::pair<double, double>> directed;  // (lo, hi) -> (w lo->hi, w hi->lo)
  std::vector<std::pair<double, Index>> cand(static_cast<std::size_t>(n));
  const double target = std::log2(static_cast<double>(k));
  for (Index i = 0; i < n; ++i) {
    const Eigen::VectorXd dots = X * X.row(i).transpose();
    for (Index j = 0; j < n; ++j) cand[static_cast<std::size_t>(j)] = {std::sqrt(std::max(0.0, sq(i) + sq(j) - 2 * dots(j))), j};
    cand[static_cast<std::size_t>(i)].first = std::numeric_limits<double>::infinity();
    std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
    const double rho = cand[0].first;
    auto mass = [&](double sigma) {
      double s = 0;
      for (int t = 0; t < k; ++t) s += std::exp(-std::max(0.0, cand[static_cast<std::size_t>(t)].first - rho) / sigma);
      return s;
    };
    double lo = 0, hi = std::numeric_limits<double>::infinity(), sigma = 1.0;
    for (int it = 0; it < 64; ++it) {
      if (std::abs(mass(sigma) - target) < 1e-5) break;
      if (mass(sigma) > target) {
        hi = sigma;
        sigma = (lo + hi) / 2;
      } else {
        lo = sigma;
        sigma = std::isinf(hi) ? sigma * 2 : (lo + hi) / 2;
      }
    }
    for (int t = 0; t < k; ++t) {
      const auto [dist, j] = cand[static_cast<std::size_t>(t)];
      const double w = std::exp(-std::max(0.0, dist - rho) / sigma);
      auto& slot = directed[{std::min(i, j), std::max(i, j)}];
      (i < j ? slot.first : slot.second) = w;
    }
  }
  std::vector<Edge> edges;
  edges.reserve(directed.size());
  for (const auto& [key, w] : directed) {
    const double sym = w.first + w.second - w.first * w.second;
    if (sym > 0) edges.push_back({key.first, key.second, sym});
  }
  return edges;
}

double clip(double g) { return std::clamp(g, -kClip, kClip); }

Eigen::MatrixXd neighbor_layout(const Eigen::MatrixXd& X, const ProjectionParams& p, std::uint64_t seed) {
  const Index n = X.rows();
  const auto edges = knn_graph(X, p.neighbors);
  std::mt19937_64 rng(seed);

  // Spectral-style start: the top principal plane, spread over [-10, 10].
  bool flat = false;
  Eigen::MatrixXd Y = pca_coords(X, flat);
  const double extent = Y.cwiseAbs().maxCoeff();
  if (flat || extent == 0.0) {
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    for (Index i = 0; i < Y.size(); ++i) Y.data()[i] = u(rng);
  } else {
    Y *= 10.0 / extent;
  }

  double wmax = 0;
  for (const auto& e : edges) wmax = std::max(wmax, e.w);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<Index> other(0, n - 1);

  auto repel = [&](Index i, double lr) {
    for (int s = 0; s < kNegativeSamples; ++s) {
      const Index j = other(rng);
      if (j == i) continue;
      const Eigen::Vector2d diff = (Y.row(i) - Y.row(j)).transpose();
      const double d2 = diff.squaredNorm();
      if (d2 == 0.0) continue;
      const double coef = 2.0 * kCurveB / ((0.001 + d2) * (1.0 + kCurveA * std::pow(d2, kCurveB)));
      for (int c = 0; c < 2; ++c) Y(i, c) += lr * clip(coef * diff(c));
    }
  };

  for (int it = 0; it < p.iterations; ++it) {
    const double lr = 1.0 - static_cast<double>(it) / static_cast<double>(p.iterations);
    for (const auto& e : edges) {
      if (coin(rng) * wmax > e.w) continue;
      const Eigen::Vector2d diff = (Y.row(e.i) - Y.row(e.j)).transpose();
      const double d2 = diff.squaredNorm();
      if (d2 > 0.0) {
        const double coef = -2.0 * kCurveA * kCurveB * std::pow(d2, kCurveB - 1.0) / (1.0 + kCurveA * std::pow(d2, kCurveB));
        for (int c = 0; c < 2; ++c) {
          const double g = lr * clip(coef * diff(c));
          Y(e.i, c) += g;
          Y(e.j, c) -= g;
        }
      }
      repel(e.i, lr);
      repel(e.j, lr);
    }
  }
  return Y;
}

}  // namespace

std::string method_name(ProjectionMethod m) { return m == ProjectionMethod::Pca ? "pca" : "neighbor"; }

ProjectionMethod parse_method(std::string_view name) {
  if (name == "pca") return ProjectionMethod::Pca;
  if (name == "neighbor" || name == "umap") return ProjectionMethod::Neighbor;
  throw Error(Errc::InvalidArgument, "unknown projection method '" + std::string(name) + "'");
}

Eigen::MatrixXd scale_to_unit(const Eigen::MatrixXd& coords) {
  Eigen::MatrixXd out(coords.rows(), coords.cols());
  for (Index c = 0; c < coords.cols(); ++c) {
    if (coords.rows() == 0) break;
    const double lo = coords.col(c).minCoeff(), hi = coords.col(c).maxCoeff();
    if (hi > lo)
      out.col(c) = (coords.col(c).array() - lo) / (hi - lo);
    else
      out.col(c).setConstant(0.5);
  }
  return out;
}

Projection project(const Eigen::MatrixXd& H, ProjectionMethod method, const ProjectionParams& params, std::uint64_t seed) {
  if (!H.allFinite()) throw Error(Errc::InvalidArgument, "embeddings contain non-finite values");
  Projection p;
  p.method = method;
  p.params = params;
  p.seed = seed;
  if (method == ProjectionMethod::Pca) {
    if (H.rows() < 1) throw Error(Errc::TooFewSamples, "nothing to project");
    p.coords = pca_coords(H, p.degenerate);
  } else {
    if (H.rows() < 3) throw Error(Errc::TooFewSamples, "neighbor embedding needs at least 3 samples");
    if (params.neighbors < 1 || params.neighbors >= H.rows())
      throw Error(Errc::TooFewSamples, std::to_string(params.neighbors) + " neighbors need more than " +
                                           std::to_string(H.rows()) + " samples");
    if (params.iterations < 1) throw Error(Errc::InvalidArgument, "iterations must be positive");
    p.coords = neighbor_layout(H, params, seed);
  }
  p.display = scale_to_unit(p.coords);
  return p;
}

nlohmann::json Projection::to_json() const {
  auto xy = nlohmann::json::array();
  for (Index i = 0; i < display.rows(); ++i) xy.push_back({display(i, 0), display(i, 1)});
  return {{"method", method_name(method)}, {"neighbors", params.neighbors}, {"iterations", params.iterations},
          {"seed", seed},                  {"step", model_step},            {"degenerate", degenerate},
          {"coords", xy}};
}

namespace {

bool on_segment(double px, double py, double ax, double ay, double bx, double by) {
  const double cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax);
  const double len = std::hypot(bx - ax, by - ay);
  if (std::abs(cross) > 1e-12 * std::max(1.0, len)) return false;
  return px >= std::min(ax, bx) - 1e-12 && px <= std::max(ax, bx) + 1e-12 && py >= std::min(ay, by) - 1e-12 &&
         py <= std::max(ay, by) + 1e-12;
}

void check_polygon(const Polygon& poly) {
  if (poly.size() < 3) throw Error(Errc::DegeneratePolygon, "a lasso needs at least 3 vertices");
  for (const auto& [x, y] : poly)
    if (!std::isfinite(x) || !std::isfinite(y)) throw Error(Errc::DegeneratePolygon, "polygon vertex is not finite");
  const auto [x0, y0] = poly[0];
  for (std::size_t a = 1; a < poly.size(); ++a)
    for (std::size_t b = a + 1; b < poly.size(); ++b) {
      const double cross = (poly[a].first - x0) * (poly[b].second - y0) - (poly[a].second - y0) * (poly[b].first - x0);
      if (cross != 0.0) return;
    }
  throw Error(Errc::DegeneratePolygon, "polygon vertices are collinear");
}

}  // namespace

std::vector<std::size_t> lasso_select(const Eigen::MatrixXd& points, const Polygon& polygon) {
  check_polygon(polygon);
  std::vector<std::size_t> hits;
  const std::size_t v = polygon.size();
  for (Index r = 0; r < points.rows(); ++r) {
    const double px = points(r, 0), py = points(r, 1);
    bool inside = false;
    for (std::size_t a = 0, b = v - 1; a < v; b = a++) {
      const auto [ax, ay] = polygon[a];
      const auto [bx, by] = polygon[b];
      if (on_segment(px, py, ax, ay, bx, by)) {
        inside = true;
        break;
      }
      if ((ay > py) != (by > py) && px < (bx - ax) * (py - ay) / (by - ay) + ax) inside = !inside;
    }
    if (inside) hits.push_back(static_cast<std::size_t>(r));
  }
  return hits;
}

std::vector<std::size_t> lasso_select(const Projection& proj, const Polygon& polygon) {
  return lasso_select(proj.display, polygon);
}

}  // namespace kge
