#include "kge/cluster.hpp"

#include <algorithm>
#include <limits>
#include <random>

#include "kge/error.hpp"

namespace kge {

namespace {

int nearest(const Eigen::MatrixXd& centroids, const Eigen::RowVectorXd& p, double* dist2 = nullptr) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    const double dd = (centroids.row(c) - p).squaredNorm();
    if (dd < best_d) {  // strict: ties keep the lower index
      best_d = dd;
      best = static_cast<int>(c);
    }
  }
  if (dist2) *dist2 = best_d;
  return best;
}

Eigen::MatrixXd seed_plus_plus(const Eigen::MatrixXd& points, int k, std::mt19937_64& rng) {
  const Eigen::Index n = points.rows();
  Eigen::MatrixXd centroids(k, points.cols());
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  centroids.row(0) = points.row(pick(rng));
  std::vector<double> d2(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) d2[static_cast<std::size_t>(i)] = (points.row(i) - centroids.row(0)).squaredNorm();
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int c = 1; c < k; ++c) {
    double total = 0;
    for (double v : d2) total += v;
    Eigen::Index chosen = 0;
    if (total <= 0) {
      chosen = pick(rng);
    } else {
      double r = unif(rng) * total;
      chosen = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        r -= d2[static_cast<std::size_t>(i)];
        if (r < 0) {
          chosen = i;
          break;
        }
      }
    }
    centroids.row(c) = points.row(chosen);
    for (Eigen::Index i = 0; i < n; ++i)
      d2[static_cast<std::size_t>(i)] =
          std::min(d2[static_cast<std::size_t>(i)], (points.row(i) - centroids.row(c)).squaredNorm());
  }
  return centroids;
}

KMeansResult lloyd(const Eigen::MatrixXd& points, int k, std::mt19937_64& rng, const KMeansOptions& options) {
  const Eigen::Index n = points.rows();
  KMeansResult res;
  res.centroids = seed_plus_plus(points, k, rng);
  res.assignment.assign(static_cast<std::size_t>(n), 0);

  for (int it = 0; it < options.max_iterations; ++it) {
    res.iterations = it + 1;
    for (Eigen::Index i = 0; i < n; ++i) res.assignment[static_cast<std::size_t>(i)] = nearest(res.centroids, points.row(i));

    Eigen::MatrixXd next = Eigen::MatrixXd::Zero(k, points.cols());
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int c = res.assignment[static_cast<std::size_t>(i)];
      next.row(c) += points.row(i);
      ++counts[static_cast<std::size_t>(c)];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        next.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
        continue;
      }
      // Re-seed from the point farthest from its assigned centroid.
      Eigen::Index far = 0;
      double far_d = -1;
      for (Eigen::Index i = 0; i < n; ++i) {
        const int a = res.assignment[static_cast<std::size_t>(i)];
        if (counts[static_cast<std::size_t>(a)] <= 1) continue;
        const double dd = (points.row(i) - res.centroids.row(a)).squaredNorm();
        if (dd > far_d) {
          far_d = dd;
          far = i;
        }
      }
      --counts[static_cast<std::size_t>(res.assignment[static_cast<std::size_t>(far)])];
      res.assignment[static_cast<std::size_t>(far)] = c;
      counts[static_cast<std::size_t>(c)] = 1;
      next.row(c) = points.row(far);
    }
    const double shift = (next - res.centroids).rowwise().norm().maxCoeff();
    res.centroids = std::move(next);
    if (shift < options.tolerance) break;
  }
  for (Eigen::Index i = 0; i < n; ++i) res.assignment[static_cast<std::size_t>(i)] = nearest(res.centroids, points.row(i));
  // Final assignment can empty a cluster only in degenerate duplicate-point
  // inputs; keep every id populated.
  std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
  for (int a : res.assignment) ++counts[static_cast<std::size_t>(a)];
  for (int c = 0; c < k; ++c) {
    if (counts[static_cast<std::size_t>(c)] > 0) continue;
    for (Eigen::Index i = 0; i < n; ++i) {
      auto& a = res.assignment[static_cast<std::size_t>(i)];
      if (counts[static_cast<std::size_t>(a)] > 1) {
        --counts[static_cast<std::size_t>(a)];
        a = c;
        counts[static_cast<std::size_t>(c)] = 1;
        break;
      }
    }
  }
  res.sse = within_cluster_sse(points, res.assignment, k);
  return res;
}

}  // namespace

double within_cluster_sse(const Eigen::MatrixXd& points, const std::vector<int>& assignment, int k) {
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, points.cols());
  std::vector<double> counts(static_cast<std::size_t>(k), 0.0);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    sums.row(assignment[static_cast<std::size_t>(i)]) += points.row(i);
    counts[static_cast<std::size_t>(assignment[static_cast<std::size_t>(i)])] += 1;
  }
  double sse = 0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const int c = assignment[static_cast<std::size_t>(i)];
    sse += (points.row(i) - sums.row(c) / counts[static_cast<std::size_t>(c)]).squaredNorm();
  }
  return sse;
}

KMeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed, const KMeansOptions& options) {
  if (k < 1) throw Error(Errc::InvalidArgument, "k must be positive");
  if (static_cast<Eigen::Index>(k) > points.rows())
    throw Error(Errc::TooManyClusters, "k=" + std::to_string(k) + " exceeds " + std::to_string(points.rows()) + " points");
  std::mt19937_64 rng(seed);
  KMeansResult best;
  for (int r = 0; r < std::max(1, options.restarts); ++r) {
    auto res = lloyd(points, k, rng, options);
    if (r == 0 || res.sse < best.sse) best = std::move(res);
  }
  return best;
}

std::vector<int> max_weight_assignment(const Eigen::MatrixXd& weights) {
  // Hungarian algorithm (potentials form) minimizing the negated weights.
  const int n = static_cast<int>(weights.rows());
  const int m = static_cast<int>(weights.cols());
  if (n > m) throw Error(Errc::InvalidArgument, "assignment needs rows <= cols");
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n + 1), 0), v(static_cast<std::size_t>(m + 1), 0);
  std::vector<int> p(static_cast<std::size_t>(m + 1), 0), way(static_cast<std::size_t>(m + 1), 0);
  auto cost = [&](int i, int j) { return -weights(i - 1, j - 1); };
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(m + 1), inf);
    std::vector<char> used(static_cast<std::size_t>(m + 1), 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = p[static_cast<std::size_t>(j0)];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = cost(i0, j) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= m; ++j)
    if (p[static_cast<std::size_t>(j)] != 0) row_to_col[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
  return row_to_col;
}

}  // namespace kge
