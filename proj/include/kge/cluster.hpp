#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace kge {

struct KMeansOptions {
  int max_iterations = 100;
  double tolerance = 1e-6;  // stop when every centroid moves less than this
  int restarts = 1;         // best-of-N by within-cluster SSE
};

struct KMeansResult {
  std::vector<int> assignment;  // one cluster id per row
  Eigen::MatrixXd centroids;    // K x dims
  double sse = 0;
  int iterations = 0;
};

// Lloyd's algorithm with k-means++ seeding. Equidistant points join the
// lowest-index centroid; a cluster that empties is re-seeded with the point
// farthest from its current centroid. Requires 1 <= k <= rows.
KMeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed, const KMeansOptions& options = {});

double within_cluster_sse(const Eigen::MatrixXd& points, const std::vector<int>& assignment, int k);

// Maximum-weight perfect assignment on a square or rectangular weight matrix
// (rows <= cols). Returns the column chosen for each row.
std::vector<int> max_weight_assignment(const Eigen::MatrixXd& weights);

}  // namespace kge
