#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

namespace kge {

enum class ProjectionMethod { Pca, Neighbor };

std::string method_name(ProjectionMethod m);
ProjectionMethod parse_method(std::string_view name);  // "pca" | "neighbor"; throws InvalidArgument

struct ProjectionParams {
  int neighbors = 15;
  int iterations = 200;
};

struct Projection {
  ProjectionMethod method = ProjectionMethod::Pca;
  ProjectionParams params;
  std::uint64_t seed = 0;
  std::size_t model_step = 0;
  Eigen::MatrixXd coords;   // raw layout, one row per input row
  Eigen::MatrixXd display;  // coords min-max scaled to [0,1] per axis
  bool degenerate = false;  // pca on rank-0 input: every point at the origin

  nlohmann::json to_json() const;
};

Projection project(const Eigen::MatrixXd& H, ProjectionMethod method, const ProjectionParams& params = {},
                   std::uint64_t seed = 0);

// Per-axis min-max scaling; a constant axis maps to 0.5.
Eigen::MatrixXd scale_to_unit(const Eigen::MatrixXd& coords);

using Polygon = std::vector<std::pair<double, double>>;

// Even-odd containment with boundary points counted as inside. Returns row
// indices in increasing order.
std::vector<std::size_t> lasso_select(const Eigen::MatrixXd& points, const Polygon& polygon);
// Selects against the display coordinates.
std::vector<std::size_t> lasso_select(const Projection& proj, const Polygon& polygon);

}  // namespace kge
