#include <random>

#include "doctest.h"
#include "kge/cluster.hpp"
#include "kge/error.hpp"
#include "kge/evalbench.hpp"
#include "kge/projection.hpp"

using namespace kge;

namespace {

// Crossing parity along a slightly tilted ray, using orientation tests only.
bool ray_cast_inside(double px, double py, const Polygon& poly) {
  const double rx = px + 1e6, ry = py + 1e6 * 0.000123456789;
  auto orient = [](double ax, double ay, double bx, double by, double cx, double cy) {
    const double v = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax);
    return (v > 0) - (v < 0);
  };
  int crossings = 0;
  for (std::size_t a = 0; a < poly.size(); ++a) {
    const auto [ax, ay] = poly[a];
    const auto [bx, by] = poly[(a + 1) % poly.size()];
    if (orient(px, py, rx, ry, ax, ay) != orient(px, py, rx, ry, bx, by) &&
        orient(ax, ay, bx, by, px, py) != orient(ax, ay, bx, by, rx, ry))
      ++crossings;
  }
  return crossings % 2 == 1;
}

}  // namespace

TEST_CASE("pca keeps planar distances and centres the coordinates") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 1.0);
  const Eigen::Vector3d u = Eigen::Vector3d(1, 2, -1).normalized();
  const Eigen::Vector3d w = u.cross(Eigen::Vector3d(0, 0, 1)).normalized();
  Eigen::MatrixXd X(40, 3);
  for (int i = 0; i < 40; ++i) X.row(i) = (Eigen::Vector3d(3, -1, 2) + 3 * g(rng) * u + g(rng) * w).transpose();

  const auto p = project(X, ProjectionMethod::Pca);
  CHECK_FALSE(p.degenerate);
  for (int i = 0; i < 40; ++i)
    for (int j = 0; j < 40; ++j)
      CHECK((X.row(i) - X.row(j)).norm() == doctest::Approx((p.coords.row(i) - p.coords.row(j)).norm()).epsilon(1e-9));
  CHECK(std::abs(p.coords.col(0).mean()) < 1e-9);
  CHECK(std::abs(p.coords.col(1).mean()) < 1e-9);
  CHECK(std::abs(p.coords.col(0).dot(p.coords.col(1))) < 1e-8);
  // The first axis carries more variance.
  CHECK(p.coords.col(0).squaredNorm() > p.coords.col(1).squaredNorm());
}

TEST_CASE("pca on identical rows is flagged, not thrown") {
  const Eigen::MatrixXd X = Eigen::MatrixXd::Constant(5, 4, 2.5);
  const auto p = project(X, ProjectionMethod::Pca);
  CHECK(p.degenerate);
  CHECK(p.coords.isZero());
  CHECK((p.display.array() == 0.5).all());
}

TEST_CASE("neighbor embedding separates two distant blobs") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0.0, 0.3);
  Eigen::MatrixXd X(120, 16);
  std::vector<int> truth;
  for (int i = 0; i < 120; ++i) {
    const int blob = i % 2;
    truth.push_back(blob);
    for (int c = 0; c < 16; ++c) X(i, c) = (blob ? 5.0 : -5.0) + g(rng);
  }
  const auto p = project(X, ProjectionMethod::Neighbor, {}, 3);
  CHECK(p.coords.allFinite());
  CHECK(p.display.minCoeff() >= 0.0);
  CHECK(p.display.maxCoeff() <= 1.0);
  const auto km = kmeans(p.coords, 2, 0);
  CHECK(matched_accuracy(km.assignment, truth, 2) >= 0.99);

  const auto again = project(X, ProjectionMethod::Neighbor, {}, 3);
  CHECK(again.coords == p.coords);
}

TEST_CASE("neighbor embedding preconditions") {
  const Eigen::MatrixXd two = Eigen::MatrixXd::Random(2, 3);
  CHECK_THROWS_AS(project(two, ProjectionMethod::Neighbor), Error);
  const Eigen::MatrixXd ten = Eigen::MatrixXd::Random(10, 3);
  ProjectionParams p;
  p.neighbors = 10;
  try {
    project(ten, ProjectionMethod::Neighbor, p);
    FAIL("expected TooFewSamples");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::TooFewSamples);
  }
  p.neighbors = 3;
  p.iterations = 20;
  CHECK(project(ten, ProjectionMethod::Neighbor, p).coords.rows() == 10);
  CHECK(parse_method("pca") == ProjectionMethod::Pca);
  CHECK_THROWS_AS(parse_method("tsne"), Error);
}

TEST_CASE("lasso trivial cases and boundary") {
  Eigen::MatrixXd pts(4, 2);
  pts << 0.1, 0.1, 0.9, 0.9, 0.5, 0.5, 0.0, 0.5;
  const Polygon all{{-1, -1}, {2, -1}, {2, 2}, {-1, 2}};
  CHECK(lasso_select(pts, all) == std::vector<std::size_t>{0, 1, 2, 3});
  const Polygon empty{{5, 5}, {6, 5}, {6, 6}};
  CHECK(lasso_select(pts, empty).empty());
  // Vertex (0.1,0.1) and the point on the left edge count as inside.
  const Polygon square{{0.0, 0.1}, {0.1, 0.1}, {0.1, 0.9}, {0.0, 0.9}};
  CHECK(lasso_select(pts, square) == std::vector<std::size_t>{0, 3});

  CHECK_THROWS_AS(lasso_select(pts, Polygon{{0, 0}, {1, 1}}), Error);
  try {
    lasso_select(pts, Polygon{{0, 0}, {1, 1}, {2, 2}});
    FAIL("expected DegeneratePolygon");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::DegeneratePolygon);
  }
}

TEST_CASE("lasso matches an independent ray cast on random polygons") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> verts(3, 12);
  Eigen::MatrixXd pts(300, 2);
  for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = u(rng);
  for (int trial = 0; trial < 200; ++trial) {
    Polygon poly(static_cast<std::size_t>(verts(rng)));
    for (auto& [x, y] : poly) {
      x = u(rng) * 1.2 - 0.1;
      y = u(rng) * 1.2 - 0.1;
    }
    std::vector<std::size_t> expect;
    for (Eigen::Index i = 0; i < pts.rows(); ++i)
      if (ray_cast_inside(pts(i, 0), pts(i, 1), poly)) expect.push_back(static_cast<std::size_t>(i));
    REQUIRE(lasso_select(pts, poly) == expect);
  }
}
