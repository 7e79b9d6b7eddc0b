#include <filesystem>
#include <random>

#include "doctest.h"
#include "gmlsnet/error.hpp"
#include "gmlsnet/point_cloud.hpp"

using namespace gmls;

namespace {

std::vector<std::uint32_t> indices(const std::vector<Neighbor>& list) {
  std::vector<std::uint32_t> out;
  for (const auto& n : list) out.push_back(n.index);
  return out;
}

}  // namespace

TEST_CASE("neighbors on a three point line") {
  PointCloud c(1, {0.0, 0.5, 1.0});
  const auto nl = build_neighbors(c, c, 0.6);
  CHECK(indices(nl[0]) == std::vector<std::uint32_t>{0, 1});
  CHECK(indices(nl[1]) == std::vector<std::uint32_t>{0, 1, 2});
  CHECK(indices(nl[2]) == std::vector<std::uint32_t>{1, 2});
}

TEST_CASE("periodic wrap distance") {
  PointCloud c(1, {0.05, 0.95}, Coord{1.0, 0.0});
  const auto nl = build_neighbors(c, c, 0.2);
  CHECK(nl[0].size() == 2);
  CHECK(nl[1].size() == 2);
  CHECK(nl[0][1].distance == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("grid search matches brute force on a 20x20 grid") {
  const PointCloud c = uniform_grid(2, 20, 1.0, false);
  CHECK(c.size() == 400);
  CHECK(build_neighbors(c, c, 0.12, NeighborSearch::grid) == build_neighbors(c, c, 0.12, NeighborSearch::brute_force));
}

TEST_CASE("grid search matches brute force on random clouds") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> eps(0.03, 0.3);
  for (int trial = 0; trial < 100; ++trial) {
    const int dim = 1 + trial % 2;
    const bool periodic = (trial / 2) % 2 == 1;
    const PointCloud src = random_cloud(dim, 60 + trial, 1.0, 100 + trial, periodic);
    const PointCloud tgt = random_cloud(dim, 30, 1.0, 900 + trial, periodic);
    const double e = eps(rng);
    NeighborList a, b;
    bool grid_threw = false, brute_threw = false;
    try { a = build_neighbors(src, tgt, e, NeighborSearch::grid); } catch (const EmptyNeighborhoodError&) { grid_threw = true; }
    try { b = build_neighbors(src, tgt, e, NeighborSearch::brute_force); } catch (const EmptyNeighborhoodError&) { brute_threw = true; }
    REQUIRE(grid_threw == brute_threw);
    if (!grid_threw) CHECK(a == b);
  }
}

TEST_CASE("neighbor lists are symmetric, sorted and exact") {
  const PointCloud c = random_cloud(2, 300, 1.0, 3, true);
  const double eps = 0.1;
  const auto nl = build_neighbors(c, c, eps);
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (std::size_t k = 0; k < nl[i].size(); ++k) {
      const auto& n = nl[i][k];
      CHECK(n.distance < eps);
      CHECK(n.distance == doctest::Approx(c.distance(c.point(i), c.point(n.index))).epsilon(1e-15));
      if (k > 0) CHECK(nl[i][k - 1].index < n.index);
      const auto back = indices(nl[n.index]);
      CHECK(std::find(back.begin(), back.end(), i) != back.end());
    }
  }
}

TEST_CASE("strict support and isolated targets") {
  PointCloud c(1, {0.0, 1.0});
  const auto nl = build_neighbors(c, c, 1.0);
  CHECK(nl[0].size() == 1);
  PointCloud far(1, {5.0});
  CHECK_THROWS_AS(build_neighbors(c, far, 1.0), EmptyNeighborhoodError);
  try {
    build_neighbors(c, far, 1.0);
  } catch (const EmptyNeighborhoodError& e) {
    CHECK(e.target() == 0);
  }
  CHECK_THROWS_AS(build_neighbors(c, uniform_grid(2, 3, 1.0, false), 0.5), Error);
  CHECK_THROWS_AS(build_neighbors(c, c, 0.0), Error);
}

TEST_CASE("invalid clouds are rejected") {
  CHECK_THROWS_AS(PointCloud(3, {0.0, 0.0, 0.0}), Error);
  CHECK_THROWS_AS(PointCloud(1, {std::nan("")}), Error);
  CHECK_THROWS_AS(PointCloud(1, {1.5}, Coord{1.0, 0.0}), Error);
}

TEST_CASE("weight kernel values") {
  const WeightKernel k2{2.0, 2};
  CHECK(weight(0.0, k2) == 1.0);
  CHECK(weight(1.0, k2) == doctest::Approx(0.25));
  CHECK(weight(2.2, k2) == 0.0);
  CHECK(weight(2.0, k2) == 0.0);
  const WeightKernel k1{1.0, 1};
  CHECK(weight(1.0 - 1e-12, k1) == doctest::Approx(0.0).epsilon(1e-10));
  double prev = 1.0;
  for (double r = 0.0; r < 1.2; r += 0.01) {
    const double w = weight(r, WeightKernel{1.0, 4});
    CHECK(w <= prev);
    prev = w;
  }
  // derivative against central differences
  const WeightKernel k4{0.7, 4};
  for (double r : {0.1, 0.3, 0.55}) {
    const double h = 1e-6;
    CHECK(k4.derivative(r) == doctest::Approx((k4(r + h) - k4(r - h)) / (2 * h)).epsilon(1e-8));
  }
}

TEST_CASE("cloud transforms and csv round trip") {
  const PointCloud c = random_cloud(2, 10, 1.0, 11, false);
  const PointCloud t = c.translated({0.25, -0.5});
  CHECK(t.coord(3, 0) == doctest::Approx(c.coord(3, 0) + 0.25));
  const auto path = std::filesystem::temp_directory_path() / "gmlsnet_cloud_test.csv";
  write_cloud_csv(path, c);
  const PointCloud r = read_cloud_csv(path);
  CHECK(r.same_geometry(c));
  std::filesystem::remove(path);
  const PointCloud s = c.subsample(4, 5);
  CHECK(s.size() == 4);
  CHECK(c.subsample(4, 5).same_geometry(s));
}
