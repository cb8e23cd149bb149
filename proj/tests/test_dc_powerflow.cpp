#include <catch2/catch_amalgamated.hpp>

#include "gridinfer/dc_powerflow.hpp"
#include "gridinfer/rng.hpp"
#include "gridinfer/scenario.hpp"
#include "testing_support.hpp"

using namespace gridinfer;
namespace ts = testing_support;
using Catch::Matchers::WithinAbs;

TEST_CASE("two-bus laplacian") {
  Grid g = ts::two_bus_grid(0.5);
  Eigen::MatrixXd lap = build_laplacian(g, TopologyVector({1}));
  Eigen::MatrixXd expect(2, 2);
  expect << 2, -2, -2, 2;
  CHECK(lap.isApprox(expect, 0.0));

  CHECK(build_laplacian(g, TopologyVector({0})).isZero(0.0));
}

TEST_CASE("ieee30 laplacian rows sum to zero") {
  Grid g = ts::ieee30_grid();
  Eigen::MatrixXd lap =
      build_laplacian(g, TopologyVector::all_active(static_cast<std::size_t>(g.branch_count())));
  CHECK(lap.isApprox(lap.transpose(), 1e-15));
  for (Eigen::Index r = 0; r < lap.rows(); ++r)
    CHECK_THAT(lap.row(r).sum(), WithinAbs(0.0, 1e-12));
}

TEST_CASE("laplacian is positive semidefinite") {
  Grid g = ts::ieee30_grid();
  Eigen::MatrixXd lap =
      build_laplacian(g, TopologyVector::all_active(static_cast<std::size_t>(g.branch_count())));
  Rng rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    Eigen::VectorXd theta(g.bus_count());
    for (int i = 0; i < g.bus_count(); ++i) theta(i) = rng.uniform(-1.0, 1.0);
    CHECK(theta.dot(lap * theta) >= -1e-9);
  }
}

TEST_CASE("two-bus solve") {
  Grid g = ts::two_bus_grid(0.5);
  TopologyVector s({1});
  Eigen::Vector2d p(1.0, -1.0);
  AngleVector theta = solve_angles(g, s, p);
  CHECK_THAT(theta(0), WithinAbs(0.0, 1e-15));
  CHECK_THAT(theta(1), WithinAbs(-0.5, 1e-12));

  AngleVector zero = solve_angles(g, s, Eigen::Vector2d::Zero());
  CHECK(zero.isZero(1e-15));
}

TEST_CASE("triangle solve matches the pseudoinverse computation") {
  // Frozen from tests/tools/reference_values.py (numpy pinv, anchored).
  Grid g = ts::triangle_grid(0.5);
  Eigen::Vector3d p(2.0, -1.0, -1.0);
  AngleVector theta = solve_angles(g, TopologyVector::all_active(3), p);
  CHECK_THAT(theta(0), WithinAbs(0.0, 1e-15));
  CHECK_THAT(theta(1), WithinAbs(-0.5, 1e-12));
  CHECK_THAT(theta(2), WithinAbs(-0.5, 1e-12));
}

TEST_CASE("solver rejects bad inputs") {
  Grid g = ts::triangle_grid();
  CHECK_THROWS_AS(solve_angles(g, TopologyVector({1, 1, 1}), Eigen::Vector2d(1.0, -1.0)),
                  DimensionError);
  CHECK_THROWS_AS(solve_angles(g, TopologyVector({1, 1}), Eigen::Vector3d::Zero()),
                  DimensionError);
  // injections that do not sum to zero are rejected, not projected
  CHECK_THROWS_AS(solve_angles(g, TopologyVector({1, 1, 1}), Eigen::Vector3d(1.0, 0.0, 0.0)),
                  ValidationError);
  // disconnected topology
  CHECK_THROWS_AS(solve_angles(g, TopologyVector({1, 0, 0}), Eigen::Vector3d(1.0, -1.0, 0.0)),
                  DisconnectedError);
}

TEST_CASE("injections from angles") {
  Grid g = ts::two_bus_grid(0.5);
  TopologyVector s({1});
  CHECK(injections_from_angles(g, s, Eigen::Vector2d::Zero()).isZero(0.0));
  InjectionVector p = injections_from_angles(g, s, Eigen::Vector2d(0.0, -0.5));
  CHECK_THAT(p(0), WithinAbs(1.0, 1e-15));
  CHECK_THAT(p(1), WithinAbs(-1.0, 1e-15));
}

TEST_CASE("round trip injections -> angles -> injections") {
  Grid g = reduce_grid(ts::ieee30_grid());
  Rng rng(17);
  TopologyVector s = TopologyVector::all_active(static_cast<std::size_t>(g.branch_count()));
  for (int trial = 0; trial < 20; ++trial) {
    AngleVector theta(g.bus_count());
    for (int i = 0; i < g.bus_count(); ++i) theta(i) = rng.uniform(0.0, 0.6);
    InjectionVector p = injections_from_angles(g, s, theta);
    CHECK_THAT(p.sum(), WithinAbs(0.0, 1e-9));
    AngleVector back = solve_angles(g, s, p);
    // recovered up to the reference shift
    AngleVector shifted = theta.array() - theta(g.reference_bus);
    CHECK((back - shifted).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("superposition of solutions") {
  Grid g = reduce_grid(ts::ieee30_grid());
  Rng rng(23);
  TopologyVector s = TopologyVector::all_active(static_cast<std::size_t>(g.branch_count()));
  auto random_injections = [&]() {
    AngleVector theta(g.bus_count());
    for (int i = 0; i < g.bus_count(); ++i) theta(i) = rng.uniform(0.0, 0.6);
    return injections_from_angles(g, s, theta);
  };
  for (int trial = 0; trial < 10; ++trial) {
    InjectionVector p1 = random_injections();
    InjectionVector p2 = random_injections();
    const double a = rng.uniform(-2.0, 2.0), b = rng.uniform(-2.0, 2.0);
    AngleVector combined = solve_angles(g, s, a * p1 + b * p2);
    AngleVector parts = a * solve_angles(g, s, p1) + b * solve_angles(g, s, p2);
    CHECK((combined - parts).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("removing a line that carries no flow leaves the solution unchanged") {
  // In a symmetric double path the middle cross line carries zero flow.
  Grid g = make_grid({{0, ""}, {1, ""}, {2, ""}, {3, ""}},
                     {{0, 1, 0.4}, {0, 2, 0.4}, {1, 2, 0.3}, {1, 3, 0.4}, {2, 3, 0.4}}, 0);
  Eigen::Vector4d p(1.0, 0.0, 0.0, -1.0);
  TopologyVector all = TopologyVector::all_active(5);
  AngleVector theta_all = solve_angles(g, all, p);
  const double cross_flow = (theta_all(1) - theta_all(2)) / 0.3;
  REQUIRE_THAT(cross_flow, WithinAbs(0.0, 1e-12));
  TopologyVector without = all;
  without[2] = 0;
  AngleVector theta_without = solve_angles(g, without, p);
  CHECK((theta_all - theta_without).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("merging parallel branches preserves the DC solution") {
  auto buses = std::vector<BusSpec>{{0, ""}, {1, ""}, {2, ""}};
  auto merged = make_grid(buses, {{0, 1, 0.25}, {1, 2, 0.2}, {0, 2, 0.7}}, 0);
  auto raw = make_grid(buses, {{0, 1, 0.5}, {0, 1, 0.5}, {1, 2, 0.2}, {0, 2, 0.7}}, 0);
  REQUIRE(raw.branch_count() == 3);  // parallels merged at construction
  Eigen::Vector3d p(1.5, -0.5, -1.0);
  AngleVector a = solve_angles(merged, TopologyVector::all_active(3), p);
  AngleVector b = solve_angles(raw, TopologyVector::all_active(3), p);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
}
