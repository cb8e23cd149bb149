#include <catch2/catch_amalgamated.hpp>

#include "gridinfer/grid.hpp"
#include "gridinfer/rng.hpp"
#include "testing_support.hpp"

using namespace gridinfer;
namespace ts = testing_support;

TEST_CASE("minimal two-bus grid") {
  Grid g = ts::two_bus_grid();
  CHECK(g.bus_count() == 2);
  CHECK(g.branch_count() == 1);
  CHECK(g.branches[0].reactance == 0.5);
}

TEST_CASE("parallel branches merge into the equivalent reactance") {
  Grid g = make_grid({{1, ""}, {2, ""}}, {{1, 2, 0.2}, {1, 2, 0.2}}, 1);
  REQUIRE(g.branch_count() == 1);
  CHECK_THAT(g.branches[0].reactance, Catch::Matchers::WithinAbs(0.1, 1e-15));

  // Opposite orientation still counts as the same unordered pair.
  Grid g2 = make_grid({{1, ""}, {2, ""}}, {{1, 2, 0.4}, {2, 1, 0.4}}, 1);
  REQUIRE(g2.branch_count() == 1);
  CHECK_THAT(g2.branches[0].reactance, Catch::Matchers::WithinAbs(0.2, 1e-15));
}

TEST_CASE("grid validation errors name the violated invariant") {
  CHECK_THROWS_AS(make_grid({{0, ""}, {1, ""}}, {{0, 1, -0.5}}, 0), ValidationError);
  CHECK_THROWS_AS(make_grid({{0, ""}, {1, ""}}, {{0, 1, 0.0}}, 0), ValidationError);
  CHECK_THROWS_AS(make_grid({{0, ""}, {1, ""}}, {{0, 0, 0.5}}, 0), ValidationError);
  CHECK_THROWS_AS(make_grid({{0, ""}, {0, ""}}, {{0, 0, 0.5}}, 0), ValidationError);
  CHECK_THROWS_AS(make_grid({{0, ""}, {1, ""}}, {{0, 1, 0.5}}, 7), ValidationError);
  CHECK_THROWS_AS(make_grid({{0, ""}, {1, ""}}, {{0, 2, 0.5}}, 0), ValidationError);
  // disconnected baseline
  CHECK_THROWS_AS(make_grid({{0, ""}, {1, ""}, {2, ""}}, {{0, 1, 0.5}}, 0), ValidationError);
}

TEST_CASE("external ids map to contiguous internal indices") {
  Grid g = make_grid({{30, ""}, {10, "mid"}, {20, ""}}, {{10, 20, 0.1}, {20, 30, 0.2}}, 20);
  REQUIRE(g.bus_count() == 3);
  CHECK(g.buses[0].external_id == 10);
  CHECK(g.buses[1].external_id == 20);
  CHECK(g.buses[2].external_id == 30);
  CHECK(g.buses[0].name == "mid");
  CHECK(g.reference_bus == 1);
  CHECK(g.internal_bus(30) == 2);
  CHECK(g.internal_bus(99) == -1);
}

TEST_CASE("reduce_grid marks bridges non-switchable") {
  SECTION("triangle has no bridges") {
    Grid g = reduce_grid(ts::triangle_grid());
    CHECK(g.switchable_count() == 3);
  }
  SECTION("path edges are all bridges") {
    Grid g = reduce_grid(ts::path_grid());
    CHECK(g.switchable_count() == 0);
  }
  SECTION("ieee30 keeps 38 switchable lines") {
    Grid g = reduce_grid(ts::ieee30_grid());
    CHECK(g.branch_count() == 41);
    CHECK(g.switchable_count() == 38);
    // the three bridges feed the leaf buses 11, 13, 26
    for (const Branch& b : g.branches) {
      if (!b.switchable) {
        const int leaf = std::max(g.buses[b.from_bus].external_id, g.buses[b.to_bus].external_id);
        CHECK((leaf == 11 || leaf == 13 || leaf == 26));
      }
    }
  }
}

TEST_CASE("reduce_grid is idempotent") {
  Grid once = reduce_grid(ts::ieee30_grid());
  Grid twice = reduce_grid(once);
  REQUIRE(once.branch_count() == twice.branch_count());
  for (int l = 0; l < once.branch_count(); ++l)
    CHECK(once.branches[static_cast<std::size_t>(l)].switchable ==
          twice.branches[static_cast<std::size_t>(l)].switchable);
  CHECK(grid_fingerprint(once) == grid_fingerprint(twice));
}

TEST_CASE("incidence matrix columns") {
  SECTION("two-bus") {
    Eigen::MatrixXd m = incidence_matrix(ts::two_bus_grid());
    REQUIRE(m.rows() == 2);
    REQUIRE(m.cols() == 1);
    CHECK(m(0, 0) == 1.0);
    CHECK(m(1, 0) == -1.0);
  }
  SECTION("triangle matches the hand-written matrix") {
    Grid g = make_grid({{0, ""}, {1, ""}, {2, ""}}, {{0, 1, 0.5}, {1, 2, 0.5}, {0, 2, 0.5}}, 0);
    Eigen::MatrixXd expect(3, 3);
    expect << 1, 0, 1, -1, 1, 0, 0, -1, -1;
    CHECK(incidence_matrix(g).isApprox(expect, 0.0));
  }
  SECTION("every ieee30 column has one +1, one -1, zero sum") {
    Eigen::MatrixXd m = incidence_matrix(ts::ieee30_grid());
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      CHECK(m.col(c).sum() == 0.0);
      CHECK(m.col(c).cwiseMax(0.0).sum() == 1.0);
      CHECK(m.col(c).cwiseMin(0.0).sum() == -1.0);
    }
  }
}

TEST_CASE("is_connected") {
  Grid tri = ts::triangle_grid();
  CHECK(is_connected(tri, TopologyVector::all_active(3)));
  CHECK(is_connected(tri, TopologyVector({1, 1, 0})));
  CHECK(is_connected(tri, TopologyVector({0, 1, 1})));
  CHECK_FALSE(is_connected(tri, TopologyVector({1, 0, 0})));
  CHECK_FALSE(is_connected(tri, TopologyVector({0, 0, 1})));
  CHECK_THROWS_AS(is_connected(tri, TopologyVector({1, 1})), DimensionError);
}

TEST_CASE("forcing all switchable lines active never disconnects") {
  Grid g = reduce_grid(ts::ieee30_grid());
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    TopologyVector s = TopologyVector::all_active(static_cast<std::size_t>(g.branch_count()));
    for (const Branch& b : g.branches)
      if (b.switchable) s[static_cast<std::size_t>(b.id)] = rng.bernoulli(0.5) ? 1 : 0;
    TopologyVector forced = s;
    for (const Branch& b : g.branches)
      if (b.switchable) forced[static_cast<std::size_t>(b.id)] = 1;
    CHECK(is_connected(g, forced));
  }
}

TEST_CASE("fingerprint distinguishes grids and survives copies") {
  Grid a = reduce_grid(ts::five_bus_grid());
  Grid b = a;
  CHECK(grid_fingerprint(a) == grid_fingerprint(b));
  Grid c = a;
  c.branches[0].reactance += 1e-12;
  CHECK(grid_fingerprint(a) != grid_fingerprint(c));
  CHECK(grid_fingerprint(a) != grid_fingerprint(reduce_grid(ts::triangle_grid())));
}

TEST_CASE("default PMU subset picks the highest-degree buses") {
  Grid g = ts::five_bus_grid();
  // degrees: bus1=2, bus2=3, bus3=3, bus4=2, bus5=2 (internal 0..4)
  auto top2 = default_pmu_subset(g, 2);
  CHECK(top2 == std::vector<int>{1, 2});
  auto top4 = default_pmu_subset(g, 4);
  CHECK(top4 == std::vector<int>{0, 1, 2, 3});  // degree tie broken by lower id
  CHECK(default_pmu_subset(g, 5).size() == 5);
  CHECK_THROWS_AS(default_pmu_subset(g, 0), ValidationError);
  CHECK_THROWS_AS(default_pmu_subset(g, 6), ValidationError);
}
