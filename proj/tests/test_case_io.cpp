#include <catch2/catch_amalgamated.hpp>

#include "gridinfer/case_io.hpp"
#include "testing_support.hpp"

using namespace gridinfer;
namespace ts = testing_support;

TEST_CASE("JSON case round trip") {
  const std::string text = R"({
    "buses": [{"id": 1}, {"id": 2, "name": "north"}],
    "branches": [{"from": 1, "to": 2, "x": 0.5}],
    "reference_bus": 1
  })";
  CaseData c = load_case_json(text);
  CHECK(c.grid.bus_count() == 2);
  CHECK(c.grid.branch_count() == 1);
  CHECK(c.raw_branch_count == 1);
  CHECK(c.grid.buses[1].name == "north");

  const std::string emitted = grid_to_case_json(c.grid);
  CaseData again = load_case_json(emitted);
  CHECK(grid_to_case_json(again.grid) == emitted);
}

TEST_CASE("JSON case with duplicate branch merges reactances") {
  const std::string text = R"({
    "buses": [{"id": 1}, {"id": 2}],
    "branches": [{"from": 1, "to": 2, "x": 0.2}, {"from": 1, "to": 2, "x": 0.2}],
    "reference_bus": 1
  })";
  CaseData c = load_case_json(text);
  CHECK(c.raw_branch_count == 2);
  REQUIRE(c.grid.branch_count() == 1);
  CHECK_THAT(c.grid.branches[0].reactance, Catch::Matchers::WithinAbs(0.1, 1e-15));
}

TEST_CASE("malformed JSON case reports a parse error") {
  CHECK_THROWS_AS(load_case_json("{"), ParseError);
  CHECK_THROWS_AS(load_case_json(R"({"buses": []})"), ParseError);
  CHECK_THROWS_AS(load_case_json(R"({"buses": [{"id": 1}], "branches": [{"from": 1}]})"),
                  ParseError);
}

TEST_CASE("bundled ieee30 case parses to 30 buses and 41 raw branches") {
  CaseData c = load_case_matpower(ts::read_file(ts::data_path("case_ieee30.m")));
  CHECK(c.grid.bus_count() == 30);
  CHECK(c.raw_branch_count == 41);
  CHECK(c.grid.branch_count() == 41);  // no parallel pairs in this case
  CHECK(c.grid.buses[c.grid.reference_bus].external_id == 1);  // type-3 bus
  // spot-check a reactance against the table
  const Branch& first = c.grid.branches[0];
  CHECK(c.grid.buses[first.from_bus].external_id == 1);
  CHECK(c.grid.buses[first.to_bus].external_id == 2);
  CHECK(first.reactance == 0.0575);
}

TEST_CASE("matpower parse errors carry line numbers") {
  const std::string bad = "mpc.bus = [\n1 3;\n];\nmpc.branch = [\n1 2 0.1 oops;\n];\n";
  try {
    load_case_matpower(bad);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 5);
  }
  CHECK_THROWS_AS(load_case_matpower("mpc.bus = [\n1 3;\n];\n"), ParseError);
  CHECK_THROWS_AS(load_case_matpower("nothing here"), ParseError);
}

TEST_CASE("auto loader sniffs JSON vs tabular") {
  CaseData json_case = load_case_auto(R"(  {"buses": [{"id": 1}, {"id": 2}],
      "branches": [{"from": 1, "to": 2, "x": 1.0}], "reference_bus": 1})");
  CHECK(json_case.grid.bus_count() == 2);
  CaseData m_case = load_case_auto(ts::read_file(ts::data_path("case_ieee30.m")));
  CHECK(m_case.grid.bus_count() == 30);
}
