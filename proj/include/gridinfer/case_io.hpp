#pragma once

#include <cctype>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridinfer/errors.hpp"
#include "gridinfer/grid.hpp"

namespace gridinfer {

struct CaseData {
  Grid grid;
  int raw_branch_count = 0;  // before parallel-branch merging
};

// Canonical UTF-8 JSON case: {"buses": [{"id", "name"?}], "branches":
// [{"from", "to", "x"}], "reference_bus"}. External bus ids throughout.
inline CaseData load_case_json(const std::string& case_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(case_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("buses") || !j.contains("branches"))
    throw ParseError("case JSON must contain 'buses' and 'branches' arrays");

  std::vector<BusSpec> buses;
  for (const auto& jb : j.at("buses")) {
    BusSpec b;
    if (!jb.contains("id") || !jb.at("id").is_number_integer())
      throw ParseError("bus entry missing integer 'id'");
    b.id = jb.at("id").get<int>();
    if (jb.contains("name")) b.name = jb.at("name").get<std::string>();
    buses.push_back(std::move(b));
  }

  std::vector<BranchSpec> branches;
  for (const auto& jb : j.at("branches")) {
    if (!jb.contains("from") || !jb.contains("to") || !jb.contains("x"))
      throw ParseError("branch entry must have 'from', 'to', 'x'");
    branches.push_back(BranchSpec{jb.at("from").get<int>(), jb.at("to").get<int>(),
                                  jb.at("x").get<double>()});
  }

  int reference = buses.empty() ? 0 : buses.front().id;
  if (j.contains("reference_bus")) reference = j.at("reference_bus").get<int>();

  CaseData out;
  out.raw_branch_count = static_cast<int>(branches.size());
  out.grid = make_grid(buses, branches, reference);
  return out;
}

inline Grid load_grid(const std::string& case_text) { return load_case_json(case_text).grid; }

inline std::string grid_to_case_json(const Grid& grid) {
  nlohmann::json j;
  j["buses"] = nlohmann::json::array();
  for (const Bus& b : grid.buses) {
    nlohmann::json jb{{"id", b.external_id}};
    if (!b.name.empty()) jb["name"] = b.name;
    j["buses"].push_back(jb);
  }
  j["branches"] = nlohmann::json::array();
  for (const Branch& br : grid.branches) {
    j["branches"].push_back(nlohmann::json{{"from", grid.buses[br.from_bus].external_id},
                                           {"to", grid.buses[br.to_bus].external_id},
                                           {"x", br.reactance}});
  }
  j["reference_bus"] = grid.buses[grid.reference_bus].external_id;
  return j.dump(2) + "\n";
}

namespace detail {

inline std::string strip_matpower_comment(const std::string& line) {
  auto pos = line.find('%');
  return pos == std::string::npos ? line : line.substr(0, pos);
}

inline bool parse_double_token(const std::string& tok, double& out) {
  std::size_t consumed = 0;
  try {
    out = std::stod(tok, &consumed);
  } catch (const std::exception&) {
    return false;
  }
  return consumed == tok.size();
}

}  // namespace detail

// MATPOWER-style tabular case text. Only the bus table (bus id, type flag)
// and the branch table (endpoints, reactance column) are consumed; every
// other column is ignored. A bus with type 3 becomes the reference bus.
inline CaseData load_case_matpower(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;

  enum class Section { none, bus, branch, other };
  Section section = Section::none;

  std::vector<BusSpec> buses;
  std::vector<BranchSpec> branches;
  int reference = 0;
  bool have_reference = false;
  bool saw_bus = false, saw_branch = false;

  while (std::getline(in, line)) {
    ++line_no;
    std::string body = detail::strip_matpower_comment(line);

    if (section == Section::none) {
      auto pos = body.find('=');
      if (pos == std::string::npos) continue;
      std::string lhs = body.substr(0, pos);
      auto trim = [](std::string s) {
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
        std::size_t i = 0;
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        return s.substr(i);
      };
      lhs = trim(lhs);
      if (body.find('[', pos) == std::string::npos) continue;
      if (lhs == "mpc.bus" || lhs == "bus") {
        section = Section::bus;
        saw_bus = true;
      } else if (lhs == "mpc.branch" || lhs == "branch") {
        section = Section::branch;
        saw_branch = true;
      } else {
        section = Section::other;
      }
      body = body.substr(body.find('[', pos) + 1);
    }

    if (section == Section::none) continue;

    bool closes = false;
    auto close_pos = body.find(']');
    if (close_pos != std::string::npos) {
      body = body.substr(0, close_pos);
      closes = true;
    }

    // Rows are ';'-terminated lists of whitespace-separated numbers.
    std::size_t start = 0;
    while (start <= body.size()) {
      auto end = body.find(';', start);
      std::string row = body.substr(start, end == std::string::npos ? std::string::npos : end - start);
      start = end == std::string::npos ? body.size() + 1 : end + 1;

      std::istringstream row_in(row);
      std::vector<std::string> toks;
      std::string tok;
      while (row_in >> tok) toks.push_back(tok);
      if (toks.empty()) continue;
      if (section == Section::other) continue;

      std::vector<double> vals;
      vals.reserve(toks.size());
      for (const std::string& t : toks) {
        double v = 0;
        if (!detail::parse_double_token(t, v))
          throw ParseError("malformed number '" + t + "'", line_no);
        vals.push_back(v);
      }

      if (section == Section::bus) {
        if (vals.size() < 2) throw ParseError("bus row needs at least id and type", line_no);
        BusSpec b;
        b.id = static_cast<int>(vals[0]);
        buses.push_back(b);
        if (!have_reference && static_cast<int>(vals[1]) == 3) {
          reference = b.id;
          have_reference = true;
        }
      } else if (section == Section::branch) {
        if (vals.size() < 4)
          throw ParseError("branch row needs at least from, to, r, x columns", line_no);
        branches.push_back(
            BranchSpec{static_cast<int>(vals[0]), static_cast<int>(vals[1]), vals[3]});
      }
    }

    if (closes) section = Section::none;
  }

  if (!saw_bus || !saw_branch) throw ParseError("case text has no bus/branch tables");
  if (buses.empty()) throw ParseError("bus table is empty");
  if (!have_reference) reference = buses.front().id;

  CaseData out;
  out.raw_branch_count = static_cast<int>(branches.size());
  out.grid = make_grid(buses, branches, reference);
  return out;
}

// Sniffs JSON vs tabular text.
inline CaseData load_case_auto(const std::string& text) {
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) continue;
    if (c == '{') return load_case_json(text);
    break;
  }
  return load_case_matpower(text);
}

}  // namespace gridinfer
