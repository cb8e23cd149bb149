#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "gridinfer/errors.hpp"
#include "gridinfer/hash.hpp"

namespace gridinfer {

// Internal bus/branch ids are contiguous and 0-based. External ids are
// whatever the case file used (1-based for the bundled IEEE cases) and are
// kept only for reporting.
struct Bus {
  int id = 0;           // internal index
  int external_id = 0;  // id as written in the case file
  std::string name;
};

struct Branch {
  int id = 0;  // internal index 0..L-1
  int from_bus = 0;
  int to_bus = 0;
  double reactance = 0.0;  // per-unit, > 0
  bool switchable = true;
};

// Binary line-status vector; 1 = connected, 0 = in outage.
struct TopologyVector {
  std::vector<std::uint8_t> statuses;

  TopologyVector() = default;
  explicit TopologyVector(std::vector<std::uint8_t> s) : statuses(std::move(s)) {}

  static TopologyVector all_active(std::size_t n) {
    return TopologyVector(std::vector<std::uint8_t>(n, 1));
  }

  std::size_t size() const { return statuses.size(); }
  bool active(std::size_t l) const { return statuses[l] != 0; }
  std::uint8_t& operator[](std::size_t l) { return statuses[l]; }
  std::uint8_t operator[](std::size_t l) const { return statuses[l]; }
  bool operator==(const TopologyVector&) const = default;

  std::size_t outage_count() const {
    return static_cast<std::size_t>(
        std::count(statuses.begin(), statuses.end(), std::uint8_t{0}));
  }
};

namespace detail {

class UnionFind {
 public:
  explicit UnionFind(int n) : parent_(n), size_(n, 1), components_(n) {
    std::iota(parent_.begin(), parent_.end(), 0);
  }

  int find(int x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (size_[a] < size_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
    --components_;
  }

  int components() const { return components_; }

 private:
  std::vector<int> parent_;
  std::vector<int> size_;
  int components_;
};

inline std::string format_double_exact(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

}  // namespace detail

struct Grid {
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  int reference_bus = 0;  // internal index
  bool reduced = false;   // switchable flags are meaningful only after reduce_grid

  int bus_count() const { return static_cast<int>(buses.size()); }
  int branch_count() const { return static_cast<int>(branches.size()); }

  int switchable_count() const {
    return static_cast<int>(std::count_if(branches.begin(), branches.end(),
                                          [](const Branch& b) { return b.switchable; }));
  }

  std::vector<std::uint8_t> switchable_mask() const {
    std::vector<std::uint8_t> m(branches.size());
    for (std::size_t l = 0; l < branches.size(); ++l) m[l] = branches[l].switchable ? 1 : 0;
    return m;
  }

  // Internal index for an external id; -1 if unknown.
  int internal_bus(int external_id) const {
    for (const Bus& b : buses)
      if (b.external_id == external_id) return b.id;
    return -1;
  }
};

struct BusSpec {
  int id = 0;  // external id
  std::string name;
};

struct BranchSpec {
  int from = 0;  // external ids
  int to = 0;
  double x = 0.0;
};

// Validates invariants, maps external ids to contiguous internal indices
// (ascending external id), and merges parallel branches between the same bus
// pair into one equivalent branch: x_eq = (sum 1/x_i)^-1.
inline Grid make_grid(const std::vector<BusSpec>& buses, const std::vector<BranchSpec>& branches,
                      int reference_external_id) {
  if (buses.empty()) throw ValidationError("grid has no buses");

  std::map<int, int> ext_to_int;
  for (const BusSpec& b : buses) {
    if (!ext_to_int.emplace(b.id, 0).second)
      throw ValidationError("duplicate bus id " + std::to_string(b.id));
  }
  int next = 0;
  for (auto& [ext, internal] : ext_to_int) internal = next++;

  Grid g;
  g.buses.resize(buses.size());
  for (const BusSpec& b : buses) {
    int idx = ext_to_int.at(b.id);
    g.buses[idx] = Bus{idx, b.id, b.name};
  }

  auto ref_it = ext_to_int.find(reference_external_id);
  if (ref_it == ext_to_int.end())
    throw ValidationError("reference bus " + std::to_string(reference_external_id) +
                          " is not a valid bus id");
  g.reference_bus = ref_it->second;

  // Merge parallel branches; keep first-occurrence ordering.
  std::map<std::pair<int, int>, int> pair_to_branch;
  for (const BranchSpec& br : branches) {
    auto from_it = ext_to_int.find(br.from);
    auto to_it = ext_to_int.find(br.to);
    if (from_it == ext_to_int.end())
      throw ValidationError("branch endpoint " + std::to_string(br.from) + " is not a bus");
    if (to_it == ext_to_int.end())
      throw ValidationError("branch endpoint " + std::to_string(br.to) + " is not a bus");
    if (br.from == br.to)
      throw ValidationError("branch connects bus " + std::to_string(br.from) + " to itself");
    if (!(br.x > 0.0))
      throw ValidationError("nonpositive reactance on branch " + std::to_string(br.from) + "-" +
                            std::to_string(br.to));
    int from = from_it->second, to = to_it->second;
    auto key = std::minmax(from, to);
    auto [it, inserted] = pair_to_branch.emplace(key, static_cast<int>(g.branches.size()));
    if (inserted) {
      g.branches.push_back(Branch{static_cast<int>(g.branches.size()), from, to, br.x, true});
    } else {
      Branch& existing = g.branches[it->second];
      existing.reactance = 1.0 / (1.0 / existing.reactance + 1.0 / br.x);
    }
  }

  // Baseline (all branches active) must be connected.
  detail::UnionFind uf(g.bus_count());
  for (const Branch& b : g.branches) uf.unite(b.from_bus, b.to_bus);
  if (uf.components() != 1) throw ValidationError("baseline topology is disconnected");

  return g;
}

// N x L incidence matrix: column l has +1 at from_bus, -1 at to_bus.
inline Eigen::MatrixXd incidence_matrix(const Grid& grid) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(grid.bus_count(), grid.branch_count());
  for (const Branch& b : grid.branches) {
    m(b.from_bus, b.id) = 1.0;
    m(b.to_bus, b.id) = -1.0;
  }
  return m;
}

inline bool is_connected(const Grid& grid, const TopologyVector& s) {
  if (s.size() != static_cast<std::size_t>(grid.branch_count()))
    throw DimensionError("topology vector length " + std::to_string(s.size()) +
                         " does not match branch count " + std::to_string(grid.branch_count()));
  detail::UnionFind uf(grid.bus_count());
  for (const Branch& b : grid.branches)
    if (s.active(static_cast<std::size_t>(b.id))) uf.unite(b.from_bus, b.to_bus);
  return uf.components() == 1;
}

namespace detail {

// Iterative lowlink DFS over the baseline graph.
inline std::vector<std::uint8_t> find_bridges(const Grid& grid) {
  const int n = grid.bus_count();
  std::vector<std::vector<std::pair<int, int>>> adj(n);  // (neighbor, branch id)
  for (const Branch& b : grid.branches) {
    adj[b.from_bus].emplace_back(b.to_bus, b.id);
    adj[b.to_bus].emplace_back(b.from_bus, b.id);
  }

  std::vector<int> num(n, -1), low(n, 0);
  std::vector<std::uint8_t> is_bridge(grid.branches.size(), 0);
  int counter = 0;

  struct Frame {
    int node;
    int parent_edge;
    std::size_t next_child;
  };
  std::vector<Frame> stack;
  for (int root = 0; root < n; ++root) {
    if (num[root] != -1) continue;
    num[root] = low[root] = counter++;
    stack.push_back({root, -1, 0});
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next_child < adj[f.node].size()) {
        auto [v, edge] = adj[f.node][f.next_child++];
        if (edge == f.parent_edge) continue;
        if (num[v] == -1) {
          num[v] = low[v] = counter++;
          stack.push_back({v, edge, 0});
        } else {
          low[f.node] = std::min(low[f.node], num[v]);
        }
      } else {
        stack.pop_back();
        if (!stack.empty()) {
          Frame& parent = stack.back();
          low[parent.node] = std::min(low[parent.node], low[f.node]);
          if (low[f.node] > num[parent.node]) is_bridge[static_cast<std::size_t>(f.parent_edge)] = 1;
        }
      }
    }
  }
  return is_bridge;
}

}  // namespace detail

// Marks every bridge of the baseline graph as non-switchable (it must stay
// connected to keep the network whole); all other branches become switchable.
inline Grid reduce_grid(const Grid& grid) {
  Grid out = grid;
  auto bridge = detail::find_bridges(grid);
  for (Branch& b : out.branches) b.switchable = bridge[static_cast<std::size_t>(b.id)] == 0;
  out.reduced = true;
  return out;
}

// Canonical digest of a grid; datasets and models carry it so that mixing
// artifacts from different grids is caught at load time.
inline Digest grid_fingerprint(const Grid& grid) {
  std::string canon = "gridinfer.grid.v1\n";
  canon += "n=" + std::to_string(grid.bus_count());
  canon += ";ref=" + std::to_string(grid.reference_bus);
  canon += ";reduced=" + std::to_string(grid.reduced ? 1 : 0);
  canon += "\n";
  for (const Branch& b : grid.branches) {
    canon += std::to_string(b.from_bus) + "," + std::to_string(b.to_bus) + "," +
             detail::format_double_exact(b.reactance) + "," + (b.switchable ? "1" : "0") + "\n";
  }
  return sha256(canon);
}

// Buses with the highest baseline degree (ties broken by lower internal id),
// returned sorted ascending. Used as the default PMU placement when only a
// subset of buses is observed.
inline std::vector<int> default_pmu_subset(const Grid& grid, int count) {
  if (count <= 0 || count > grid.bus_count())
    throw ValidationError("observed bus count must be in [1, N]");
  std::vector<int> degree(static_cast<std::size_t>(grid.bus_count()), 0);
  for (const Branch& b : grid.branches) {
    ++degree[static_cast<std::size_t>(b.from_bus)];
    ++degree[static_cast<std::size_t>(b.to_bus)];
  }
  std::vector<int> order(static_cast<std::size_t>(grid.bus_count()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (degree[static_cast<std::size_t>(a)] != degree[static_cast<std::size_t>(b)])
      return degree[static_cast<std::size_t>(a)] > degree[static_cast<std::size_t>(b)];
    return a < b;
  });
  std::vector<int> chosen(order.begin(), order.begin() + count);
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

}  // namespace gridinfer
