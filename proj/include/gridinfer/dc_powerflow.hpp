#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "gridinfer/errors.hpp"
#include "gridinfer/grid.hpp"

namespace gridinfer {

// Real power injections (per-unit) and voltage phase angles (radians),
// indexed by internal bus id.
using InjectionVector = Eigen::VectorXd;
using AngleVector = Eigen::VectorXd;

namespace detail {

inline void check_topology_dims(const Grid& grid, const TopologyVector& s) {
  if (s.size() != static_cast<std::size_t>(grid.branch_count()))
    throw DimensionError("topology vector length " + std::to_string(s.size()) +
                         " does not match branch count " + std::to_string(grid.branch_count()));
}

}  // namespace detail

// Weighted graph Laplacian of the active topology: symmetric, zero row sums,
// positive semidefinite; off-diagonal (m,n) is minus the summed susceptance
// 1/x of active branches between m and n.
inline Eigen::MatrixXd build_laplacian(const Grid& grid, const TopologyVector& s) {
  detail::check_topology_dims(grid, s);
  const int n = grid.bus_count();
  Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(n, n);
  for (const Branch& b : grid.branches) {
    if (!s.active(static_cast<std::size_t>(b.id))) continue;
    const double susceptance = 1.0 / b.reactance;
    lap(b.from_bus, b.from_bus) += susceptance;
    lap(b.to_bus, b.to_bus) += susceptance;
    lap(b.from_bus, b.to_bus) -= susceptance;
    lap(b.to_bus, b.from_bus) -= susceptance;
  }
  return lap;
}

// Per-branch accumulation; equivalent to Laplacian * theta.
inline InjectionVector injections_from_angles(const Grid& grid, const TopologyVector& s,
                                              const AngleVector& theta) {
  detail::check_topology_dims(grid, s);
  if (theta.size() != grid.bus_count())
    throw DimensionError("angle vector length does not match bus count");
  InjectionVector p = InjectionVector::Zero(grid.bus_count());
  for (const Branch& b : grid.branches) {
    if (!s.active(static_cast<std::size_t>(b.id))) continue;
    const double flow = (theta(b.from_bus) - theta(b.to_bus)) / b.reactance;
    p(b.from_bus) += flow;
    p(b.to_bus) -= flow;
  }
  return p;
}

// Solves P = Lap(s) * theta for theta with the reference-bus angle anchored
// at zero: the reference row/column is deleted and the remaining symmetric
// positive-definite system is solved by a direct factorization.
inline AngleVector solve_angles(const Grid& grid, const TopologyVector& s,
                                const InjectionVector& p) {
  detail::check_topology_dims(grid, s);
  const int n = grid.bus_count();
  if (p.size() != n) throw DimensionError("injection vector length does not match bus count");

  const double p_inf = p.size() == 0 ? 0.0 : p.cwiseAbs().maxCoeff();
  const double sum_tol = 1e-6 * std::max(1.0, p_inf);
  if (std::abs(p.sum()) > sum_tol)
    throw ValidationError("injections do not sum to zero (|sum| = " + std::to_string(p.sum()) +
                          "); normalize the input first");

  if (!is_connected(grid, s))
    throw DisconnectedError("cannot solve angles: active topology is disconnected");

  const int ref = grid.reference_bus;
  std::vector<int> keep;
  keep.reserve(static_cast<std::size_t>(n) - 1);
  for (int i = 0; i < n; ++i)
    if (i != ref) keep.push_back(i);

  Eigen::MatrixXd lap = build_laplacian(grid, s);
  Eigen::MatrixXd reduced(n - 1, n - 1);
  Eigen::VectorXd rhs(n - 1);
  for (int i = 0; i < n - 1; ++i) {
    rhs(i) = p(keep[static_cast<std::size_t>(i)]);
    for (int j = 0; j < n - 1; ++j)
      reduced(i, j) = lap(keep[static_cast<std::size_t>(i)], keep[static_cast<std::size_t>(j)]);
  }

  Eigen::LDLT<Eigen::MatrixXd> ldlt(reduced);
  if (ldlt.info() != Eigen::Success)
    throw DisconnectedError("reduced DC system factorization failed (singular system)");
  Eigen::VectorXd reduced_theta = ldlt.solve(rhs);

  AngleVector theta = AngleVector::Zero(n);
  for (int i = 0; i < n - 1; ++i) theta(keep[static_cast<std::size_t>(i)]) = reduced_theta(i);

  const double residual = (p - lap * theta).cwiseAbs().maxCoeff();
  if (residual > 1e-9 * std::max(p_inf, 1e-6))
    throw DisconnectedError("DC solve residual " + std::to_string(residual) +
                            " exceeds tolerance (singular or ill-conditioned system)");
  return theta;
}

}  // namespace gridinfer
