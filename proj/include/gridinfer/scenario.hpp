#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <utility>
#include <vector>

#include "gridinfer/dataset.hpp"
#include "gridinfer/dc_powerflow.hpp"
#include "gridinfer/errors.hpp"
#include "gridinfer/grid.hpp"
#include "gridinfer/rng.hpp"

namespace gridinfer {

struct TopologyDraw {
  TopologyVector topology;
  int rejections = 0;
};

// Each switchable line goes out independently with probability p_out;
// non-switchable lines stay active. The whole vector is resampled until the
// active topology is connected.
inline TopologyDraw sample_topology(Rng& rng, const Grid& grid, double p_out,
                                    int max_rejections = 10000) {
  if (!grid.reduced)
    throw ValidationError("sample_topology requires a reduced grid (run reduce_grid first)");
  TopologyDraw draw;
  draw.topology = TopologyVector::all_active(static_cast<std::size_t>(grid.branch_count()));
  for (int attempt = 0; attempt <= max_rejections; ++attempt) {
    for (const Branch& b : grid.branches) {
      draw.topology[static_cast<std::size_t>(b.id)] =
          (b.switchable && rng.bernoulli(p_out)) ? 0 : 1;
    }
    if (is_connected(grid, draw.topology)) {
      draw.rejections = attempt;
      return draw;
    }
  }
  throw RejectionBudgetError("exceeded " + std::to_string(max_rejections) +
                             " rejections while sampling a connected topology; "
                             "p_out is too high for this grid");
}

// Baseline-topology phase angles IID uniform on [0, theta_max); injections
// follow from the DC model on the all-active topology.
inline std::pair<AngleVector, InjectionVector> sample_injections(Rng& rng, const Grid& grid,
                                                                 double theta_max) {
  AngleVector theta(grid.bus_count());
  for (int i = 0; i < grid.bus_count(); ++i) theta(i) = rng.uniform(0.0, theta_max);
  auto all_active = TopologyVector::all_active(static_cast<std::size_t>(grid.branch_count()));
  InjectionVector p = injections_from_angles(grid, all_active, theta);
  return {std::move(theta), std::move(p)};
}

// Draw order per sample: topology (with rejections), baseline angles, then
// measurement noise. config must be normalized for this grid.
inline Sample make_sample(Rng& rng, const Grid& grid, const GenConfig& config) {
  auto [topology, rejections] = sample_topology(rng, grid, config.p_out,
                                                config.max_rejections_per_sample);
  auto [theta_base, p] = sample_injections(rng, grid, config.theta_max);
  (void)theta_base;
  AngleVector theta_post = solve_angles(grid, topology, p);

  const auto n_obs = config.observed_buses.size();
  const double sigma = config.noise_std_rad();
  Eigen::VectorXd features(config.feature_len(grid));
  for (std::size_t i = 0; i < n_obs; ++i) {
    double v = theta_post(config.observed_buses[i]);
    if (sigma > 0.0) v += rng.normal(0.0, sigma);
    features(static_cast<Eigen::Index>(i)) = v;
  }
  if (config.injection_measured)
    features.tail(grid.bus_count()) = p;  // injections are measured exactly

  return Sample{std::move(topology), std::move(features)};
}

struct GenReport {
  std::size_t total_rejections = 0;
  double accepted_outage_mean = 0.0;
  double distinct_fraction = 1.0;
};

// Sample i is drawn from an independent substream derived from (seed, i), so
// the result is identical for any worker count.
inline Dataset generate_dataset(const Grid& grid, const GenConfig& raw_config, std::size_t count,
                                int workers = 1, GenReport* report = nullptr) {
  if (!grid.reduced)
    throw ValidationError("generate_dataset requires a reduced grid (run reduce_grid first)");
  const GenConfig config = raw_config.normalized(grid);

  Dataset d;
  d.grid_fingerprint = grid_fingerprint(grid);
  d.config = config;
  d.switchable = grid.switchable_mask();
  const int K = config.feature_len(grid);
  const int L = grid.branch_count();
  d.features.resize(K, static_cast<Eigen::Index>(count));
  d.labels.resize(count * static_cast<std::size_t>(L));

  std::atomic<std::size_t> rejections{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;

  auto fill_range = [&](std::size_t begin, std::size_t end) {
    try {
      std::size_t local_rejections = 0;
      for (std::size_t i = begin; i < end; ++i) {
        Rng rng(derive_stream(config.seed, i));
        auto [topology, rej] = sample_topology(rng, grid, config.p_out,
                                               config.max_rejections_per_sample);
        local_rejections += static_cast<std::size_t>(rej);
        auto [theta_base, p] = sample_injections(rng, grid, config.theta_max);
        (void)theta_base;
        AngleVector theta_post = solve_angles(grid, topology, p);
        const double sigma = config.noise_std_rad();
        for (std::size_t k = 0; k < config.observed_buses.size(); ++k) {
          double v = theta_post(config.observed_buses[k]);
          if (sigma > 0.0) v += rng.normal(0.0, sigma);
          d.features(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = v;
        }
        if (config.injection_measured)
          d.features.col(static_cast<Eigen::Index>(i)).tail(grid.bus_count()) = p;
        std::copy(topology.statuses.begin(), topology.statuses.end(),
                  d.labels.begin() + static_cast<std::ptrdiff_t>(i * static_cast<std::size_t>(L)));
      }
      rejections += local_rejections;
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!first_error) first_error = std::current_exception();
    }
  };

  workers = std::max(1, workers);
  if (workers == 1 || count < 2) {
    fill_range(0, count);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (count + static_cast<std::size_t>(workers) - 1) /
                              static_cast<std::size_t>(workers);
    for (int w = 0; w < workers; ++w) {
      const std::size_t begin = static_cast<std::size_t>(w) * chunk;
      const std::size_t end = std::min(count, begin + chunk);
      if (begin >= end) break;
      pool.emplace_back(fill_range, begin, end);
    }
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  if (report) {
    report->total_rejections = rejections.load();
    report->accepted_outage_mean = mean_outage_count(d);
    report->distinct_fraction = distinct_topology_fraction(d);
  }
  return d;
}

struct RegenerationReport {
  std::size_t checked = 0;
  bool replay_exact = true;         // substream replay reproduces stored bytes
  double max_angle_residual = 0.0;  // |stored angle - re-solved angle|, radians
};

// Spot check: replaying sample i's substream must reproduce the stored bytes
// exactly, and re-solving the DC system from the stored (s, P) must match the
// stored angle features up to the measurement noise (up to solver tolerance
// when noise is zero). Requires injection_measured.
inline RegenerationReport regeneration_check(const Grid& grid, const Dataset& d,
                                             std::size_t stride = 100) {
  if (!d.config.injection_measured)
    throw ValidationError("regeneration check needs exact injection measurements");
  if (d.grid_fingerprint != grid_fingerprint(grid))
    throw ValidationError("dataset fingerprint does not match this grid");
  RegenerationReport r;
  const int n = grid.bus_count();
  for (std::size_t i = 0; i < d.count(); i += std::max<std::size_t>(1, stride)) {
    Rng rng(derive_stream(d.config.seed, i));
    Sample regen = make_sample(rng, grid, d.config);
    if (regen.topology != d.topology(i) ||
        std::memcmp(regen.features.data(), d.features.col(static_cast<Eigen::Index>(i)).data(),
                    sizeof(double) * static_cast<std::size_t>(d.feature_len())) != 0)
      r.replay_exact = false;

    InjectionVector p = d.features.col(static_cast<Eigen::Index>(i)).tail(n);
    AngleVector theta = solve_angles(grid, d.topology(i), p);
    for (std::size_t k = 0; k < d.config.observed_buses.size(); ++k) {
      const double stored = d.features(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i));
      r.max_angle_residual =
          std::max(r.max_angle_residual, std::abs(stored - theta(d.config.observed_buses[k])));
    }
    ++r.checked;
  }
  return r;
}

}  // namespace gridinfer
