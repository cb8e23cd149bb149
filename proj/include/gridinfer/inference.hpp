#pragma once

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridinfer/dataset.hpp"
#include "gridinfer/dc_powerflow.hpp"
#include "gridinfer/errors.hpp"
#include "gridinfer/grid.hpp"
#include "gridinfer/mlp.hpp"

namespace gridinfer {

using PosteriorMarginals = Eigen::VectorXd;  // P(s_l = 1 | y) per line

// Per-line MAP rule: declare an outage only when the outage probability
// strictly exceeds one half; a tie counts as connected.
inline TopologyVector map_decide(const Eigen::Ref<const Eigen::VectorXd>& q) {
  TopologyVector s;
  s.statuses.resize(static_cast<std::size_t>(q.size()));
  for (Eigen::Index l = 0; l < q.size(); ++l)
    s.statuses[static_cast<std::size_t>(l)] = q(l) < 0.5 ? 0 : 1;
  return s;
}

struct PerLineStats {
  int line_id = 0;
  std::int64_t pairs = 0;         // samples scored for this line
  std::int64_t wrong = 0;         // misidentified statuses
  std::int64_t outages = 0;       // samples where the line was actually out
  std::int64_t missed = 0;        // outages declared connected
  std::int64_t false_alarms = 0;  // connected declared out

  double accuracy() const {
    return pairs == 0 ? 1.0 : 1.0 - static_cast<double>(wrong) / static_cast<double>(pairs);
  }
  double missed_rate() const {
    return outages == 0 ? 0.0 : static_cast<double>(missed) / static_cast<double>(outages);
  }
  double false_alarm_rate() const {
    const std::int64_t connected = pairs - outages;
    return connected == 0 ? 0.0
                          : static_cast<double>(false_alarms) / static_cast<double>(connected);
  }
};

// All rates are over switchable lines only; non-switchable lines are always
// declared (and are) connected, so including them would only inflate accuracy.
struct Metrics {
  double per_line_accuracy = 1.0;
  double avg_misidentified = 0.0;
  double missed_detection_rate = 0.0;
  double false_alarm_rate = 0.0;
  std::size_t samples = 0;
  int switchable_lines = 0;
  std::vector<PerLineStats> per_line;

  nlohmann::json to_json() const {
    return nlohmann::json{{"per_line_accuracy", per_line_accuracy},
                          {"avg_misidentified", avg_misidentified},
                          {"missed_detection_rate", missed_detection_rate},
                          {"false_alarm_rate", false_alarm_rate},
                          {"samples", samples},
                          {"switchable_lines", switchable_lines}};
  }
};

inline void write_per_line_csv(const Metrics& m, std::ostream& out) {
  out << "line_id,accuracy,missed,false_alarm\n";
  for (const PerLineStats& p : m.per_line)
    out << p.line_id << "," << p.accuracy() << "," << p.missed_rate() << ","
        << p.false_alarm_rate() << "\n";
}

// predictions/labels are sample-major flat arrays (count x L).
inline Metrics compute_metrics(const std::uint8_t* predictions, const std::uint8_t* labels,
                               std::size_t count, int label_len,
                               const std::vector<std::uint8_t>& switchable_mask) {
  if (switchable_mask.size() != static_cast<std::size_t>(label_len))
    throw DimensionError("switchable mask length does not match label length");

  Metrics m;
  m.samples = count;
  for (int l = 0; l < label_len; ++l)
    if (switchable_mask[static_cast<std::size_t>(l)]) {
      PerLineStats p;
      p.line_id = l;
      m.per_line.push_back(p);
    }
  m.switchable_lines = static_cast<int>(m.per_line.size());

  std::vector<int> line_slot(static_cast<std::size_t>(label_len), -1);
  for (std::size_t k = 0; k < m.per_line.size(); ++k)
    line_slot[static_cast<std::size_t>(m.per_line[k].line_id)] = static_cast<int>(k);

  for (std::size_t i = 0; i < count; ++i) {
    const std::uint8_t* pred = predictions + i * static_cast<std::size_t>(label_len);
    const std::uint8_t* truth = labels + i * static_cast<std::size_t>(label_len);
    for (int l = 0; l < label_len; ++l) {
      const int slot = line_slot[static_cast<std::size_t>(l)];
      if (slot < 0) continue;
      PerLineStats& p = m.per_line[static_cast<std::size_t>(slot)];
      ++p.pairs;
      const bool actual_out = truth[l] == 0;
      const bool declared_out = pred[l] == 0;
      if (actual_out) ++p.outages;
      if (actual_out != declared_out) {
        ++p.wrong;
        if (actual_out) ++p.missed;
        else ++p.false_alarms;
      }
    }
  }

  std::int64_t pairs = 0, wrong = 0, outages = 0, missed = 0, false_alarms = 0;
  for (const PerLineStats& p : m.per_line) {
    pairs += p.pairs;
    wrong += p.wrong;
    outages += p.outages;
    missed += p.missed;
    false_alarms += p.false_alarms;
  }
  if (pairs > 0) {
    m.per_line_accuracy = 1.0 - static_cast<double>(wrong) / static_cast<double>(pairs);
    m.avg_misidentified = static_cast<double>(wrong) / static_cast<double>(count);
  }
  if (outages > 0)
    m.missed_detection_rate = static_cast<double>(missed) / static_cast<double>(outages);
  const std::int64_t connected = pairs - outages;
  if (connected > 0)
    m.false_alarm_rate = static_cast<double>(false_alarms) / static_cast<double>(connected);
  return m;
}

struct InferResult {
  PosteriorMarginals marginals;
  TopologyVector decisions;
  double elapsed_us = 0.0;
};

// One forward pass plus the MAP rule; timed.
inline InferResult infer(const MlpModel& model, const Eigen::Ref<const Eigen::VectorXd>& y) {
  const auto start = std::chrono::steady_clock::now();
  auto [q, cache] = forward(model, y);
  TopologyVector decisions = map_decide(q);
  const auto stop = std::chrono::steady_clock::now();
  InferResult r;
  r.marginals = std::move(q);
  r.decisions = std::move(decisions);
  r.elapsed_us = std::chrono::duration<double, std::micro>(stop - start).count();
  return r;
}

inline constexpr int kMaxEnumerableSwitchable = 20;

// Exhaustive posterior marginals over all connected topologies, conditioned
// on exactly known injections. Feasible only for small switchable counts;
// weights are accumulated in the log domain. noise_std is in radians.
inline PosteriorMarginals exact_marginals(const Grid& grid, const InjectionVector& p,
                                          const std::vector<int>& observed_buses,
                                          const Eigen::Ref<const Eigen::VectorXd>& observed_angles,
                                          double noise_std, double p_out) {
  if (!grid.reduced) throw ValidationError("exact_marginals requires a reduced grid");
  if (!(noise_std > 0.0)) throw ValidationError("noise_std must be positive");
  if (!(p_out >= 0.0 && p_out < 1.0)) throw ValidationError("p_out must be in [0, 1)");
  if (observed_angles.size() != static_cast<Eigen::Index>(observed_buses.size()))
    throw DimensionError("observed angle count does not match observed bus count");

  std::vector<int> switchable;
  for (const Branch& b : grid.branches)
    if (b.switchable) switchable.push_back(b.id);
  const int n_sw = static_cast<int>(switchable.size());
  if (n_sw > kMaxEnumerableSwitchable)
    throw ValidationError("switchable line count " + std::to_string(n_sw) +
                          " exceeds the enumeration cap of " +
                          std::to_string(kMaxEnumerableSwitchable));

  const double neg_inf = -std::numeric_limits<double>::infinity();
  const double log_out = p_out > 0.0 ? std::log(p_out) : neg_inf;
  const double log_in = std::log1p(-p_out);
  const double inv_two_var = 1.0 / (2.0 * noise_std * noise_std);

  const std::uint64_t total_masks = 1ull << n_sw;
  std::vector<double> log_weights;
  std::vector<std::uint64_t> masks;
  log_weights.reserve(total_masks);
  masks.reserve(total_masks);

  TopologyVector s = TopologyVector::all_active(static_cast<std::size_t>(grid.branch_count()));
  for (std::uint64_t mask = 0; mask < total_masks; ++mask) {
    double log_prior = 0.0;
    for (int k = 0; k < n_sw; ++k) {
      const bool out = (mask >> k) & 1ull;
      s[static_cast<std::size_t>(switchable[static_cast<std::size_t>(k)])] = out ? 0 : 1;
      log_prior += out ? log_out : log_in;
    }
    if (log_prior == neg_inf) continue;
    if (!is_connected(grid, s)) continue;
    const AngleVector theta = solve_angles(grid, s, p);
    double log_lik = 0.0;
    for (std::size_t i = 0; i < observed_buses.size(); ++i) {
      const double diff = observed_angles(static_cast<Eigen::Index>(i)) - theta(observed_buses[i]);
      log_lik -= diff * diff * inv_two_var;
    }
    log_weights.push_back(log_prior + log_lik);
    masks.push_back(mask);
  }

  if (log_weights.empty())
    throw ValidationError("no connected topology has nonzero prior weight");
  double max_log = neg_inf;
  for (double lw : log_weights) max_log = std::max(max_log, lw);
  if (max_log == neg_inf)
    throw ValidationError("all topology weights vanished; posterior is degenerate");

  double total = 0.0;
  std::vector<double> per_line(static_cast<std::size_t>(n_sw), 0.0);
  for (std::size_t t = 0; t < log_weights.size(); ++t) {
    const double w = std::exp(log_weights[t] - max_log);
    total += w;
    for (int k = 0; k < n_sw; ++k)
      if (!((masks[t] >> k) & 1ull)) per_line[static_cast<std::size_t>(k)] += w;  // s_l = 1
  }

  PosteriorMarginals marginals = PosteriorMarginals::Ones(grid.branch_count());
  for (int k = 0; k < n_sw; ++k)
    marginals(switchable[static_cast<std::size_t>(k)]) =
        per_line[static_cast<std::size_t>(k)] / total;
  return marginals;
}

// Per-line Bayes benchmark: exact MAP decisions over a dataset generated with
// exactly measured injections.
inline Metrics exact_map_accuracy(const Grid& grid, const Dataset& d, double noise_std,
                                  double p_out) {
  if (!d.config.injection_measured)
    throw ValidationError("exact MAP needs datasets with exactly measured injections");
  if (d.grid_fingerprint != grid_fingerprint(grid))
    throw ValidationError("dataset fingerprint does not match this grid");

  const int L = d.label_len();
  const auto n_obs = static_cast<Eigen::Index>(d.config.observed_buses.size());
  std::vector<std::uint8_t> predictions(d.count() * static_cast<std::size_t>(L));
  for (std::size_t i = 0; i < d.count(); ++i) {
    const Eigen::VectorXd y = d.features.col(static_cast<Eigen::Index>(i));
    const InjectionVector p = y.tail(grid.bus_count());
    const Eigen::VectorXd angles = y.head(n_obs);
    PosteriorMarginals marg =
        exact_marginals(grid, p, d.config.observed_buses, angles, noise_std, p_out);
    TopologyVector s_hat = map_decide(marg);
    std::copy(s_hat.statuses.begin(), s_hat.statuses.end(),
              predictions.begin() + static_cast<std::ptrdiff_t>(i * static_cast<std::size_t>(L)));
  }
  return compute_metrics(predictions.data(), d.labels.data(), d.count(), L, d.switchable);
}

}  // namespace gridinfer
