#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridinfer/dataset.hpp"
#include "gridinfer/errors.hpp"
#include "gridinfer/inference.hpp"
#include "gridinfer/mlp.hpp"
#include "gridinfer/rng.hpp"

namespace gridinfer {

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  int batch_size = 128;
  int epochs = 0;
  std::uint64_t shuffle_seed = 0;
  int log_every = 1;  // epochs between metric snapshots

  void validate() const {
    if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("momentum must be in [0, 1)");
    if (batch_size <= 0) throw ValidationError("batch_size must be positive");
    if (epochs < 0) throw ValidationError("epochs must be nonnegative");
    if (log_every <= 0) throw ValidationError("log_every must be positive");
  }

  nlohmann::json to_json() const {
    return nlohmann::json{{"learning_rate", learning_rate}, {"momentum", momentum},
                          {"batch_size", batch_size},       {"epochs", epochs},
                          {"shuffle_seed", shuffle_seed},   {"log_every", log_every}};
  }
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;  // mean per-sample loss over the epoch's batches
  double val_loss = 0.0;
  double test_accuracy = 0.0;
  double avg_misidentified = 0.0;
};

// v' = momentum * v - learning_rate * g, where g was evaluated at the
// lookahead point params + momentum * v; then params' = params + v'.
inline void sgd_nesterov_step(Eigen::Ref<Eigen::VectorXd> params,
                              Eigen::Ref<Eigen::VectorXd> velocity,
                              const Eigen::Ref<const Eigen::VectorXd>& gradient_at_lookahead,
                              double learning_rate, double momentum) {
  if (params.size() != velocity.size() || params.size() != gradient_at_lookahead.size())
    throw DimensionError("parameter/velocity/gradient shape mismatch");
  velocity = momentum * velocity - learning_rate * gradient_at_lookahead;
  params += velocity;
}

namespace detail {

template <typename Fn>
void for_each_param_block(MlpModel& m, Gradients& v, const Gradients& g, Fn&& fn) {
  fn(Eigen::Map<Eigen::VectorXd>(m.w_hidden.data(), m.w_hidden.size()),
     Eigen::Map<Eigen::VectorXd>(v.w_hidden.data(), v.w_hidden.size()),
     Eigen::Map<const Eigen::VectorXd>(g.w_hidden.data(), g.w_hidden.size()));
  fn(Eigen::Map<Eigen::VectorXd>(m.b_hidden.data(), m.b_hidden.size()),
     Eigen::Map<Eigen::VectorXd>(v.b_hidden.data(), v.b_hidden.size()),
     Eigen::Map<const Eigen::VectorXd>(g.b_hidden.data(), g.b_hidden.size()));
  fn(Eigen::Map<Eigen::VectorXd>(m.w_out.data(), m.w_out.size()),
     Eigen::Map<Eigen::VectorXd>(v.w_out.data(), v.w_out.size()),
     Eigen::Map<const Eigen::VectorXd>(g.w_out.data(), g.w_out.size()));
  fn(Eigen::Map<Eigen::VectorXd>(m.b_out.data(), m.b_out.size()),
     Eigen::Map<Eigen::VectorXd>(v.b_out.data(), v.b_out.size()),
     Eigen::Map<const Eigen::VectorXd>(g.b_out.data(), g.b_out.size()));
}

inline void check_compatible(const MlpModel& model, const Dataset& d, const char* which) {
  if (d.feature_len() != model.input_dim)
    throw DimensionError(std::string(which) + " feature length does not match model input dim");
  if (d.label_len() != model.output_dim)
    throw DimensionError(std::string(which) + " label length does not match model output dim");
}

// Deterministic Fisher-Yates.
inline void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
    std::swap(idx[i - 1], idx[j]);
  }
}

}  // namespace detail

// MAP decisions over an entire dataset, scored on switchable lines.
inline Metrics evaluate(const MlpModel& model, const Dataset& d) {
  detail::check_compatible(model, d, "dataset");
  const int L = model.output_dim;
  std::vector<std::uint8_t> predictions(d.count() * static_cast<std::size_t>(L));
  constexpr Eigen::Index chunk = 4096;
  for (Eigen::Index start = 0; start < d.features.cols(); start += chunk) {
    const Eigen::Index n = std::min(chunk, d.features.cols() - start);
    Eigen::MatrixXd xn = normalize_features(model, d.features.middleCols(start, n));
    BatchForward f = forward_batch_normalized(model, xn);
    for (Eigen::Index c = 0; c < n; ++c) {
      std::uint8_t* row = predictions.data() +
                          static_cast<std::size_t>(start + c) * static_cast<std::size_t>(L);
      for (int l = 0; l < L; ++l) row[l] = f.q(l, c) < 0.5 ? 0 : 1;
    }
  }
  return compute_metrics(predictions.data(), d.labels.data(), d.count(), L, d.switchable);
}

// Mean per-sample loss over a dataset at the current parameters.
inline double dataset_loss(const MlpModel& model, const Dataset& d) {
  detail::check_compatible(model, d, "dataset");
  const int L = model.output_dim;
  double total = 0.0;
  constexpr Eigen::Index chunk = 4096;
  for (Eigen::Index start = 0; start < d.features.cols(); start += chunk) {
    const Eigen::Index n = std::min(chunk, d.features.cols() - start);
    Eigen::MatrixXd xn = normalize_features(model, d.features.middleCols(start, n));
    BatchForward f = forward_batch_normalized(model, xn);
    for (Eigen::Index c = 0; c < n; ++c) {
      const std::uint8_t* row = d.label_row(static_cast<std::size_t>(start + c));
      for (int l = 0; l < L; ++l) {
        const double ql = f.q(l, c);
        total -= row[l] ? std::log(std::max(ql, 1e-12)) : std::log(std::max(1.0 - ql, 1e-12));
      }
    }
  }
  return d.count() == 0 ? 0.0 : total / static_cast<double>(d.count());
}

struct TrainResult {
  MlpModel model;
  std::vector<EpochStats> history;
};

// Mini-batch SGD with Nesterov momentum. Deterministic given the config and
// inputs: the shuffle is seeded, batches are visited in order, and gradient
// reduction order is fixed.
inline TrainResult train(MlpModel model, const Dataset& train_set, const Dataset& val_set,
                         const Dataset& test_set, const TrainConfig& config) {
  config.validate();
  detail::check_compatible(model, train_set, "train split");
  detail::check_compatible(model, val_set, "validation split");
  detail::check_compatible(model, test_set, "test split");
  if (train_set.grid_fingerprint != val_set.grid_fingerprint ||
      train_set.grid_fingerprint != test_set.grid_fingerprint)
    throw ValidationError("splits carry different grid fingerprints");
  if (model.grid_fingerprint != Digest{} &&
      model.grid_fingerprint != train_set.grid_fingerprint)
    throw ValidationError("model grid fingerprint does not match the dataset");
  if (train_set.count() == 0 && config.epochs > 0)
    throw ValidationError("cannot train on an empty training split");

  TrainResult result{std::move(model), {}};
  MlpModel& m = result.model;
  m.grid_fingerprint = train_set.grid_fingerprint;

  // Normalize the training matrix once; evaluation paths normalize on the fly.
  const Eigen::MatrixXd xn_all = normalize_features(m, train_set.features);

  Gradients velocity = Gradients::zeros_like(m);
  Rng shuffle_rng(derive_stream(config.shuffle_seed, 2));
  std::vector<std::size_t> order(train_set.count());
  std::iota(order.begin(), order.end(), std::size_t{0});

  const int L = m.output_dim;
  const Eigen::Index I = static_cast<Eigen::Index>(train_set.count());
  const Eigen::Index B = config.batch_size;
  Eigen::MatrixXd xn_batch(m.input_dim, B);
  std::vector<std::uint8_t> label_batch(static_cast<std::size_t>(B) *
                                        static_cast<std::size_t>(L));
  MlpModel lookahead = m;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    detail::shuffle_indices(order, shuffle_rng);
    double epoch_loss = 0.0;
    std::size_t seen = 0;
    int batch_index = 0;

    for (Eigen::Index start = 0; start < I; start += B, ++batch_index) {
      const Eigen::Index n = std::min(B, I - start);
      for (Eigen::Index c = 0; c < n; ++c) {
        const std::size_t src = order[static_cast<std::size_t>(start + c)];
        xn_batch.col(c) = xn_all.col(static_cast<Eigen::Index>(src));
        std::copy_n(train_set.label_row(src), L,
                    label_batch.begin() + static_cast<std::ptrdiff_t>(c * L));
      }

      // Gradient at the lookahead point params + momentum * velocity.
      lookahead.w_hidden = m.w_hidden + config.momentum * velocity.w_hidden;
      lookahead.b_hidden = m.b_hidden + config.momentum * velocity.b_hidden;
      lookahead.w_out = m.w_out + config.momentum * velocity.w_out;
      lookahead.b_out = m.b_out + config.momentum * velocity.b_out;
      BatchForward fwd = forward_batch_normalized(lookahead, xn_batch.leftCols(n));
      auto [grad, batch_loss] =
          backward_batch_normalized(lookahead, xn_batch.leftCols(n), fwd, label_batch.data());

      if (!std::isfinite(batch_loss))
        throw TrainingDivergedError(
            "non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
            std::to_string(batch_index) +
            " (|w_hidden| = " + std::to_string(m.w_hidden.norm()) +
            ", |w_out| = " + std::to_string(m.w_out.norm()) + ")");

      detail::for_each_param_block(
          m, velocity, grad, [&](auto params, auto vel, const auto& g) {
            sgd_nesterov_step(params, vel, g, config.learning_rate, config.momentum);
          });
      ++m.revision;

      epoch_loss += batch_loss * static_cast<double>(n);
      seen += static_cast<std::size_t>(n);
    }

    if (epoch % config.log_every == 0 || epoch == config.epochs) {
      EpochStats stats;
      stats.epoch = epoch;
      stats.train_loss = epoch_loss / static_cast<double>(seen);
      stats.val_loss = dataset_loss(m, val_set);
      Metrics test_metrics = evaluate(m, test_set);
      stats.test_accuracy = test_metrics.per_line_accuracy;
      stats.avg_misidentified = test_metrics.avg_misidentified;
      result.history.push_back(stats);
    }
  }
  return result;
}

inline void write_curves_csv(const std::vector<EpochStats>& history, std::ostream& out) {
  out << "epoch,train_loss,val_loss,test_accuracy,avg_misidentified\n";
  char buf[160];
  for (const EpochStats& s : history) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g\n", s.epoch, s.train_loss,
                  s.val_loss, s.test_accuracy, s.avg_misidentified);
    out << buf;
  }
}

inline void write_curves_csv(const std::vector<EpochStats>& history, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_curves_csv(history, out);
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace gridinfer
