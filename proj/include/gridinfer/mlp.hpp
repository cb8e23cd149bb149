#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>

#include <json.hpp>

#include "gridinfer/binary_io.hpp"
#include "gridinfer/errors.hpp"
#include "gridinfer/grid.hpp"
#include "gridinfer/hash.hpp"
#include "gridinfer/rng.hpp"

namespace gridinfer {

inline double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// One hidden ReLU layer, L logistic outputs sharing the hidden features.
// Output l reads off the predicted probability that line l is connected.
// All weights are doubles; the input normalization statistics live with the
// model so inference reproduces training-time preprocessing.
struct MlpModel {
  int input_dim = 0;   // K
  int hidden_dim = 0;  // H
  int output_dim = 0;  // L
  Eigen::MatrixXd w_hidden;  // H x K
  Eigen::VectorXd b_hidden;  // H
  Eigen::MatrixXd w_out;     // L x H
  Eigen::VectorXd b_out;     // L
  Eigen::VectorXd feature_mean;  // K
  Eigen::VectorXd feature_std;   // K, entries >= 1e-8
  std::uint64_t seed = 0;
  Digest grid_fingerprint{};  // all-zero when not tied to a grid

  // Bumped on every parameter mutation; lets backward() reject caches taken
  // from an older parameter state.
  std::uint64_t revision = 0;

  static MlpModel zeros(int input, int hidden, int output) {
    MlpModel m;
    m.input_dim = input;
    m.hidden_dim = hidden;
    m.output_dim = output;
    m.w_hidden = Eigen::MatrixXd::Zero(hidden, input);
    m.b_hidden = Eigen::VectorXd::Zero(hidden);
    m.w_out = Eigen::MatrixXd::Zero(output, hidden);
    m.b_out = Eigen::VectorXd::Zero(output);
    m.feature_mean = Eigen::VectorXd::Zero(input);
    m.feature_std = Eigen::VectorXd::Ones(input);
    return m;
  }

  std::size_t parameter_count() const {
    return static_cast<std::size_t>(w_hidden.size() + b_hidden.size() + w_out.size() +
                                    b_out.size());
  }
};

// Hidden weights scaled for ReLU fan-in (std sqrt(2/K)), output weights
// std sqrt(1/H), biases zero. Normalization stats start as the identity.
inline MlpModel init_model(int input_dim, int hidden_dim, int output_dim, std::uint64_t seed) {
  if (input_dim <= 0 || hidden_dim <= 0 || output_dim <= 0)
    throw ValidationError("model dimensions must be positive");
  MlpModel m = MlpModel::zeros(input_dim, hidden_dim, output_dim);
  m.seed = seed;
  Rng rng(derive_stream(seed, 1));
  const double hidden_std = std::sqrt(2.0 / input_dim);
  for (int i = 0; i < hidden_dim; ++i)
    for (int j = 0; j < input_dim; ++j) m.w_hidden(i, j) = rng.normal(0.0, hidden_std);
  const double out_std = std::sqrt(1.0 / hidden_dim);
  for (int i = 0; i < output_dim; ++i)
    for (int j = 0; j < hidden_dim; ++j) m.w_out(i, j) = rng.normal(0.0, out_std);
  ++m.revision;
  return m;
}

// Per-dimension mean/std over the training split; std floored at 1e-8 so a
// constant feature normalizes to zero instead of dividing by zero.
inline void fit_normalization(MlpModel& model, const Eigen::Ref<const Eigen::MatrixXd>& features) {
  if (features.cols() == 0) throw ValidationError("cannot fit normalization on empty features");
  if (features.rows() != model.input_dim)
    throw DimensionError("feature dimension does not match model input");
  model.feature_mean = features.rowwise().mean();
  Eigen::VectorXd var = (features.colwise() - model.feature_mean)
                            .array()
                            .square()
                            .rowwise()
                            .mean();
  model.feature_std = var.array().sqrt().max(1e-8);
  ++model.revision;
}

struct ForwardCache {
  Eigen::VectorXd normalized_input;  // K
  Eigen::VectorXd hidden_pre;        // H
  Eigen::VectorXd hidden_act;        // H
  Eigen::VectorXd q;                 // L
  std::uint64_t revision = 0;
};

inline std::pair<Eigen::VectorXd, ForwardCache> forward(const MlpModel& model,
                                                        const Eigen::Ref<const Eigen::VectorXd>& y) {
  if (y.size() != model.input_dim)
    throw DimensionError("input length " + std::to_string(y.size()) + " != model input dim " +
                         std::to_string(model.input_dim));
  ForwardCache cache;
  cache.revision = model.revision;
  cache.normalized_input = (y - model.feature_mean).cwiseQuotient(model.feature_std);
  cache.hidden_pre = model.w_hidden * cache.normalized_input + model.b_hidden;
  cache.hidden_act = cache.hidden_pre.cwiseMax(0.0);
  Eigen::VectorXd z = model.w_out * cache.hidden_act + model.b_out;
  cache.q.resize(model.output_dim);
  for (int l = 0; l < model.output_dim; ++l) cache.q(l) = logistic(z(l));
  return {cache.q, cache};
}

// Summed binary cross-entropy over lines; log arguments clamped at 1e-12.
inline double loss(const Eigen::Ref<const Eigen::VectorXd>& q, const TopologyVector& s) {
  if (static_cast<std::size_t>(q.size()) != s.size())
    throw DimensionError("probability/label length mismatch");
  double total = 0.0;
  for (Eigen::Index l = 0; l < q.size(); ++l) {
    const double ql = q(l);
    total -= s.active(static_cast<std::size_t>(l)) ? std::log(std::max(ql, 1e-12))
                                                   : std::log(std::max(1.0 - ql, 1e-12));
  }
  return total;
}

struct Gradients {
  Eigen::MatrixXd w_hidden;
  Eigen::VectorXd b_hidden;
  Eigen::MatrixXd w_out;
  Eigen::VectorXd b_out;

  static Gradients zeros_like(const MlpModel& m) {
    Gradients g;
    g.w_hidden = Eigen::MatrixXd::Zero(m.hidden_dim, m.input_dim);
    g.b_hidden = Eigen::VectorXd::Zero(m.hidden_dim);
    g.w_out = Eigen::MatrixXd::Zero(m.output_dim, m.hidden_dim);
    g.b_out = Eigen::VectorXd::Zero(m.output_dim);
    return g;
  }
};

// Exact gradients of loss(forward(y), s) w.r.t. all parameters. The logistic
// + cross-entropy combination collapses the output-layer pre-activation
// gradient to (q - s).
inline Gradients backward(const MlpModel& model, const ForwardCache& cache,
                          const TopologyVector& s) {
  if (cache.revision != model.revision)
    throw StaleCacheError("forward cache does not match current model parameters");
  if (s.size() != static_cast<std::size_t>(model.output_dim))
    throw DimensionError("label length does not match model output dim");

  Eigen::VectorXd delta_out(model.output_dim);
  for (int l = 0; l < model.output_dim; ++l)
    delta_out(l) = cache.q(l) - (s.active(static_cast<std::size_t>(l)) ? 1.0 : 0.0);

  Gradients g;
  g.w_out = delta_out * cache.hidden_act.transpose();
  g.b_out = delta_out;
  Eigen::VectorXd delta_hidden = model.w_out.transpose() * delta_out;
  for (int h = 0; h < model.hidden_dim; ++h)
    if (cache.hidden_pre(h) <= 0.0) delta_hidden(h) = 0.0;
  g.w_hidden = delta_hidden * cache.normalized_input.transpose();
  g.b_hidden = delta_hidden;
  return g;
}

// --- batched paths (columns are samples) ---

struct BatchForward {
  Eigen::MatrixXd hidden_pre;  // H x B
  Eigen::MatrixXd hidden_act;  // H x B
  Eigen::MatrixXd q;           // L x B
};

// Input columns must already be normalized.
inline BatchForward forward_batch_normalized(const MlpModel& model,
                                             const Eigen::Ref<const Eigen::MatrixXd>& xn) {
  BatchForward f;
  f.hidden_pre = (model.w_hidden * xn).colwise() + model.b_hidden;
  f.hidden_act = f.hidden_pre.cwiseMax(0.0);
  f.q = ((model.w_out * f.hidden_act).colwise() + model.b_out)
            .unaryExpr([](double z) { return logistic(z); });
  return f;
}

inline Eigen::MatrixXd normalize_features(const MlpModel& model,
                                          const Eigen::Ref<const Eigen::MatrixXd>& x) {
  if (x.rows() != model.input_dim) throw DimensionError("feature rows != model input dim");
  return (x.colwise() - model.feature_mean).array().colwise() / model.feature_std.array();
}

// Mean-over-batch gradients and mean per-sample loss. labels is sample-major
// (L bytes per column of xn).
inline std::pair<Gradients, double> backward_batch_normalized(
    const MlpModel& model, const Eigen::Ref<const Eigen::MatrixXd>& xn,
    const BatchForward& fwd, const std::uint8_t* labels) {
  const auto batch = xn.cols();
  const int L = model.output_dim;

  Eigen::MatrixXd delta_out = fwd.q;
  double total_loss = 0.0;
  for (Eigen::Index c = 0; c < batch; ++c) {
    const std::uint8_t* row = labels + static_cast<std::size_t>(c) * static_cast<std::size_t>(L);
    for (int l = 0; l < L; ++l) {
      const double ql = fwd.q(l, c);
      if (row[l]) {
        total_loss -= std::log(std::max(ql, 1e-12));
        delta_out(l, c) -= 1.0;
      } else {
        total_loss -= std::log(std::max(1.0 - ql, 1e-12));
      }
    }
  }

  const double inv_b = 1.0 / static_cast<double>(batch);
  Gradients g;
  g.w_out = delta_out * fwd.hidden_act.transpose() * inv_b;
  g.b_out = delta_out.rowwise().sum() * inv_b;
  Eigen::MatrixXd delta_hidden = model.w_out.transpose() * delta_out;
  delta_hidden = (fwd.hidden_pre.array() > 0.0).select(delta_hidden, 0.0);
  g.w_hidden = delta_hidden * xn.transpose() * inv_b;
  g.b_hidden = delta_hidden.rowwise().sum() * inv_b;
  return {std::move(g), total_loss * inv_b};
}

// --- persistence ---

inline constexpr std::uint32_t kModelFormatVersion = 1;

inline void save_model(const MlpModel& m, std::ostream& out) {
  nlohmann::json header{{"format_version", kModelFormatVersion},
                        {"input_dim", m.input_dim},
                        {"hidden_dim", m.hidden_dim},
                        {"output_dim", m.output_dim},
                        {"seed", m.seed},
                        {"grid_fingerprint", to_hex(m.grid_fingerprint)}};
  write_string_u32(out, header.dump());

  auto write_array = [&out](const double* data, std::size_t n) {
    write_le<std::uint64_t>(out, n);
    write_bytes(out, data, n * sizeof(double));
  };
  write_array(m.feature_mean.data(), static_cast<std::size_t>(m.feature_mean.size()));
  write_array(m.feature_std.data(), static_cast<std::size_t>(m.feature_std.size()));
  // Weight matrices are stored row-major.
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w1 = m.w_hidden;
  write_array(w1.data(), static_cast<std::size_t>(w1.size()));
  write_array(m.b_hidden.data(), static_cast<std::size_t>(m.b_hidden.size()));
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w2 = m.w_out;
  write_array(w2.data(), static_cast<std::size_t>(w2.size()));
  write_array(m.b_out.data(), static_cast<std::size_t>(m.b_out.size()));
}

inline void save_model(const MlpModel& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  save_model(m, out);
  out.flush();
  if (!out) throw IoError("write failed: " + path);
}

inline MlpModel load_model(std::istream& in) {
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(read_string_u32(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(std::string("corrupt model header: ") + e.what());
  }
  const auto version = header.at("format_version").get<std::uint32_t>();
  if (version != kModelFormatVersion)
    throw IoError("unsupported model format version " + std::to_string(version));

  MlpModel m = MlpModel::zeros(header.at("input_dim").get<int>(),
                               header.at("hidden_dim").get<int>(),
                               header.at("output_dim").get<int>());
  m.seed = header.at("seed").get<std::uint64_t>();
  const std::string fp_hex = header.at("grid_fingerprint").get<std::string>();
  if (fp_hex.size() != 64) throw IoError("corrupt model header: bad fingerprint length");
  for (std::size_t i = 0; i < 32; ++i)
    m.grid_fingerprint[i] =
        static_cast<std::uint8_t>(std::stoul(fp_hex.substr(2 * i, 2), nullptr, 16));

  auto read_array = [&in](double* data, std::size_t expect) {
    const auto n = read_le<std::uint64_t>(in);
    if (n != expect)
      throw IoError("model array length " + std::to_string(n) + " != expected " +
                    std::to_string(expect));
    read_bytes(in, data, n * sizeof(double));
  };
  read_array(m.feature_mean.data(), static_cast<std::size_t>(m.input_dim));
  read_array(m.feature_std.data(), static_cast<std::size_t>(m.input_dim));
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w1(m.hidden_dim,
                                                                            m.input_dim);
  read_array(w1.data(), static_cast<std::size_t>(w1.size()));
  m.w_hidden = w1;
  read_array(m.b_hidden.data(), static_cast<std::size_t>(m.hidden_dim));
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w2(m.output_dim,
                                                                            m.hidden_dim);
  read_array(w2.data(), static_cast<std::size_t>(w2.size()));
  m.w_out = w2;
  read_array(m.b_out.data(), static_cast<std::size_t>(m.output_dim));
  if (in.peek() != std::char_traits<char>::eof())
    throw IoError("corrupt model file: trailing bytes");
  ++m.revision;
  return m;
}

inline MlpModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return load_model(in);
}

}  // namespace gridinfer
