#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <ostream>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "gridinfer/binary_io.hpp"
#include "gridinfer/errors.hpp"
#include "gridinfer/grid.hpp"

namespace gridinfer {

// Parameters of the Monte Carlo generative model.
struct GenConfig {
  double p_out = 0.0;                      // per-line outage probability
  double theta_max = 0.2 * std::numbers::pi;  // uniform angle upper bound, radians
  double noise_std_deg = 0.01;             // PMU angle noise std, degrees
  std::vector<int> observed_buses;         // internal bus ids, sorted; empty = all
  bool injection_measured = true;
  std::uint64_t seed = 0;
  int max_rejections_per_sample = 10000;

  double noise_std_rad() const { return noise_std_deg * std::numbers::pi / 180.0; }

  void validate() const {
    if (!(p_out >= 0.0 && p_out < 1.0)) throw ValidationError("p_out must be in [0, 1)");
    if (!(theta_max > 0.0)) throw ValidationError("theta_max must be positive");
    if (!(noise_std_deg >= 0.0)) throw ValidationError("noise_std_deg must be nonnegative");
    if (max_rejections_per_sample <= 0)
      throw ValidationError("max_rejections_per_sample must be positive");
    if (!injection_measured && observed_buses.empty())
      throw ValidationError("observed_buses must be nonempty when injections are not measured");
  }

  // Fills in the observed set explicitly and checks it against the grid.
  GenConfig normalized(const Grid& grid) const {
    GenConfig c = *this;
    c.validate();
    if (c.observed_buses.empty()) {
      c.observed_buses.resize(static_cast<std::size_t>(grid.bus_count()));
      for (int i = 0; i < grid.bus_count(); ++i) c.observed_buses[static_cast<std::size_t>(i)] = i;
    } else {
      std::sort(c.observed_buses.begin(), c.observed_buses.end());
      if (std::adjacent_find(c.observed_buses.begin(), c.observed_buses.end()) !=
          c.observed_buses.end())
        throw ValidationError("observed_buses contains duplicates");
      if (c.observed_buses.front() < 0 || c.observed_buses.back() >= grid.bus_count())
        throw ValidationError("observed_buses contains an invalid bus index");
    }
    return c;
  }

  // Feature length K: observed angles, then injections at all buses.
  int feature_len(const Grid& grid) const {
    int k = observed_buses.empty() ? grid.bus_count() : static_cast<int>(observed_buses.size());
    if (injection_measured) k += grid.bus_count();
    return k;
  }

  nlohmann::json to_json() const {
    return nlohmann::json{{"p_out", p_out},
                          {"theta_max", theta_max},
                          {"noise_std_deg", noise_std_deg},
                          {"observed_buses", observed_buses},
                          {"injection_measured", injection_measured},
                          {"seed", seed},
                          {"max_rejections_per_sample", max_rejections_per_sample}};
  }

  static GenConfig from_json(const nlohmann::json& j) {
    GenConfig c;
    c.p_out = j.at("p_out").get<double>();
    c.theta_max = j.at("theta_max").get<double>();
    c.noise_std_deg = j.at("noise_std_deg").get<double>();
    c.observed_buses = j.at("observed_buses").get<std::vector<int>>();
    c.injection_measured = j.at("injection_measured").get<bool>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.max_rejections_per_sample = j.at("max_rejections_per_sample").get<int>();
    return c;
  }

  bool operator==(const GenConfig&) const = default;
};

// One labeled pair (s, y).
struct Sample {
  TopologyVector topology;
  Eigen::VectorXd features;
};

// Column-per-sample feature matrix plus row-major label bytes. The switchable
// mask of the generating grid rides along so consumers can score only the
// lines that can actually fail.
struct Dataset {
  Digest grid_fingerprint{};
  GenConfig config;
  std::vector<std::uint8_t> switchable;  // length L
  Eigen::MatrixXd features;              // K x I
  std::vector<std::uint8_t> labels;      // I * L, sample-major

  std::size_t count() const { return static_cast<std::size_t>(features.cols()); }
  int feature_len() const { return static_cast<int>(features.rows()); }
  int label_len() const { return static_cast<int>(switchable.size()); }

  const std::uint8_t* label_row(std::size_t i) const {
    return labels.data() + i * static_cast<std::size_t>(label_len());
  }

  TopologyVector topology(std::size_t i) const {
    const std::uint8_t* row = label_row(i);
    return TopologyVector(std::vector<std::uint8_t>(row, row + label_len()));
  }

  bool operator==(const Dataset& o) const {
    return grid_fingerprint == o.grid_fingerprint && config == o.config &&
           switchable == o.switchable && labels == o.labels &&
           features.rows() == o.features.rows() && features.cols() == o.features.cols() &&
           std::memcmp(features.data(), o.features.data(),
                       sizeof(double) * static_cast<std::size_t>(features.size())) == 0;
  }
};

namespace detail {

inline std::vector<std::uint8_t> pack_bits(const std::uint8_t* bits, int n) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>((n + 7) / 8), 0);
  for (int i = 0; i < n; ++i)
    if (bits[i]) out[static_cast<std::size_t>(i / 8)] |= static_cast<std::uint8_t>(1u << (i % 8));
  return out;
}

inline void unpack_bits(const std::vector<std::uint8_t>& packed, std::uint8_t* bits, int n) {
  for (int i = 0; i < n; ++i)
    bits[i] = (packed[static_cast<std::size_t>(i / 8)] >> (i % 8)) & 1u;
}

inline nlohmann::json dataset_meta_json(const Dataset& d) {
  nlohmann::json j = d.config.to_json();
  j["switchable_mask"] = d.switchable;
  return j;
}

}  // namespace detail

inline constexpr char kDatasetMagic[4] = {'G', 'I', 'D', 'S'};
inline constexpr std::uint16_t kDatasetFormatVersion = 1;

inline void save_dataset(const Dataset& d, std::ostream& out) {
  write_bytes(out, kDatasetMagic, 4);
  write_le<std::uint16_t>(out, kDatasetFormatVersion);
  write_bytes(out, d.grid_fingerprint.data(), d.grid_fingerprint.size());
  write_string_u32(out, detail::dataset_meta_json(d).dump());
  write_le<std::uint64_t>(out, d.count());
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(d.feature_len()));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(d.label_len()));
  const int L = d.label_len();
  for (std::size_t i = 0; i < d.count(); ++i) {
    auto packed = detail::pack_bits(d.label_row(i), L);
    write_bytes(out, packed.data(), packed.size());
    write_bytes(out, d.features.col(static_cast<Eigen::Index>(i)).data(),
                sizeof(double) * static_cast<std::size_t>(d.feature_len()));
  }
}

inline void save_dataset(const Dataset& d, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  save_dataset(d, out);
  out.flush();
  if (!out) throw IoError("write failed: " + path);
}

// expected_fingerprint, when given, must match the stored one.
inline Dataset load_dataset(std::istream& in, const Digest* expected_fingerprint = nullptr) {
  char magic[4];
  read_bytes(in, magic, 4);
  if (std::memcmp(magic, kDatasetMagic, 4) != 0) throw IoError("not a dataset file (bad magic)");
  const auto version = read_le<std::uint16_t>(in);
  if (version != kDatasetFormatVersion)
    throw IoError("unsupported dataset format version " + std::to_string(version));

  Dataset d;
  read_bytes(in, d.grid_fingerprint.data(), d.grid_fingerprint.size());
  if (expected_fingerprint && *expected_fingerprint != d.grid_fingerprint)
    throw IoError("dataset grid fingerprint mismatch: dataset was generated from a different grid");

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_string_u32(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(std::string("corrupt dataset metadata: ") + e.what());
  }
  d.config = GenConfig::from_json(meta);
  d.switchable = meta.at("switchable_mask").get<std::vector<std::uint8_t>>();

  const auto count = read_le<std::uint64_t>(in);
  const auto feature_len = read_le<std::uint32_t>(in);
  const auto label_len = read_le<std::uint32_t>(in);
  if (label_len != d.switchable.size())
    throw IoError("corrupt dataset: label length disagrees with switchable mask");

  d.features.resize(feature_len, static_cast<Eigen::Index>(count));
  d.labels.resize(count * label_len);
  const std::size_t packed_len = (label_len + 7) / 8;
  std::vector<std::uint8_t> packed(packed_len);
  for (std::uint64_t i = 0; i < count; ++i) {
    read_bytes(in, packed.data(), packed_len);
    detail::unpack_bits(packed, d.labels.data() + i * label_len, static_cast<int>(label_len));
    read_bytes(in, d.features.col(static_cast<Eigen::Index>(i)).data(),
               sizeof(double) * feature_len);
  }
  // Anything left over means the writer and reader disagree about the layout.
  if (in.peek() != std::char_traits<char>::eof())
    throw IoError("corrupt dataset: trailing bytes after last sample");
  return d;
}

inline Dataset load_dataset(const std::string& path, const Digest* expected_fingerprint = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return load_dataset(in, expected_fingerprint);
}

// Disjoint contiguous splits in generation order; sizes floor(f_i * I), with
// exact products snapped to the nearest integer so that e.g. 2/3 of 300000
// yields 200000.
inline std::vector<Dataset> split_dataset(const Dataset& d, const std::vector<double>& fractions) {
  if (fractions.empty()) throw ValidationError("no split fractions given");
  double total = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw ValidationError("split fractions must be positive");
    total += f;
  }
  if (total > 1.0 + 1e-9) throw ValidationError("split fractions sum to more than 1");

  const auto I = static_cast<double>(d.count());
  std::vector<std::size_t> sizes;
  for (double f : fractions) {
    const double exact = f * I;
    const double rounded = std::round(exact);
    sizes.push_back(static_cast<std::size_t>(std::abs(exact - rounded) < 1e-6 ? rounded
                                                                              : std::floor(exact)));
  }

  std::vector<Dataset> parts;
  std::size_t offset = 0;
  for (std::size_t size : sizes) {
    Dataset part;
    part.grid_fingerprint = d.grid_fingerprint;
    part.config = d.config;
    part.switchable = d.switchable;
    part.features = d.features.middleCols(static_cast<Eigen::Index>(offset),
                                          static_cast<Eigen::Index>(size));
    const std::size_t L = static_cast<std::size_t>(d.label_len());
    part.labels.assign(d.labels.begin() + static_cast<std::ptrdiff_t>(offset * L),
                       d.labels.begin() + static_cast<std::ptrdiff_t>((offset + size) * L));
    offset += size;
    parts.push_back(std::move(part));
  }
  return parts;
}

inline double distinct_topology_fraction(const Dataset& d) {
  if (d.count() == 0) return 1.0;
  std::unordered_set<std::string> seen;
  seen.reserve(d.count() * 2);
  const int L = d.label_len();
  for (std::size_t i = 0; i < d.count(); ++i) {
    auto packed = detail::pack_bits(d.label_row(i), L);
    seen.emplace(reinterpret_cast<const char*>(packed.data()), packed.size());
  }
  return static_cast<double>(seen.size()) / static_cast<double>(d.count());
}

// Mean number of lines in outage per sample. Only switchable lines can be 0.
inline double mean_outage_count(const Dataset& d) {
  if (d.count() == 0) return 0.0;
  std::size_t zeros = 0;
  for (std::uint8_t v : d.labels) zeros += v == 0;
  return static_cast<double>(zeros) / static_cast<double>(d.count());
}

inline void export_dataset_csv(const Dataset& d, std::ostream& out) {
  const int L = d.label_len();
  const int K = d.feature_len();
  for (int l = 0; l < L; ++l) out << "s_" << l << ",";
  for (int k = 0; k < K; ++k) out << "y_" << k << (k + 1 < K ? "," : "");
  out << "\n";
  char buf[32];
  for (std::size_t i = 0; i < d.count(); ++i) {
    const std::uint8_t* row = d.label_row(i);
    for (int l = 0; l < L; ++l) out << int(row[l]) << ",";
    for (int k = 0; k < K; ++k) {
      std::snprintf(buf, sizeof(buf), "%.17g", d.features(k, static_cast<Eigen::Index>(i)));
      out << buf << (k + 1 < K ? "," : "");
    }
    out << "\n";
  }
}

inline void export_dataset_csv(const Dataset& d, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  export_dataset_csv(d, out);
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace gridinfer
