#pragma once

#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "gridinfer/errors.hpp"
#include "gridinfer/hash.hpp"
#include "gridinfer/version.hpp"

namespace gridinfer {

// Self-contained record of one CLI run: resolved configuration, input/output
// file hashes, timings, and final metrics. Re-running with the recorded
// configuration reproduces the recorded output hashes.
struct RunManifest {
  std::string tool_version = GRIDINFER_VERSION;
  std::string subcommand;
  nlohmann::json config = nlohmann::json::object();
  std::map<std::string, std::string> input_hashes;
  std::map<std::string, std::string> output_hashes;
  std::map<std::string, double> wall_times_s;
  nlohmann::json metrics = nlohmann::json::object();

  void add_input(const std::string& path) { input_hashes[path] = to_hex(sha256_file(path)); }
  void add_output(const std::string& path) { output_hashes[path] = to_hex(sha256_file(path)); }

  nlohmann::json to_json() const {
    return nlohmann::json{{"tool_version", tool_version},
                          {"subcommand", subcommand},
                          {"config", config},
                          {"input_hashes", input_hashes},
                          {"output_hashes", output_hashes},
                          {"wall_times_s", wall_times_s},
                          {"metrics", metrics}};
  }

  static RunManifest from_json(const nlohmann::json& j) {
    RunManifest m;
    m.tool_version = j.at("tool_version").get<std::string>();
    m.subcommand = j.at("subcommand").get<std::string>();
    m.config = j.at("config");
    m.input_hashes = j.at("input_hashes").get<std::map<std::string, std::string>>();
    m.output_hashes = j.at("output_hashes").get<std::map<std::string, std::string>>();
    m.wall_times_s = j.at("wall_times_s").get<std::map<std::string, double>>();
    m.metrics = j.at("metrics");
    return m;
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << to_json().dump(2) << "\n";
    if (!out) throw IoError("write failed: " + path);
  }

  static RunManifest load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::parse_error& e) {
      throw IoError("corrupt manifest " + path + ": " + e.what());
    }
    return from_json(j);
  }
};

}  // namespace gridinfer
