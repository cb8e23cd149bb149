// gridinfer: simulate multi-line outages under the DC power-flow model,
// generate labeled datasets, train a shared-feature classifier offline, and
// identify line statuses from one snapshot of noisy measurements.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gridinfer/gridinfer.hpp"

namespace {

using nlohmann::json;

// JSON config files: any long flag may be supplied as a key, with
// subcommands as nested objects. Command-line values win.
class ConfigJson : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    json j;
    for (const CLI::Option* opt : app->get_options({})) {
      if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
      const std::string& name = opt->get_lnames()[0];
      if (opt->get_type_size() != 0) {
        if (opt->count() == 1)
          j[name] = opt->results().at(0);
        else if (opt->count() > 1)
          j[name] = opt->results();
        else if (default_also && !opt->get_default_str().empty())
          j[name] = opt->get_default_str();
      } else if (opt->count() > 0) {
        j[name] = true;
      }
    }
    for (const CLI::App* sub : app->get_subcommands({}))
      j[sub->get_name()] = json::parse(to_config(sub, default_also, false, ""));
    return j.dump(2);
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json j;
    try {
      input >> j;
    } catch (const json::parse_error& e) {
      throw CLI::FileError(std::string("config is not valid JSON: ") + e.what());
    }
    return walk(j, "", {});
  }

 private:
  static std::string scalar_to_string(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number_unsigned()) return std::to_string(v.get<unsigned long long>());
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    if (v.is_number_float()) {
      char buf[40];
      std::snprintf(buf, sizeof(buf), "%.17g", v.get<double>());
      return buf;
    }
    throw CLI::ConversionError("unsupported JSON value in config");
  }

  std::vector<CLI::ConfigItem> walk(const json& j, const std::string& name,
                                    std::vector<std::string> prefix) const {
    std::vector<CLI::ConfigItem> out;
    if (j.is_object()) {
      auto next_prefix = prefix;
      if (!name.empty()) next_prefix.push_back(name);
      for (auto it = j.begin(); it != j.end(); ++it) {
        auto sub = walk(it.value(), it.key(), next_prefix);
        out.insert(out.end(), sub.begin(), sub.end());
      }
    } else if (!name.empty()) {
      CLI::ConfigItem item;
      item.name = name;
      item.parents = prefix;
      if (j.is_array())
        for (const auto& el : j) item.inputs.push_back(scalar_to_string(el));
      else
        item.inputs.push_back(scalar_to_string(j));
      out.push_back(std::move(item));
    } else {
      throw CLI::ConversionError("top-level config value must be an object");
    }
    return out;
  }
};

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw gridinfer::IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double parse_fraction(const std::string& tok) {
  auto slash = tok.find('/');
  if (slash == std::string::npos) return std::stod(tok);
  const double num = std::stod(tok.substr(0, slash));
  const double den = std::stod(tok.substr(slash + 1));
  if (den == 0.0) throw gridinfer::ValidationError("fraction with zero denominator: " + tok);
  return num / den;
}

std::vector<double> parse_split(const std::string& spec) {
  std::vector<double> fractions;
  std::stringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ',')) fractions.push_back(parse_fraction(tok));
  if (fractions.size() != 3)
    throw gridinfer::ValidationError("--split must give three fractions, e.g. 2/3,1/6,1/6");
  return fractions;
}

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

// ---- convert ----

struct ConvertArgs {
  std::string input;
  std::string output;
  std::string manifest;
};

int run_convert(const ConvertArgs& a) {
  Timer t;
  gridinfer::RunManifest manifest;
  manifest.subcommand = "convert";
  manifest.config = json{{"input", a.input}, {"output", a.output}};

  gridinfer::CaseData c = gridinfer::load_case_auto(read_text_file(a.input));
  gridinfer::Grid reduced = gridinfer::reduce_grid(c.grid);

  std::ofstream out(a.output, std::ios::trunc | std::ios::binary);
  if (!out) throw gridinfer::IoError("cannot open " + a.output + " for writing");
  out << gridinfer::grid_to_case_json(c.grid);
  out.close();

  std::printf("buses=%d raw_branches=%d merged_branches=%d switchable=%d\n", c.grid.bus_count(),
              c.raw_branch_count, c.grid.branch_count(), reduced.switchable_count());

  manifest.add_input(a.input);
  manifest.add_output(a.output);
  manifest.metrics = json{{"buses", c.grid.bus_count()},
                          {"raw_branches", c.raw_branch_count},
                          {"merged_branches", c.grid.branch_count()},
                          {"switchable", reduced.switchable_count()},
                          {"grid_fingerprint", gridinfer::to_hex(gridinfer::grid_fingerprint(reduced))}};
  manifest.wall_times_s["total"] = t.seconds();
  manifest.save(a.manifest.empty() ? a.output + ".manifest.json" : a.manifest);
  return 0;
}

// ---- generate ----

struct GenerateArgs {
  std::string case_path;
  std::string output;
  std::string manifest;
  std::uint64_t count = 0;
  double p_out = 0.1;
  double theta_max = 0.2 * std::numbers::pi;
  double noise_std_deg = 0.01;
  std::vector<int> observed_buses;  // external ids
  int observe_top = 0;
  bool no_injections = false;
  std::uint64_t seed = 0;
  int max_rejections = 10000;
  int workers = 1;
};

int run_generate(const GenerateArgs& a) {
  Timer t;
  gridinfer::CaseData c = gridinfer::load_case_auto(read_text_file(a.case_path));
  gridinfer::Grid grid = gridinfer::reduce_grid(c.grid);

  gridinfer::GenConfig config;
  config.p_out = a.p_out;
  config.theta_max = a.theta_max;
  config.noise_std_deg = a.noise_std_deg;
  config.injection_measured = !a.no_injections;
  config.seed = a.seed;
  config.max_rejections_per_sample = a.max_rejections;
  if (!a.observed_buses.empty() && a.observe_top > 0)
    throw gridinfer::ValidationError("--observed-buses and --observe-top are mutually exclusive");
  if (!a.observed_buses.empty()) {
    for (int ext : a.observed_buses) {
      const int internal = grid.internal_bus(ext);
      if (internal < 0)
        throw gridinfer::ValidationError("observed bus " + std::to_string(ext) + " is not a bus id");
      config.observed_buses.push_back(internal);
    }
  } else if (a.observe_top > 0) {
    config.observed_buses = gridinfer::default_pmu_subset(grid, a.observe_top);
  }

  gridinfer::GenReport report;
  gridinfer::Dataset d = gridinfer::generate_dataset(grid, config, a.count, a.workers, &report);
  gridinfer::save_dataset(d, a.output);

  std::printf("samples=%zu feature_len=%d label_len=%d\n", d.count(), d.feature_len(),
              d.label_len());
  std::printf("rejections=%zu accepted_outage_mean=%.4f distinct_fraction=%.6f\n",
              report.total_rejections, report.accepted_outage_mean, report.distinct_fraction);

  gridinfer::RunManifest manifest;
  manifest.subcommand = "generate";
  manifest.config = d.config.to_json();
  manifest.config["case"] = a.case_path;
  manifest.config["count"] = a.count;
  manifest.config["workers"] = a.workers;
  manifest.config["output"] = a.output;
  manifest.config["grid_fingerprint"] = gridinfer::to_hex(d.grid_fingerprint);
  manifest.add_input(a.case_path);
  manifest.add_output(a.output);
  manifest.metrics = json{{"rejections", report.total_rejections},
                          {"accepted_outage_mean", report.accepted_outage_mean},
                          {"distinct_fraction", report.distinct_fraction}};
  manifest.wall_times_s["total"] = t.seconds();
  manifest.save(a.manifest.empty() ? a.output + ".manifest.json" : a.manifest);
  return 0;
}

// ---- train ----

struct TrainArgs {
  std::string dataset;
  std::string output;
  std::string curves;
  std::string per_line_csv;
  std::string manifest;
  std::string split = "2/3,1/6,1/6";
  int hidden = 300;
  double learning_rate = 0.01;
  double momentum = 0.9;
  int batch_size = 128;
  int epochs = 100;
  std::uint64_t seed = 0;
  std::uint64_t shuffle_seed = 0;
  int log_every = 1;
};

int run_train(const TrainArgs& a) {
  Timer t;
  gridinfer::Dataset d = gridinfer::load_dataset(a.dataset);
  auto splits = gridinfer::split_dataset(d, parse_split(a.split));

  gridinfer::MlpModel model =
      gridinfer::init_model(d.feature_len(), a.hidden, d.label_len(), a.seed);
  model.grid_fingerprint = d.grid_fingerprint;
  gridinfer::fit_normalization(model, splits[0].features);

  gridinfer::TrainConfig config;
  config.learning_rate = a.learning_rate;
  config.momentum = a.momentum;
  config.batch_size = a.batch_size;
  config.epochs = a.epochs;
  config.shuffle_seed = a.shuffle_seed;
  config.log_every = a.log_every;

  Timer train_timer;
  gridinfer::TrainResult result =
      gridinfer::train(std::move(model), splits[0], splits[1], splits[2], config);
  const double train_seconds = train_timer.seconds();

  gridinfer::save_model(result.model, a.output);
  if (!a.curves.empty()) gridinfer::write_curves_csv(result.history, a.curves);

  gridinfer::Metrics final_metrics = gridinfer::evaluate(result.model, splits[2]);
  if (!a.per_line_csv.empty()) {
    std::ofstream out(a.per_line_csv, std::ios::trunc);
    if (!out) throw gridinfer::IoError("cannot open " + a.per_line_csv + " for writing");
    gridinfer::write_per_line_csv(final_metrics, out);
  }

  std::printf("train=%zu val=%zu test=%zu epochs=%d\n", splits[0].count(), splits[1].count(),
              splits[2].count(), a.epochs);
  std::printf("test_accuracy=%.6f avg_misidentified=%.4f missed_detection_rate=%.4f "
              "false_alarm_rate=%.6f\n",
              final_metrics.per_line_accuracy, final_metrics.avg_misidentified,
              final_metrics.missed_detection_rate, final_metrics.false_alarm_rate);

  gridinfer::RunManifest manifest;
  manifest.subcommand = "train";
  manifest.config = config.to_json();
  manifest.config["dataset"] = a.dataset;
  manifest.config["split"] = a.split;
  manifest.config["hidden_dim"] = a.hidden;
  manifest.config["init_seed"] = a.seed;
  manifest.config["output"] = a.output;
  manifest.config["train_samples"] = splits[0].count();
  manifest.config["val_samples"] = splits[1].count();
  manifest.config["test_samples"] = splits[2].count();
  manifest.config["grid_fingerprint"] = gridinfer::to_hex(d.grid_fingerprint);
  manifest.add_input(a.dataset);
  manifest.add_output(a.output);
  if (!a.curves.empty()) manifest.add_output(a.curves);
  manifest.metrics = final_metrics.to_json();
  manifest.wall_times_s["train"] = train_seconds;
  manifest.wall_times_s["total"] = t.seconds();
  manifest.save(a.manifest.empty() ? a.output + ".manifest.json" : a.manifest);
  return 0;
}

// ---- infer ----

struct InferArgs {
  std::string model;
  std::string input;  // "-" for stdin
  std::string manifest;
};

Eigen::VectorXd parse_measurements(const std::string& text) {
  std::vector<double> values;
  std::string trimmed = text;
  std::size_t first = trimmed.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) throw gridinfer::ParseError("empty measurement input");
  if (trimmed[first] == '[' || trimmed[first] == '{') {
    json j = json::parse(trimmed);
    if (j.is_object()) j = j.at("features");
    values = j.get<std::vector<double>>();
  } else {
    std::string normalized = trimmed;
    for (char& ch : normalized)
      if (ch == ',') ch = ' ';
    std::istringstream ss(normalized);
    double v;
    while (ss >> v) values.push_back(v);
    if (!ss.eof()) throw gridinfer::ParseError("malformed measurement row");
  }
  return Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

int run_infer(const InferArgs& a) {
  Timer t;
  gridinfer::MlpModel model = gridinfer::load_model(a.model);

  std::string text;
  if (a.input == "-") {
    std::ostringstream ss;
    ss << std::cin.rdbuf();
    text = ss.str();
  } else {
    text = read_text_file(a.input);
  }
  Eigen::VectorXd y = parse_measurements(text);
  if (y.size() != model.input_dim)
    throw gridinfer::DimensionError("measurement vector has " + std::to_string(y.size()) +
                                    " entries but the model expects K = " +
                                    std::to_string(model.input_dim));

  gridinfer::InferResult r = gridinfer::infer(model, y);

  json out;
  out["marginals"] = std::vector<double>(r.marginals.data(), r.marginals.data() + r.marginals.size());
  out["decisions"] = r.decisions.statuses;
  out["elapsed_us"] = r.elapsed_us;
  std::cout << out.dump() << "\n";

  gridinfer::RunManifest manifest;
  manifest.subcommand = "infer";
  manifest.config = json{{"model", a.model}, {"input", a.input}};
  manifest.add_input(a.model);
  if (a.input != "-") manifest.add_input(a.input);
  manifest.metrics = json{{"elapsed_us", r.elapsed_us}};
  manifest.wall_times_s["total"] = t.seconds();
  manifest.save(a.manifest.empty() ? "infer.manifest.json" : a.manifest);
  return 0;
}

// ---- export ----

struct ExportArgs {
  std::string dataset;
  std::string output;
  std::string manifest;
};

int run_export(const ExportArgs& a) {
  Timer t;
  gridinfer::Dataset d = gridinfer::load_dataset(a.dataset);
  gridinfer::export_dataset_csv(d, a.output);
  std::printf("samples=%zu columns=%d\n", d.count(), d.label_len() + d.feature_len());

  gridinfer::RunManifest manifest;
  manifest.subcommand = "export";
  manifest.config = json{{"dataset", a.dataset}, {"output", a.output}};
  manifest.add_input(a.dataset);
  manifest.add_output(a.output);
  manifest.wall_times_s["total"] = t.seconds();
  manifest.save(a.manifest.empty() ? a.output + ".manifest.json" : a.manifest);
  return 0;
}

// ---- report ----

struct ReportArgs {
  std::vector<std::string> manifests;
  std::string output;  // CSV; stdout if empty
  std::string json_output;
};

int run_report(const ReportArgs& a) {
  struct Row {
    std::string path;
    int hidden_dim = 0;
    std::uint64_t train_samples = 0;
    int epochs = 0;
    double test_accuracy = 0.0;
    double avg_misidentified = 0.0;
    std::string fingerprint;
    bool grid_mismatch = false;
  };
  std::vector<Row> rows;
  int warnings = 0;

  for (const std::string& path : a.manifests) {
    gridinfer::RunManifest m = gridinfer::RunManifest::load(path);
    if (m.subcommand != "train") {
      std::fprintf(stderr, "warning: %s is a '%s' manifest, skipping\n", path.c_str(),
                   m.subcommand.c_str());
      ++warnings;
      continue;
    }
    Row r;
    r.path = path;
    r.hidden_dim = m.config.value("hidden_dim", 0);
    r.train_samples = m.config.value("train_samples", std::uint64_t{0});
    r.epochs = m.config.value("epochs", 0);
    r.test_accuracy = m.metrics.value("per_line_accuracy", 0.0);
    r.avg_misidentified = m.metrics.value("avg_misidentified", 0.0);
    r.fingerprint = m.config.value("grid_fingerprint", std::string());
    rows.push_back(std::move(r));
  }

  if (!rows.empty()) {
    const std::string& reference_fp = rows.front().fingerprint;
    for (Row& r : rows)
      if (r.fingerprint != reference_fp) {
        r.grid_mismatch = true;
        ++warnings;
      }
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& x, const Row& y) {
    if (x.hidden_dim != y.hidden_dim) return x.hidden_dim < y.hidden_dim;
    return x.train_samples < y.train_samples;
  });

  std::ostringstream csv;
  csv << "hidden_dim,train_samples,epochs,test_accuracy,avg_misidentified,grid_fingerprint,"
         "grid_mismatch,manifest\n";
  json jrows = json::array();
  for (const Row& r : rows) {
    csv << r.hidden_dim << "," << r.train_samples << "," << r.epochs << "," << r.test_accuracy
        << "," << r.avg_misidentified << "," << r.fingerprint.substr(0, 12) << ","
        << (r.grid_mismatch ? 1 : 0) << "," << r.path << "\n";
    jrows.push_back(json{{"hidden_dim", r.hidden_dim},
                         {"train_samples", r.train_samples},
                         {"epochs", r.epochs},
                         {"test_accuracy", r.test_accuracy},
                         {"avg_misidentified", r.avg_misidentified},
                         {"grid_fingerprint", r.fingerprint},
                         {"grid_mismatch", r.grid_mismatch},
                         {"manifest", r.path}});
  }

  if (a.output.empty()) {
    std::cout << csv.str();
  } else {
    std::ofstream out(a.output, std::ios::trunc);
    if (!out) throw gridinfer::IoError("cannot open " + a.output + " for writing");
    out << csv.str();
  }
  if (!a.json_output.empty()) {
    std::ofstream out(a.json_output, std::ios::trunc);
    if (!out) throw gridinfer::IoError("cannot open " + a.json_output + " for writing");
    out << json{{"rows", jrows}, {"warnings", warnings}}.dump(2) << "\n";
  }
  if (warnings > 0) std::fprintf(stderr, "%d warning(s)\n", warnings);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DC power-flow outage simulation, dataset generation, classifier training, "
               "and real-time line-status identification"};
  app.set_version_flag("--version", GRIDINFER_VERSION);
  app.config_formatter(std::make_shared<ConfigJson>());
  app.set_config("--config", "", "JSON config file; command-line flags take precedence");
  app.require_subcommand(1);

  ConvertArgs convert_args;
  auto* convert = app.add_subcommand("convert", "Convert a case file to canonical JSON");
  convert->add_option("input", convert_args.input, "MATPOWER-style or JSON case file")->required();
  convert->add_option("output", convert_args.output, "output JSON case path")->required();
  convert->add_option("--manifest", convert_args.manifest, "manifest path");

  GenerateArgs gen_args;
  auto* generate = app.add_subcommand("generate", "Generate a labeled Monte Carlo dataset");
  generate->add_option("--case", gen_args.case_path, "case file (JSON or MATPOWER-style)")
      ->required();
  generate->add_option("--count", gen_args.count, "number of samples")->required();
  generate->add_option("--p-out", gen_args.p_out, "per-line outage probability");
  generate->add_option("--theta-max", gen_args.theta_max, "uniform angle upper bound (radians)");
  generate->add_option("--noise-std-deg", gen_args.noise_std_deg, "PMU noise std (degrees)");
  generate->add_option("--observed-buses", gen_args.observed_buses,
                       "external bus ids with angle measurements (default: all)");
  generate->add_option("--observe-top", gen_args.observe_top,
                       "observe the N highest-degree buses instead of all");
  generate->add_flag("--no-injections", gen_args.no_injections,
                     "omit injection measurements from features");
  generate->add_option("--seed", gen_args.seed, "RNG seed");
  generate->add_option("--max-rejections", gen_args.max_rejections,
                       "per-sample connectivity rejection budget");
  generate->add_option("--workers", gen_args.workers, "generation threads");
  generate->add_option("--output", gen_args.output, "dataset output path")->required();
  generate->add_option("--manifest", gen_args.manifest, "manifest path");

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train a classifier on a generated dataset");
  train->add_option("--dataset", train_args.dataset, "dataset path")->required();
  train->add_option("--output", train_args.output, "model output path")->required();
  train->add_option("--curves", train_args.curves, "training-curve CSV path");
  train->add_option("--per-line-csv", train_args.per_line_csv, "per-line metrics CSV path");
  train->add_option("--split", train_args.split, "train,val,test fractions (default 2/3,1/6,1/6)");
  train->add_option("--hidden", train_args.hidden, "hidden layer width");
  train->add_option("--lr", train_args.learning_rate, "learning rate");
  train->add_option("--momentum", train_args.momentum, "Nesterov momentum");
  train->add_option("--batch", train_args.batch_size, "mini-batch size");
  train->add_option("--epochs", train_args.epochs, "training epochs");
  train->add_option("--seed", train_args.seed, "weight init seed");
  train->add_option("--shuffle-seed", train_args.shuffle_seed, "epoch shuffle seed");
  train->add_option("--log-every", train_args.log_every, "epochs between metric snapshots");
  train->add_option("--manifest", train_args.manifest, "manifest path");

  InferArgs infer_args;
  auto* infer = app.add_subcommand("infer", "One-shot inference from a measurement snapshot");
  infer->add_option("--model", infer_args.model, "trained model path")->required();
  infer->add_option("--input", infer_args.input, "measurement vector (JSON array, CSV row, or -)")
      ->required();
  infer->add_option("--manifest", infer_args.manifest, "manifest path");

  ExportArgs export_args;
  auto* exp = app.add_subcommand("export", "Export a dataset to CSV");
  exp->add_option("--dataset", export_args.dataset, "dataset path")->required();
  exp->add_option("--output", export_args.output, "CSV output path")->required();
  exp->add_option("--manifest", export_args.manifest, "manifest path");

  ReportArgs report_args;
  auto* report = app.add_subcommand("report", "Join run manifests into a sweep table");
  report->add_option("manifests", report_args.manifests, "train manifest paths");
  report->add_option("--output", report_args.output, "CSV output path (default stdout)");
  report->add_option("--json", report_args.json_output, "JSON output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (convert->parsed()) return run_convert(convert_args);
    if (generate->parsed()) return run_generate(gen_args);
    if (train->parsed()) return run_train(train_args);
    if (infer->parsed()) return run_infer(infer_args);
    if (exp->parsed()) return run_export(export_args);
    if (report->parsed()) return run_report(report_args);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
